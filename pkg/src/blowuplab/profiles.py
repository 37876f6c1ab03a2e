"""Shooting for the radial profile ODEs.

Three families share the form

    v'' + (N-1)/rho v' + drift(rho) v' + F(v) = 0,   v(0) = center, v'(0) = 0

backward:  drift = -rho/2, F = e^v - 1
forward:   drift = +rho/2, F = e^v + 1
steady:    drift = 0,      F = e^v

The origin is a regular singular point, so integration starts at rho = eps
from the two-term series v = center - F(center) rho^2 / (2N).

A solution decaying like -2 log rho has a tail constant C = lim v + 2 log rho,
estimated by fitting v + 2 log rho = C + b / rho^2 on [rho_max/2, rho_max].
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

BACKWARD = "backward"
FORWARD = "forward"
STEADY = "steady"

GLOBAL_DECAY = "global_decay"
BLOWUP_IN_RHO = "blowup_in_rho"
COLLAPSE = "collapse"
OSCILLATORY = "oscillatory"
TRUNCATED = "truncated"

LAUNCH_EPS = 1e-6
BLOWUP_VALUE = 50.0
# v + 2 log rho below this means the shot left the -2 log rho family downward
COLLAPSE_VALUE = -60.0


@dataclass(frozen=True)
class ProfileFamily:
    kind: str
    dimension: int

    def __post_init__(self):
        if self.kind not in (BACKWARD, FORWARD, STEADY):
            raise ConfigurationError(f"unknown profile family {self.kind!r}")
        if isinstance(self.dimension, bool) or int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError(f"dimension must be an integer >= 1, got {self.dimension!r}")

    def forcing(self, v):
        with np.errstate(over="ignore"):
            e = np.exp(v)
        if self.kind == BACKWARD:
            return e - 1.0
        if self.kind == FORWARD:
            return e + 1.0
        return e

    def drift(self, rho):
        if self.kind == BACKWARD:
            return -0.5 * rho
        if self.kind == FORWARD:
            return 0.5 * rho
        return 0.0 * rho

    def rhs(self, rho, y):
        v, d = y
        return [d, -((self.dimension - 1) / rho + self.drift(rho)) * d - self.forcing(v)]

    def launch(self, center, eps=LAUNCH_EPS):
        """Series values (v, v') at rho = eps."""
        F = float(self.forcing(center))
        N = self.dimension
        return center - F * eps * eps / (2 * N), -F * eps / N


@dataclass
class ProfileSolution:
    family: ProfileFamily
    center_value: float
    rho: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    outcome: str
    rho_max: float
    tail_constant: float | None = None
    tail_slope: float | None = None
    tail_residual: float = math.inf
    rho_end: float = math.nan
    flags: list = field(default_factory=list)
    _dense: object = field(default=None, repr=False)

    def __call__(self, rho):
        """Evaluate the shot at rho in [0, rho_end] (exact at rho = 0)."""
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho < 0) or np.any(rho > self.rho_end * (1 + 1e-12)):
            raise DomainError(f"rho outside the shot interval [0, {self.rho_end}]")
        out = np.empty_like(rho)
        near = rho <= LAUNCH_EPS
        F = float(self.family.forcing(self.center_value))
        out[near] = self.center_value - F * rho[near] ** 2 / (2 * self.family.dimension)
        if np.any(~near):
            out[~near] = self._dense(rho[~near])[0]
        return out

    def derivative(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        out = np.empty_like(rho)
        near = rho <= LAUNCH_EPS
        F = float(self.family.forcing(self.center_value))
        out[near] = -F * rho[near] / self.family.dimension
        if np.any(~near):
            out[~near] = self._dense(rho[~near])[1]
        return out


def fit_tail(rho, values):
    """Least squares v + 2 log rho = C + b / rho^2; returns (C, b, rms)."""
    rho = np.asarray(rho, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64) + 2.0 * np.log(rho)
    A = np.column_stack([np.ones_like(rho), rho ** -2])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - v) ** 2)))
    return float(coef[0]), float(coef[1]), rms


def _sign_changes(x):
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def shoot(family: ProfileFamily, center_value: float, rho_max: float = 20.0, tol: float = 1e-10,
          samples: int = 2001, tail_tol: float = 1e-3, eps: float = LAUNCH_EPS) -> ProfileSolution:
    """Integrate one profile from its center value out to ``rho_max``.

    ``tol`` is the relative tolerance of the DOP853 integrator. The outcome
    is ``blowup_in_rho`` if v exceeds 50, ``collapse`` if v + 2 log rho drops
    below -60, ``truncated`` if the integrator gives up, ``oscillatory`` if
    v + 2 log rho changes sign more than 4 times on the tail window, and
    ``global_decay`` otherwise. A tail constant is reported for
    ``global_decay`` shots whose tail fit rms is below ``tail_tol``.
    """
    if not rho_max > 0:
        raise ConfigurationError("rho_max must be positive")
    if not 0 < eps < rho_max:
        raise ConfigurationError("launch radius must lie in (0, rho_max)")
    if not 0 < tol < 1e-3:
        raise ConfigurationError("tol must lie in (0, 1e-3)")
    center_value = float(center_value)
    if not math.isfinite(center_value):
        raise ConfigurationError("center value must be finite")

    def up(r, y):
        return y[0] - BLOWUP_VALUE

    def down(r, y):
        return y[0] + 2.0 * math.log(r) - COLLAPSE_VALUE

    up.terminal = down.terminal = True
    y0 = family.launch(center_value, eps)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(family.rhs, (eps, rho_max), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                        events=[up, down], dense_output=True)
    rho_end = float(sol.t[-1])
    if sol.status == 1:
        outcome = BLOWUP_IN_RHO if sol.t_events[0].size else COLLAPSE
    elif sol.status == 0:
        outcome = GLOBAL_DECAY
    else:
        outcome = TRUNCATED
        logger.info("shot %s center=%g stopped at rho=%g: %s", family.kind, center_value, rho_end, sol.message)

    rho = np.linspace(0.0, rho_end, samples)
    vals = np.empty(samples)
    ders = np.empty(samples)
    vals[0], ders[0] = center_value, 0.0
    inner = rho[1:]
    small = inner <= eps
    F = float(family.forcing(center_value))
    vals[1:][small] = center_value - F * inner[small] ** 2 / (2 * family.dimension)
    ders[1:][small] = -F * inner[small] / family.dimension
    if np.any(~small):
        y = sol.sol(inner[~small])
        vals[1:][~small] = y[0]
        ders[1:][~small] = y[1]

    out = ProfileSolution(family, center_value, rho, vals, ders, outcome, float(rho_max), rho_end=rho_end,
                          _dense=sol.sol)
    if outcome == GLOBAL_DECAY:
        tail = rho >= 0.5 * rho_max
        v = vals[tail] + 2.0 * np.log(rho[tail])
        if _sign_changes(v) > 4:
            out.outcome = OSCILLATORY
        else:
            C, b, rms = fit_tail(rho[tail], vals[tail])
            out.tail_residual = rms
            if rms < tail_tol:
                out.tail_constant, out.tail_slope = C, b
    return out


def residual(family: ProfileFamily, rho, values, window=None) -> float:
    """Max |ODE left-hand side| on ``window`` with three-point differences.

    ``rho`` may be nonuniform; derivatives use the standard nonuniform
    central weights, so the result is O(h^2) for smooth samples.
    """
    rho = np.asarray(rho, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if rho.shape != v.shape or rho.size < 3:
        raise ConfigurationError("need at least 3 samples of matching length")
    if window is not None:
        lo, hi = window
        keep = (rho >= lo) & (rho <= hi)
        rho, v = rho[keep], v[keep]
        if rho.size < 3:
            raise DomainError(f"window {window} holds fewer than 3 samples")
    if rho[0] <= 0.0:
        raise DomainError("residual window must exclude rho = 0")
    if not np.all(np.isfinite(v)):
        raise DomainError("samples must be finite on the window")
    hm = rho[1:-1] - rho[:-2]
    hp = rho[2:] - rho[1:-1]
    vm, vc, vp = v[:-2], v[1:-1], v[2:]
    d1 = (hm * hm * vp + (hp * hp - hm * hm) * vc - hp * hp * vm) / (hm * hp * (hm + hp))
    d2 = 2.0 * (hm * vp - (hm + hp) * vc + hp * vm) / (hm * hp * (hm + hp))
    r = rho[1:-1]
    lhs = d2 + ((family.dimension - 1) / r + family.drift(r)) * d1 + family.forcing(vc)
    return float(np.max(np.abs(lhs)))


def singular_profile(N: int, rho):
    """-2 log rho + log(2(N-2)), an exact solution of all three families."""
    if N < 3:
        raise DomainError(f"the singular profile needs N >= 3, got N={N}")
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise DomainError("the singular profile is undefined at rho <= 0")
    return -2.0 * np.log(rho) + math.log(2.0 * (N - 2))


def steady_closed_form(N: int, rho):
    """Steady profile with center 0 in one and two dimensions."""
    rho = np.asarray(rho, dtype=np.float64)
    if N == 1:
        x = np.abs(rho) / math.sqrt(2.0)
        # log cosh without overflow
        return -2.0 * (x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0))
    if N == 2:
        return -2.0 * np.log1p(rho * rho / 8.0)
    raise DomainError(f"no closed form for N={N}")


def scaled_steady(psi, a):
    """psi_a(rho) = a + psi(e^{a/2} rho) for a steady profile callable psi."""
    k = math.exp(0.5 * a)
    return lambda rho: a + psi(k * np.asarray(rho, dtype=np.float64))


# backward profiles


@dataclass(frozen=True)
class AlphaRow:
    alpha: float
    C_alpha: float | None
    residual: float
    outcome: str
    trivial: bool = False
    exploratory: bool = False


def map_alpha_to_C(alphas, N: int = 3, rho_max: float = 10.0, tol: float = 1e-10) -> list:
    """Shoot the backward family for each alpha and report the tail constant.

    Rows whose shot does not decay like -2 log rho carry ``C_alpha = None``.
    alpha = 0 is the constant solution and is marked trivial.
    """
    fam = ProfileFamily(BACKWARD, N)
    rows = []
    for a in np.asarray(alphas, dtype=np.float64):
        if a == 0.0:
            rows.append(AlphaRow(0.0, None, math.inf, GLOBAL_DECAY, trivial=True, exploratory=not 3 <= N <= 9))
            continue
        s = shoot(fam, a, rho_max, tol)
        rows.append(AlphaRow(float(a), s.tail_constant, s.tail_residual, s.outcome, exploratory=not 3 <= N <= 9))
    return rows


def _departure(N, alpha, rho_ref, gap, rho_max, tol):
    """+1 if v = phi + 2 log rho leaves its value at rho_ref upward, -1 if downward."""
    fam = ProfileFamily(BACKWARD, N)
    s = shoot(fam, alpha, rho_max, tol, samples=4001)
    r = s.rho
    v = s.values[1:] + 2.0 * np.log(r[1:])
    r = r[1:]
    ref = np.interp(rho_ref, r, v)
    after = r > rho_ref
    dev = v[after] - ref
    hit = np.flatnonzero(np.abs(dev) > gap)
    if hit.size:
        return 1 if dev[hit[0]] > 0 else -1
    if s.outcome in (BLOWUP_IN_RHO,):
        return 1
    if s.outcome == COLLAPSE:
        return -1
    return 0


def find_backward_profiles(N: int = 3, alpha_range=(0.5, 20.0), grid: int = 80, rho_ref: float = 3.0,
                           gap: float = 0.5, rho_max: float = 9.0, tol: float = 1e-11, xtol: float = 1e-13):
    """Locate center values whose backward shot keeps a -2 log rho tail.

    Such shots are isolated: nearby centers leave the tail upward or
    downward. Sign changes of the departure direction on an alpha grid are
    refined by bisection. Returns a list of (alpha, ProfileSolution) with the
    tail fitted on [rho_max/2, rho_max].
    """
    fam = ProfileFamily(BACKWARD, N)
    alphas = np.linspace(alpha_range[0], alpha_range[1], grid)
    dirs = [_departure(N, a, rho_ref, gap, rho_max + 6.0, tol) for a in alphas]
    found = []
    for a0, a1, d0, d1 in zip(alphas[:-1], alphas[1:], dirs[:-1], dirs[1:]):
        if d0 == 0 or d1 == 0 or d0 == d1:
            continue
        lo, hi = a0, a1
        while hi - lo > xtol * max(1.0, abs(lo)):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            dm = _departure(N, mid, rho_ref, gap, rho_max + 6.0, tol)
            if dm == d0:
                lo = mid
            else:
                hi = mid
        alpha = 0.5 * (lo + hi)
        found.append((alpha, shoot(fam, alpha, rho_max, tol)))
    return found


# forward profiles and the threshold c^#


def forward_tail_constant(N: int, beta: float, rho_max: float = 20.0, tol: float = 1e-11) -> float:
    """c(beta), or nan if the forward shot has no -2 log rho tail."""
    s = shoot(ProfileFamily(FORWARD, N), beta, rho_max, tol)
    return math.nan if s.tail_constant is None else s.tail_constant


def solve_forward_beta(N: int, c: float, beta_range=(-4.0, 8.0), grid: int = 61, rho_max: float = 20.0,
                       tol: float = 1e-11):
    """Smallest beta in ``beta_range`` with tail constant c, or None.

    Returns ``(beta, ProfileSolution)``.
    """
    betas = np.linspace(beta_range[0], beta_range[1], grid)
    cs = np.array([forward_tail_constant(N, b, rho_max, tol) for b in betas])
    g = cs - c
    for i in range(grid - 1):
        if not (np.isfinite(g[i]) and np.isfinite(g[i + 1])):
            continue
        if g[i] == 0.0 or g[i] * g[i + 1] < 0:
            if g[i] == 0.0:
                beta = float(betas[i])
            else:
                beta = brentq(lambda b: forward_tail_constant(N, b, rho_max, tol) - c, betas[i], betas[i + 1],
                              xtol=1e-13, rtol=1e-13)
            return beta, shoot(ProfileFamily(FORWARD, N), beta, rho_max, tol)
    return None


@dataclass(frozen=True)
class CSharpBracket:
    c_lo: float
    c_hi: float
    c_max: float
    beta_at_max: float
    rho_max: float
    lower_bound: float
    flags: tuple = ()

    @property
    def above_lower_bound(self):
        return self.c_lo > self.lower_bound


def forward_c_max(N: int, beta_range=(-4.0, 8.0), grid: int = 49, rho_max: float = 20.0, tol: float = 1e-11):
    """Largest forward tail constant: grid scan, then bounded refinement."""
    betas = np.linspace(beta_range[0], beta_range[1], grid)
    cs = np.array([forward_tail_constant(N, b, rho_max, tol) for b in betas])
    if not np.any(np.isfinite(cs)):
        return math.nan, math.nan
    i = int(np.nanargmax(cs))
    lo = betas[max(i - 1, 0)]
    hi = betas[min(i + 1, grid - 1)]
    best_b, best_c = float(betas[i]), float(cs[i])
    if hi > lo:
        res = minimize_scalar(lambda b: -forward_tail_constant(N, b, rho_max, tol), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-6})
        if np.isfinite(res.fun) and -res.fun > best_c:
            best_b, best_c = float(res.x), float(-res.fun)
    return best_c, best_b


def bracket_c_sharp(N: int = 3, search_range=None, tol: float = 1e-3, rho_max: float = 20.0,
                    beta_range=(-4.0, 8.0), grid: int = 49) -> CSharpBracket:
    """Bisect on c for the existence of a forward profile with tail constant c.

    c(beta) is continuous, so the attainable tail constants form an interval
    reaching down to -infinity; existence of c is then equivalent to
    c <= max_beta c(beta). The maximum is computed once, which makes the
    predicate monotone in c and the brackets nested as ``tol`` shrinks.
    """
    if not 3 <= N <= 9:
        raise DomainError(f"the threshold bracket is defined for 3 <= N <= 9, got N={N}")
    lower = math.log(2.0 * (N - 2))
    lo, hi = search_range if search_range is not None else (lower, lower + 3.0)
    c_max, b_max = forward_c_max(N, beta_range, grid, rho_max)
    flags = []

    def exists(c):
        return c <= c_max

    if not exists(lo):
        flags.append("lower_end_not_attained")
    if exists(hi):
        flags.append("upper_end_attained")
    if flags:
        return CSharpBracket(lo, hi, c_max, b_max, rho_max, lower, tuple(flags))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if exists(mid):
            lo = mid
        else:
            hi = mid
    return CSharpBracket(lo, hi, c_max, b_max, rho_max, lower, tuple(flags))


# output


def write_profile_csv(path, sol: ProfileSolution):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "value", "derivative"])
        for r, v, d in zip(sol.rho, sol.values, sol.derivatives):
            w.writerow([f"{r:.17g}", f"{v:.17g}", f"{d:.17g}"])


def write_alpha_map_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "C_alpha", "residual", "outcome"])
        for row in rows:
            C = "" if row.C_alpha is None else f"{row.C_alpha:.17g}"
            outcome = "trivial" if row.trivial else row.outcome
            w.writerow([f"{row.alpha:.17g}", C, f"{row.residual:.17g}", outcome])


def write_bracket_csv(path, b: CSharpBracket):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c_lo", "c_hi", "c_max", "beta_at_max", "rho_max", "lower_bound", "flags"])
        w.writerow([f"{b.c_lo:.17g}", f"{b.c_hi:.17g}", f"{b.c_max:.17g}", f"{b.beta_at_max:.17g}",
                    f"{b.rho_max:.17g}", f"{b.lower_bound:.17g}", ";".join(b.flags)])
