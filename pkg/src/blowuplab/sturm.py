"""Zero-number diagnostics for radial fields.

The zero number of v on (0, R) is the largest k with points
x_1 < ... < x_{k+1} and v(x_i) v(x_{i+1}) < 0. On samples this is the count
of sign changes after dropping exact zeros.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .evolution import EvolutionState, Nonlinearity, StepControls, run
from .grid import RadialField, build_grid
from .profiles import STEADY, ProfileFamily, shoot, singular_profile, steady_closed_form

SKIP = "skip"

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class ZeroCount:
    count: int
    crossings: tuple
    degenerate: bool = False


def zero_number(values, zero_policy: str = SKIP) -> ZeroCount:
    """Strict sign changes; each crossing is the node pair (i, j) bracketing it."""
    if zero_policy != SKIP:
        raise ConfigurationError(f"unknown zero policy {zero_policy!r}")
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ConfigurationError("zero_number needs at least 2 samples")
    if np.any(np.isnan(v)):
        raise DomainError("zero_number got NaN samples")
    idx = np.flatnonzero(v != 0.0)
    if idx.size == 0:
        return ZeroCount(0, (), degenerate=True)
    s = np.sign(v[idx])
    flips = np.flatnonzero(s[1:] != s[:-1])
    crossings = tuple((int(idx[k]), int(idx[k + 1])) for k in flips)
    return ZeroCount(len(crossings), crossings)


def reference_function(name: str, N: int | None = None, C: float | None = None, a: float | None = None,
                       func=None, rho_max: float = 50.0):
    """Callable for one of the named comparison functions.

    ``phi_star``: -2 log r + log(2(N-2)). ``omega``: -2 log r + log|log r| + C.
    ``psi_a``: steady profile with center a (closed form for N = 1, 2, shot
    otherwise). ``custom``: ``func`` itself.
    """
    if name == "phi_star":
        if N is None:
            raise ConfigurationError("phi_star needs the dimension")
        return lambda r: singular_profile(N, r)
    if name == "omega":
        if C is None:
            raise ConfigurationError("omega needs the constant C")
        return lambda r: -2.0 * np.log(r) + np.log(np.abs(np.log(r))) + C
    if name == "psi_a":
        if N is None or a is None:
            raise ConfigurationError("psi_a needs the dimension and the center a")
        if N in (1, 2):
            k = math.exp(0.5 * a)
            return lambda r: a + steady_closed_form(N, k * np.asarray(r, dtype=np.float64))
        sol = shoot(ProfileFamily(STEADY, N), a, rho_max)
        return sol
    if name == "custom":
        if func is None:
            raise ConfigurationError("custom reference needs a function")
        return func
    raise ConfigurationError(f"unknown reference {name!r}")


def default_window(name: str, f: RadialField):
    h = f.grid.h0
    if name == "omega":
        return (2.0 * h, min(0.5, f.grid.radius))
    return (f.grid.nodes[1], f.grid.radius)


def intersections_with(f: RadialField, reference, window=None, **params) -> ZeroCount:
    """Zero number of field - reference on the nodes inside ``window``.

    ``reference`` is a name accepted by :func:`reference_function` or a
    callable. The default window is [2 h0, 0.5] for ``omega`` and
    [r_1, R] otherwise, h0 being the spacing at the origin.
    """
    if callable(reference):
        ref, name = reference, "custom"
    else:
        name = reference
        params.setdefault("N", f.grid.dimension)
        ref = reference_function(name, **params)
    if window is None:
        window = default_window(name, f)
    lo, hi = window
    r = f.grid.nodes
    sel = (r >= lo) & (r <= hi)
    if name == "omega":
        sel &= r < 1.0
    if not np.any(sel):
        raise DomainError(f"window {window} contains no nodes")
    if np.count_nonzero(sel) < 2:
        return ZeroCount(0, ())
    diff = f.values[sel] - ref(r[sel])
    zc = zero_number(diff)
    off = int(np.flatnonzero(sel)[0])
    return ZeroCount(zc.count, tuple((i + off, j + off) for i, j in zc.crossings), zc.degenerate)


# harness


@dataclass
class HarnessReport:
    seed: int
    trials: int
    violations: list = field(default_factory=list)
    initial_counts: list = field(default_factory=list)
    final_counts: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def _random_trial(rng, grid, sign_changes, q_bound):
    r = grid.nodes
    R = grid.radius
    while True:
        roots = np.sort(rng.uniform(0.05 * R, 0.95 * R, sign_changes))
        v = np.prod(r[:, None] - roots[None, :], axis=1)
        v *= (R * R - r * r) * np.exp(rng.uniform(-1.0, 1.0) * r * r)
        v /= np.max(np.abs(v))
        v[-1] = 0.0
        # redraw until every root is resolved by the grid
        if zero_number(v[:-1]).count == sign_changes:
            break
    k = rng.integers(1, 5, size=3)
    amp = rng.uniform(-1.0, 1.0, size=3)
    q = np.sum(amp[:, None] * np.cos(np.pi * k[:, None] * r[None, :] / R), axis=0)
    q *= q_bound / max(float(np.max(np.abs(q))), 1e-300)
    return v, q


def zero_number_monotonicity_harness(seed: int = 0, trials: int = 100, nodes: int = 200, q_bound: float = 5.0,
                                     dimension: int = 3, sign_changes: int = 6, outputs: int = 50,
                                     t_end: float = 0.05, grading: float = 10.0) -> HarnessReport:
    """Evolve random fields under V_t = Delta V + Q V and check z(V) never rises.

    Each trial draws an initial field with ``sign_changes`` sign changes and
    a smooth frozen coefficient |Q| <= q_bound from a per-trial seed derived
    from ``seed``. Backward Euler diffusion and the exact linear reaction
    flow keep the discrete zero number nonincreasing.
    """
    if trials < 1 or nodes < 16 or outputs < 1:
        raise ConfigurationError("trials, nodes and outputs must be positive (nodes >= 16)")
    grid = build_grid(dimension, 1.0, nodes, grading)
    controls = StepControls(theta=1.0, dt_max=t_end / (4 * outputs), sigma=0.05, snapshot_du=math.inf)
    times = np.linspace(0.0, t_end, outputs + 1)[1:]
    report = HarnessReport(seed, trials)
    children = np.random.SeedSequence(seed).spawn(trials)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        v, q = _random_trial(rng, grid, sign_changes, q_bound)
        state = EvolutionState.initial(RadialField(grid, v), Nonlinearity.linear(q))
        run(state, controls, t_end, output_times=times)
        counts = [zero_number(v[:-1]).count]
        for snap in state.snapshots[1:]:
            counts.append(zero_number(snap.values[:-1]).count)
        report.initial_counts.append(counts[0])
        report.final_counts.append(counts[-1])
        for j in range(1, len(counts)):
            if counts[j] > counts[j - 1]:
                report.violations.append((i, j, counts[j - 1], counts[j]))
    return report


@dataclass(frozen=True)
class BoundReport:
    events: int
    M0: int
    bound: float
    status: str


def count_blowup_events_vs_bound(result, u0: RadialField, **event_kw) -> BoundReport:
    """Number of blow-up events of a continuation against z(u0 - phi*)/2 + 1."""
    N = u0.grid.dimension
    if N < 3:
        raise DomainError(f"the singular profile is undefined for N={N}")
    r = u0.grid.nodes[1:]
    M0 = zero_number(u0.values[1:] - singular_profile(N, r)).count
    k = len(result.blowup_events(**event_kw))
    bound = M0 / 2 + 1
    return BoundReport(k, M0, bound, PASS if k <= bound else FAIL)


@dataclass(frozen=True)
class MonotoneReport:
    status: str
    delta: float


def monotone_near_origin_check(grid, fields, singular=None) -> MonotoneReport:
    """Largest delta with U_r < 0 on (0, delta) at every given time.

    With ``singular`` masks supplied, a window where no node is singular is
    ``not_applicable``.
    """
    fields = np.atleast_2d(np.asarray(fields, dtype=np.float64))
    if singular is not None and not np.any(singular):
        return MonotoneReport(NOT_APPLICABLE, math.nan)
    r = grid.nodes
    delta = grid.radius
    for row in fields:
        d = np.diff(row)
        # nodes without a finite value are treated as part of the decreasing cap
        bad = np.flatnonzero(np.isfinite(d) & (d >= 0.0))
        if bad.size:
            delta = min(delta, float(r[bad[0]]))
    return MonotoneReport(PASS if delta > 0 else FAIL, delta)


def write_zero_csv(path, rows):
    """rows: iterable of (label, ZeroCount)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "count", "degenerate", "crossings"])
        for label, zc in rows:
            w.writerow([label, zc.count, int(zc.degenerate), ";".join(f"{i}-{j}" for i, j in zc.crossings)])


def write_harness_csv(path, rep: HarnessReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "initial_count", "final_count", "violations"])
        per = {}
        for i, *_ in rep.violations:
            per[i] = per.get(i, 0) + 1
        for i, (a, b) in enumerate(zip(rep.initial_counts, rep.final_counts)):
            w.writerow([i, a, b, per.get(i, 0)])
