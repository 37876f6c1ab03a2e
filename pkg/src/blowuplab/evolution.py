"""Time integration of U_t = ΔU + f(U) on a radial grid.

Each step is a Strang splitting: half a reaction step, one θ-scheme
diffusion step (tridiagonal solve), half a reaction step. The default θ = 1
is backward Euler: Crank-Nicolson leaves the stiff modes near the origin of
a graded grid undamped, and with the reaction on top they grow.

The reaction sub-steps use the exact pointwise flow of u' = f(u), which is
available in closed form for every nonlinearity used here.

The step size follows the intrinsic time scale of the reaction,
dt = sigma / max f(U), capped by dt_max.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import BlowupOverflow, ConfigurationError, ConsistencyError, PreconditionError
from .grid import RadialField, RadialGrid, apply_bands, laplacian_bands

logger = logging.getLogger(__name__)

EXPONENTIAL = "exponential"
TRUNCATED = "truncated"
LINEAR = "linear"
ZERO = "zero"

BLOWUP = "blowup"
NO_BLOWUP = "no_blowup"
UNDETERMINED = "undetermined"


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Reaction term f.

    ``exponential``: e^u. ``truncated``: min(e^u, level). ``linear``: q*u with
    a frozen coefficient array (zero-number harness). ``zero``: no reaction.
    """

    kind: str = EXPONENTIAL
    level: float = math.inf
    q: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL, TRUNCATED, LINEAR, ZERO):
            raise ConfigurationError(f"unknown nonlinearity {self.kind!r}")
        if self.kind == TRUNCATED and not (self.level > 0 and math.isfinite(self.level)):
            raise ConfigurationError(f"truncation level must be positive and finite, got {self.level!r}")
        if self.kind == LINEAR and self.q is None:
            raise ConfigurationError("linear nonlinearity needs a coefficient array q")

    @classmethod
    def exponential(cls):
        return cls(EXPONENTIAL)

    @classmethod
    def truncated(cls, level):
        return cls(TRUNCATED, float(level))

    @classmethod
    def linear(cls, q):
        return cls(LINEAR, q=np.asarray(q, dtype=np.float64))

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == ZERO:
            return np.zeros_like(u)
        if self.kind == LINEAR:
            return self.q * u
        with np.errstate(over="ignore"):
            e = np.exp(u)
        if self.kind == TRUNCATED:
            return np.minimum(e, self.level)
        return e

    def rate(self, u) -> float:
        """Largest reaction rate on the field; sets the step size."""
        if self.kind == ZERO:
            return 0.0
        if self.kind == LINEAR:
            return float(np.max(np.abs(self.q)))
        top = float(np.max(u))
        if self.kind == TRUNCATED:
            top = min(top, math.log(self.level))
        return math.exp(min(top, 709.0))

    def flow(self, u, dt):
        """Exact solution of u' = f(u) after time dt, elementwise.

        Raises FloatingPointError if the exponential flow blows up within dt.
        """
        u = np.asarray(u, dtype=np.float64)
        if self.kind == ZERO or dt == 0.0:
            return u.copy()
        if self.kind == LINEAR:
            return u * np.exp(self.q * dt)
        with np.errstate(over="ignore"):
            x = dt * np.exp(u)
        if self.kind == EXPONENTIAL:
            if not np.all(x < 1.0):
                raise FloatingPointError("exponential flow blows up within the step")
            # e^{-u(t+dt)} = e^{-u} - dt
            return u - np.log1p(-x)
        # truncated: exponential flow until u reaches log(level), then linear
        ustar = math.log(self.level)
        n = self.level
        out = np.empty_like(u)
        sat = u >= ustar
        out[sat] = u[sat] + n * dt
        below = ~sat
        ub = u[below]
        # time to reach ustar from ub
        tau = np.exp(-ub) - 1.0 / n
        xb = x[below]
        reach = dt >= tau
        res = np.empty_like(ub)
        res[~reach] = ub[~reach] - np.log1p(-xb[~reach])
        res[reach] = ustar + n * (dt - tau[reach])
        out[below] = res
        return out


@dataclass(frozen=True)
class StepControls:
    """Step-size and stopping controls; defaults follow the documented config."""

    sigma: float = 0.05
    dt_max: float = 1e-2
    u_stop: float = 25.0
    horizon: float = 10.0
    theta: float = 1.0
    disable_diffusion: bool = False
    disable_reaction: bool = False
    snapshot_du: float = 0.25
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if not self.dt_max > 0:
            raise ConfigurationError("dt_max must be positive")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [1/2, 1]")
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")

    def choose_dt(self, rate: float) -> float:
        if rate <= 0.0:
            return self.dt_max
        return min(self.dt_max, self.sigma / rate)


@dataclass
class History:
    t: list = field(default_factory=list)
    maxu: list = field(default_factory=list)
    dt: list = field(default_factory=list)

    def append(self, t, maxu, dt):
        if self.t and not t > self.t[-1]:
            raise ConsistencyError(f"history time not increasing: {t} after {self.t[-1]}")
        self.t.append(float(t))
        self.maxu.append(float(maxu))
        self.dt.append(float(dt))

    def arrays(self):
        return np.array(self.t), np.array(self.maxu), np.array(self.dt)

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class Snapshot:
    t: float
    values: np.ndarray

    @property
    def maxu(self):
        return float(np.max(self.values))


@dataclass(frozen=True)
class BlowupEstimate:
    """Blow-up time from a linear fit of e^{-max u} against t."""

    T: float
    window: tuple
    residual: float
    status: str = BLOWUP
    slope: float = math.nan

    @property
    def finite(self):
        return self.status == BLOWUP and math.isfinite(self.T)


@dataclass(eq=False)
class EvolutionState:
    grid: RadialGrid
    values: np.ndarray
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    t: float = 0.0
    dt: float = 0.0
    history: History = field(default_factory=History)
    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @classmethod
    def initial(cls, u0: RadialField, nonlinearity: Nonlinearity | None = None, t0: float = 0.0):
        values = u0.values.copy()
        state = cls(u0.grid, values, nonlinearity or Nonlinearity.exponential(), t=float(t0))
        if np.any(values < 0.0):
            state.flags.append("negative_initial_data")
        if values[-1] != 0.0:
            state.flags.append("boundary_value_reset")
            values[-1] = 0.0
        state.history.append(state.t, values.max(), 0.0)
        state.snapshots.append(Snapshot(state.t, values.copy()))
        return state

    @property
    def field(self) -> RadialField:
        return RadialField(self.grid, self.values)

    @property
    def maxu(self) -> float:
        return float(np.max(self.values))


class DiffusionSolver:
    """θ-scheme for U_t = ΔU with U(R) = 0, several right-hand sides at once."""

    def __init__(self, grid: RadialGrid, theta: float = 1.0):
        self.grid = grid
        self.theta = float(theta)
        self.bands = laplacian_bands(grid)
        self._cache_dt = None
        self._ab = None

    def _matrix(self, dt):
        if dt != self._cache_dt:
            lower, diag, upper = self.bands
            th = self.theta * dt
            n = diag.size
            ab = np.zeros((3, n))
            ab[0, 1:] = -th * upper[:-1]
            ab[1] = 1.0 - th * diag
            ab[2, :-1] = -th * lower[1:]
            # Dirichlet row
            ab[1, -1] = 1.0
            ab[2, -2] = 0.0
            self._ab = ab
            self._cache_dt = dt
        return self._ab

    def step(self, u, dt):
        """Advance one diffusion step; ``u`` has shape (n,) or (n, k)."""
        rhs = np.array(u, dtype=np.float64)
        if self.theta < 1.0:
            rhs = rhs + (1.0 - self.theta) * dt * _apply(self.bands, rhs)
        rhs[-1] = 0.0
        return solve_banded((1, 1), self._matrix(dt), rhs, check_finite=False)

    def positive_dt(self):
        """Largest dt for which the explicit half keeps nonnegative, diagonally
        dominant rows (order preservation and variation diminishing)."""
        if self.theta >= 1.0:
            return math.inf
        lower, diag, upper = self.bands
        return 1.0 / ((1.0 - self.theta) * 2.0 * float(np.max(lower + upper)))


def _apply(bands, u):
    if u.ndim == 1:
        return apply_bands(bands, u)
    lower, diag, upper = bands
    out = diag[:, None] * u
    out[1:] += lower[1:, None] * u[:-1]
    out[:-1] += upper[:-1, None] * u[1:]
    return out


def _advance(values, dt, nonlinearity, solver, controls):
    """One Strang step on ``values`` (1-D or 2-D with levels in columns)."""
    u = values
    react = not controls.disable_reaction
    if react:
        u = nonlinearity.flow(u, 0.5 * dt)
        u[-1] = 0.0
    if not controls.disable_diffusion:
        u = solver.step(u, dt)
    if react:
        u = nonlinearity.flow(u, 0.5 * dt)
    u[-1] = 0.0
    return u


_SOLVERS: dict = {}


def _solver_for(grid, theta):
    key = (id(grid), theta)
    s = _SOLVERS.get(key)
    if s is None or s.grid is not grid:
        s = DiffusionSolver(grid, theta)
        if len(_SOLVERS) > 64:
            _SOLVERS.clear()
        _SOLVERS[key] = s
    return s


def step(state: EvolutionState, dt: float, controls: StepControls | None = None) -> EvolutionState:
    """Advance ``state`` by one step of size ``dt`` (in place; returns it).

    On overflow the state is left untouched and BlowupOverflow carries it.
    """
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt!r}")
    controls = controls or StepControls()
    solver = _solver_for(state.grid, controls.theta)
    try:
        new = _advance(state.values, dt, state.nonlinearity, solver, controls)
    except FloatingPointError as exc:
        raise BlowupOverflow(state, str(exc)) from None
    if not np.all(np.isfinite(new)):
        raise BlowupOverflow(state, "non-finite values after step")
    state.values = new
    state.t = state.t + dt
    state.dt = dt
    state.history.append(state.t, new.max(), dt)
    return state


def _next_dt(state, controls, t_target):
    dt = controls.choose_dt(state.nonlinearity.rate(state.values) if not controls.disable_reaction else 0.0)
    remaining = t_target - state.t
    if dt >= remaining * (1.0 - 1e-12):
        return remaining, True
    # avoid leaving a sliver before the target
    if dt > 0.5 * remaining:
        dt = 0.5 * remaining
    return dt, False


def run(state: EvolutionState, controls: StepControls, t_end: float, output_times=(), stop_at_u=None):
    """Integrate to ``t_end`` landing exactly on ``output_times``.

    Snapshots are stored at output times and whenever max u rises by
    ``controls.snapshot_du`` since the last snapshot. Stops early if max u
    reaches ``stop_at_u``. Returns True if stopped early.
    """
    targets = sorted(float(t) for t in output_times if state.t < t <= t_end)
    if not targets or targets[-1] < t_end:
        targets.append(float(t_end))
    last_snap_u = state.snapshots[-1].maxu if state.snapshots else -math.inf
    steps = 0
    for target in targets:
        while state.t < target:
            dt, hit = _next_dt(state, controls, target)
            if not hit and state.t + dt <= state.t + 4.0 * math.ulp(state.t):
                # the step no longer advances t in double precision
                state.flags.append("time_resolution_exhausted")
                return True
            step(state, dt, controls)
            if hit:
                state.t = target
                state.history.t[-1] = target
            steps += 1
            if steps > controls.max_steps:
                raise ConsistencyError(f"step limit {controls.max_steps} exceeded at t={state.t}")
            m = state.maxu
            if m >= last_snap_u + controls.snapshot_du:
                state.snapshots.append(Snapshot(state.t, state.values.copy()))
                last_snap_u = m
            if stop_at_u is not None and m >= stop_at_u:
                if state.snapshots[-1].t != state.t:
                    state.snapshots.append(Snapshot(state.t, state.values.copy()))
                return True
        if state.snapshots[-1].t != state.t:
            state.snapshots.append(Snapshot(state.t, state.values.copy()))
    return False


def estimate_blowup_time(t, maxu, fraction: float = 0.3, drop: float = 3.0, min_points: int = 10) -> BlowupEstimate:
    """Fit e^{-max u} = a + b t over the tail of a growing history; T = -a/b.

    The window is the last ``fraction`` of the samples whose max u lies within
    ``drop`` of the final value, widened to at least ``min_points`` samples.
    """
    t = np.asarray(t, dtype=np.float64)
    maxu = np.asarray(maxu, dtype=np.float64)
    if t.size < min_points:
        return BlowupEstimate(math.nan, (math.nan, math.nan), math.inf, UNDETERMINED)
    cand = np.flatnonzero(maxu >= maxu[-1] - drop)
    # only the trailing contiguous run counts
    run_start = cand[-1]
    while run_start - 1 in cand:
        run_start -= 1
    ncand = t.size - run_start
    take = max(min_points, int(math.ceil(fraction * ncand)))
    take = min(take, t.size)
    tw, uw = t[-take:], maxu[-take:]
    if not (np.all(np.diff(uw) > 0) and np.all(np.diff(tw) > 0)):
        return BlowupEstimate(math.nan, (float(tw[0]), float(tw[-1])), math.inf, UNDETERMINED)
    y = np.exp(-uw)
    tc = tw - tw[-1]
    # the time column is tiny near T; scale it so lstsq keeps full rank
    scale = float(np.max(np.abs(tc))) or 1.0
    A = np.vstack([np.ones_like(tc), tc / scale]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    A[:, 1] = tc
    b = b / scale
    if not b < 0:
        return BlowupEstimate(math.nan, (float(tw[0]), float(tw[-1])), math.inf, UNDETERMINED)
    T = float(tw[-1] - a / b)
    resid = float(np.sqrt(np.mean((A @ np.array([a, b]) - y) ** 2)))
    return BlowupEstimate(T, (float(tw[0]), float(tw[-1])), resid, BLOWUP, float(b))


def run_until_blowup(state: EvolutionState, controls: StepControls | None = None):
    """Integrate until max u reaches ``u_stop`` or the horizon passes.

    Returns ``(state, estimate)``; a solution that stays bounded on the
    horizon gives an estimate with status ``no_blowup``.
    """
    controls = controls or StepControls()
    if state.nonlinearity.kind != EXPONENTIAL and not controls.disable_reaction:
        raise PreconditionError("run_until_blowup needs the exponential nonlinearity")
    try:
        stopped = run(state, controls, controls.horizon, stop_at_u=controls.u_stop)
    except BlowupOverflow as exc:
        state = exc.state
        state.flags.append("overflow")
        stopped = True
    if not stopped:
        est = BlowupEstimate(math.inf, (state.history.t[0], state.t), 0.0, NO_BLOWUP)
        return state, est
    t, maxu, _ = state.history.arrays()
    est = estimate_blowup_time(t, maxu)
    state.events.append(est)
    return state, est


@dataclass
class ContinuationResult:
    """Truncated trajectories and their extrapolated limit.

    ``values[k, j]`` is the field for level ``levels[k]`` at ``times[j]``.
    ``limit[j]`` is the last level's field where successive levels agree to
    ``cauchy_tol``; ``singular[j]`` marks nodes where they do not.
    """

    grid: RadialGrid
    levels: np.ndarray
    times: np.ndarray
    values: np.ndarray
    limit: np.ndarray
    singular: np.ndarray
    increments: np.ndarray
    history_t: np.ndarray
    history_maxu: np.ndarray
    max_order_violation: float
    flags: list = field(default_factory=list)

    def regular_at(self, j) -> bool:
        return not bool(np.any(self.singular[j]))

    def limit_maxu(self):
        """Max of the limit field per output time (inf where singular)."""
        out = np.where(self.singular.any(axis=1), np.inf, np.nanmax(np.where(self.singular, -np.inf, self.limit), axis=1))
        return out

    def level_maxu(self):
        return self.values.max(axis=2)

    def blowup_events(self, threshold: float | None = None, hysteresis: float = 2.0):
        """Intervals where the top level's max u stays above ``threshold``.

        The default threshold sits 1 below log of the top level, which the
        truncated solution can only approach where the limit is unbounded. An
        event closes once max u falls ``hysteresis`` below the threshold; an
        event still open at the horizon ends at inf.
        """
        top = self.history_maxu[:, -1]
        if threshold is None:
            threshold = math.log(self.levels[-1]) - 1.0
        events = []
        start = None
        for t, m in zip(self.history_t, top):
            if start is None and m >= threshold:
                start = t
            elif start is not None and m < threshold - hysteresis:
                events.append((float(start), float(t)))
                start = None
        if start is not None:
            events.append((float(start), math.inf))
        return events


def continue_past_blowup(u0: RadialField, levels, horizon: float, controls: StepControls | None = None,
                         output_times=None, cauchy_tol: float = 1e-4, order_tol: float = 1e-8,
                         t0: float = 0.0) -> ContinuationResult:
    """Solve with f = min(e^u, n_k) for every level on a shared time grid.

    All levels use one step sequence (the smallest admissible step among
    them), so the discrete comparison between levels is checked exactly at
    every step.
    """
    controls = controls or StepControls()
    levels = np.asarray(levels, dtype=np.float64)
    if levels.ndim != 1 or levels.size < 2 or np.any(np.diff(levels) <= 0) or levels[0] <= 0:
        raise ConfigurationError("truncation levels must be a strictly increasing positive sequence of length >= 2")
    if not horizon > t0:
        raise ConfigurationError("horizon must exceed the start time")
    grid = u0.grid
    if output_times is None:
        output_times = np.linspace(t0, horizon, 11)[1:]
    output_times = np.array(sorted(float(t) for t in output_times if t0 < t <= horizon))
    if output_times.size == 0 or output_times[-1] < horizon:
        output_times = np.append(output_times, horizon)

    flags = []
    if np.any(u0.values < 0):
        flags.append("negative_initial_data")
    K = levels.size
    ustar = np.log(levels)
    U = np.repeat(u0.values[:, None], K, axis=1)
    U[-1] = 0.0
    solver = _solver_for(grid, controls.theta)
    nl = _StackedTruncation(levels)

    out = np.empty((K, output_times.size, grid.size))
    hist_t = [t0]
    hist_u = [U.max(axis=0).copy()]
    worst = 0.0
    t = t0
    steps = 0
    for j, target in enumerate(output_times):
        while t < target:
            top = U.max(axis=0)
            rate = float(np.max(np.exp(np.minimum(top, ustar))))
            dt = controls.choose_dt(rate)
            remaining = target - t
            hit = dt >= remaining * (1.0 - 1e-12)
            if hit:
                dt = remaining
            elif dt > 0.5 * remaining:
                dt = 0.5 * remaining
            U = _advance(U, dt, nl, solver, controls)
            t = target if hit else t + dt
            steps += 1
            if steps > controls.max_steps:
                raise ConsistencyError(f"step limit {controls.max_steps} exceeded at t={t}")
            gap = float(np.max(U[:, :-1] - U[:, 1:])) if K > 1 else 0.0
            worst = max(worst, gap)
            hist_t.append(t)
            hist_u.append(U.max(axis=0).copy())
        out[:, j, :] = U.T
    if worst > order_tol:
        raise ConsistencyError(
            f"truncated trajectories not ordered in the level: worst violation {worst:.3e} > {order_tol:.1e}")

    inc = out[-1] - out[-2]
    singular = np.abs(inc) >= cauchy_tol
    limit = np.where(singular, np.nan, out[-1])
    return ContinuationResult(grid, levels, output_times, out, limit, singular, inc,
                              np.array(hist_t), np.array(hist_u), worst, flags)


class _StackedTruncation:
    """Truncated flows for several levels at once (levels in columns)."""

    def __init__(self, levels):
        self.levels = np.asarray(levels, dtype=np.float64)
        self.ustar = np.log(self.levels)
        self.kind = TRUNCATED

    def flow(self, U, dt):
        n, ustar = self.levels, self.ustar
        with np.errstate(over="ignore", invalid="ignore"):
            x = dt * np.exp(np.minimum(U, ustar))
            # time for the exponential flow to reach log n
            tau = np.exp(-U) - 1.0 / n
            reach = dt >= tau
            below = U - np.log1p(-np.where(reach, 0.0, x))
            past = ustar + n * (dt - tau)
        sat = U >= ustar
        out = np.where(sat, U + n * dt, np.where(reach, past, below))
        return out
