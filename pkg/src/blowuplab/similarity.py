"""Similarity frames, rate classification and final-profile fits.

backward:  w(y, s) = log(T - t) + u(y sqrt(T - t), t),  s = -log(T - t)
forward:   w(y, s) = log(t - T) + u(y sqrt(t - T), t),  s = log(t - T)
intrinsic: w(rho, tau) = -u(0, t_i) + U(e^{-u(0, t_i)/2} rho, t_i + e^{-u(0, t_i)} tau)

Fields are resampled with monotone cubic (PCHIP) interpolation in r.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DomainError, PreconditionError
from .grid import RadialField

BACKWARD = "backward"
FORWARD = "forward"
INTRINSIC = "intrinsic"

TYPE_I = "type_I"
TYPE_II = "type_II"
UNDETERMINED = "undetermined"

PURE_LOG = "pure_log"
LOG_LOG = "log_log"

REGULARIZED = "regularized"
NOT_REGULARIZED = "not_regularized"


@dataclass(frozen=True, eq=False)
class SimilarityFrame:
    kind: str
    anchor: float
    s_or_tau: float
    y: np.ndarray
    w: np.ndarray
    # physical radius per unit y, and the value shift: u = w + shift
    length: float
    shift: float

    def unscale(self):
        """Physical (r, u) at the frame nodes."""
        return self.y * self.length, self.w + self.shift


def _interp(f: RadialField):
    return PchipInterpolator(f.grid.nodes, f.values, extrapolate=False)


def _frame_nodes(y_max, samples):
    if not y_max > 0:
        raise ConfigurationError("y_max must be positive")
    if samples < 2:
        raise ConfigurationError("need at least 2 samples")
    return np.linspace(0.0, float(y_max), int(samples))


def _check_extent(y_max, length, R, what):
    # small slack so that y_max * length == R survives rounding
    if y_max * length > R * (1 + 1e-12):
        raise DomainError(f"{what} frame reaches r = {y_max * length:.6g} beyond the ball radius {R:.6g}")


def to_backward(f: RadialField, t: float, T: float, y_max: float = 2.0, samples: int = 201) -> SimilarityFrame:
    if not t < T:
        raise DomainError(f"backward frame needs t < T (t={t}, T={T})")
    tau = T - t
    length = math.sqrt(tau)
    _check_extent(y_max, length, f.grid.radius, "backward")
    y = _frame_nodes(y_max, samples)
    u = _interp(f)(np.minimum(y * length, f.grid.radius))
    return SimilarityFrame(BACKWARD, float(T), -math.log(tau), y, math.log(tau) + u, length, -math.log(tau))


def to_forward(f: RadialField, t: float, T: float, y_max: float = 2.0, samples: int = 201) -> SimilarityFrame:
    if not t > T:
        raise DomainError(f"forward frame needs t > T (t={t}, T={T})")
    tau = t - T
    length = math.sqrt(tau)
    _check_extent(y_max, length, f.grid.radius, "forward")
    y = _frame_nodes(y_max, samples)
    u = _interp(f)(np.minimum(y * length, f.grid.radius))
    if np.any(~np.isfinite(u)):
        raise DomainError("forward frame touches nodes without a finite value")
    return SimilarityFrame(FORWARD, float(T), math.log(tau), y, math.log(tau) + u, length, -math.log(tau))


def to_intrinsic(f_i: RadialField, t_i: float, rho_max: float = 5.0, samples: int = 201,
                 later: tuple | None = None) -> SimilarityFrame:
    """Peak-anchored frame at t_i, or at a later field ``later = (t, field)``.

    The maximum of ``f_i`` must sit at the origin node.
    """
    k = int(np.argmax(f_i.values))
    if f_i.values[k] > f_i.values[0]:
        raise PreconditionError(f"maximum at node {k} (r={f_i.grid.nodes[k]:.6g}), not at the origin")
    u0 = float(f_i.values[0])
    length = math.exp(-0.5 * u0)
    tau = 0.0
    src = f_i
    if later is not None:
        t, src = later
        if t < t_i:
            raise DomainError("the later field must not precede t_i")
        tau = (t - t_i) * math.exp(u0)
    _check_extent(rho_max, length, src.grid.radius, "intrinsic")
    rho = _frame_nodes(rho_max, samples)
    u = _interp(src)(np.minimum(rho * length, src.grid.radius))
    return SimilarityFrame(INTRINSIC, float(t_i), tau, rho, u - u0, length, u0)


@dataclass(frozen=True)
class DriftReport:
    s_window: tuple
    drift: float
    y_max: float
    frames: int


def backward_drift(snapshots, T: float, y_max: float = 2.0, s_span: float = 3.0, samples: int = 201) -> DriftReport:
    """Change of w(., s) on |y| <= y_max per unit s over the final ``s_span``.

    ``snapshots`` is a sequence of (t, RadialField) with t < T. The drift is
    sup |w(y, s_end) - w(y, s_start)| / (s_end - s_start) where s_start is
    the earliest frame within ``s_span`` of the last one.
    """
    pts = [(t, f) for t, f in snapshots if t < T]
    if len(pts) < 2:
        raise DomainError("need two snapshots before T")
    s = np.array([-math.log(T - t) for t, _ in pts])
    inside = np.flatnonzero(s >= s[-1] - s_span)
    i0 = int(inside[0])
    if i0 == len(pts) - 1:
        i0 -= 1
    a = to_backward(pts[i0][1], pts[i0][0], T, y_max, samples)
    b = to_backward(pts[-1][1], pts[-1][0], T, y_max, samples)
    ds = b.s_or_tau - a.s_or_tau
    return DriftReport((a.s_or_tau, b.s_or_tau), float(np.max(np.abs(b.w - a.w)) / ds), y_max, len(pts) - i0)


@dataclass(frozen=True)
class RateReport:
    classification: str
    band: tuple
    window: tuple
    samples: int
    tail_oscillation: float = math.nan

    @property
    def width(self):
        return self.band[1] - self.band[0]


def classify_rate(t, maxu, T: float, window=None, efolds: float | None = None, band_tol: float = 1.0,
                  rise: float = 2.0, min_samples: int = 20) -> RateReport:
    """Classify the growth of g = log(T - t) + max u over a window before T.

    The window is ``window = (t_lo, t_hi)`` if given, else the samples within
    ``efolds`` of the final max u, else every sample before T. Type I needs
    osc g <= band_tol on the window and on its second half no more than on
    the whole. Type II needs g to be nondecreasing with a total rise above
    ``rise``.
    """
    t = np.asarray(t, dtype=np.float64)
    maxu = np.asarray(maxu, dtype=np.float64)
    keep = t < T
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    t, maxu = t[keep], maxu[keep]
    if efolds is not None and t.size:
        sel = maxu >= maxu[-1] - efolds
        # trailing run only
        start = t.size
        while start > 0 and sel[start - 1]:
            start -= 1
        t, maxu = t[start:], maxu[start:]
    if t.size < min_samples:
        win = (float(t[0]), float(t[-1])) if t.size else (math.nan, math.nan)
        return RateReport(UNDETERMINED, (math.nan, math.nan), win, int(t.size))
    g = np.log(T - t) + maxu
    band = (float(g.min()), float(g.max()))
    osc = band[1] - band[0]
    half = g[g.size // 2:]
    osc_half = float(half.max() - half.min())
    win = (float(t[0]), float(t[-1]))
    if osc <= band_tol and osc_half <= osc:
        cls = TYPE_I
    elif np.all(np.diff(g) >= 0) and g[-1] - g[0] > rise:
        cls = TYPE_II
    else:
        cls = UNDETERMINED
    return RateReport(cls, band, win, int(t.size), osc_half)


@dataclass(frozen=True)
class ProfileFit:
    model: str
    constant: float
    fit_window: tuple
    residual: float
    points: int
    source: str = "field"


def fit_final_profile(f: RadialField, model: str, r_min: float | None = None, r_max: float | None = None,
                      source: str = "field") -> ProfileFit:
    """Constant C for u + 2 log r (pure log) or u + 2 log r - log|log r| (log log).

    The constant is the mean of the model-subtracted field on the window and
    the residual its rms deviation. The default window starts 3 origin
    spacings out and ends at min(R, 1)/2. Non-finite values (nodes flagged
    singular) are skipped.
    """
    if model not in (PURE_LOG, LOG_LOG):
        raise ConfigurationError(f"unknown profile model {model!r}")
    r = f.grid.nodes
    if r_min is None:
        r_min = 3.0 * f.grid.h0
    if r_max is None:
        r_max = 0.5 * min(f.grid.radius, 1.0)
    if not 0 < r_min < r_max:
        raise DomainError(f"bad fit window ({r_min}, {r_max})")
    if model == LOG_LOG and r_max >= 1.0:
        raise DomainError("the log log model needs r_max < 1")
    sel = (r >= r_min) & (r <= r_max) & np.isfinite(f.values)
    if np.count_nonzero(sel) < 2:
        raise DomainError(f"fit window ({r_min:.3g}, {r_max:.3g}) holds fewer than 2 usable nodes")
    x = r[sel]
    v = f.values[sel] + 2.0 * np.log(x)
    if model == LOG_LOG:
        v = v - np.log(np.abs(np.log(x)))
    C = float(np.mean(v))
    res = float(np.sqrt(np.mean((v - C) ** 2)))
    return ProfileFit(model, C, (float(x[0]), float(x[-1])), res, int(x.size), source)


def pure_log_model(r, C):
    return -2.0 * np.log(r) + C


def log_log_model(r, C):
    return -2.0 * np.log(r) + np.log(np.abs(np.log(r))) + C


@dataclass(frozen=True)
class RegularizationReport:
    status: str
    sup: float
    window: tuple
    t_at_sup: float = math.nan
    values: tuple = field(default=())


def check_regularization_rate(times, fields, T: float, window=None, singular=None) -> RegularizationReport:
    """sup of log(t - T) + max u over output times in (T, T + eps].

    ``fields`` holds one array per time; ``singular`` (optional, same shape)
    marks nodes where the continuation is not yet bounded. Any singular node
    or non-finite value inside the window gives ``not_regularized``.
    """
    times = np.asarray(times, dtype=np.float64)
    fields = np.asarray(fields, dtype=np.float64)
    sel = times > T
    if window is not None:
        sel &= (times >= window[0]) & (times <= window[1])
    idx = np.flatnonzero(sel)
    if idx.size == 0:
        raise DomainError("no output times inside the regularization window")
    win = (float(times[idx[0]]), float(times[idx[-1]]))
    vals = []
    for j in idx:
        if singular is not None and np.any(singular[j]):
            return RegularizationReport(NOT_REGULARIZED, math.inf, win, float(times[j]))
        row = fields[j]
        if not np.all(np.isfinite(row)):
            return RegularizationReport(NOT_REGULARIZED, math.inf, win, float(times[j]))
        vals.append(math.log(times[j] - T) + float(row.max()))
    k = int(np.argmax(vals))
    return RegularizationReport(REGULARIZED, float(vals[k]), win, float(times[idx[k]]), tuple(vals))


def write_frame_csv(path, frames):
    if isinstance(frames, SimilarityFrame):
        frames = [frames]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s_or_tau", "y", "w"])
        for fr in frames:
            for y, v in zip(fr.y, fr.w):
                w.writerow([f"{fr.s_or_tau:.17g}", f"{y:.17g}", f"{v:.17g}"])


def write_rate_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["classification", "band_lo", "band_hi", "t_lo", "t_hi", "samples"])
        for r in reports:
            w.writerow([r.classification, f"{r.band[0]:.17g}", f"{r.band[1]:.17g}", f"{r.window[0]:.17g}",
                        f"{r.window[1]:.17g}", r.samples])


def write_fit_csv(path, fits):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "constant", "r_lo", "r_hi", "residual", "points", "source"])
        for p in fits:
            w.writerow([p.model, f"{p.constant:.17g}", f"{p.fit_window[0]:.17g}", f"{p.fit_window[1]:.17g}",
                        f"{p.residual:.17g}", p.points, p.source])
