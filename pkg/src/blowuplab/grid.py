"""Radial grids on the ball B(R) in R^N and the radial Laplacian.

The Laplacian is discretised in flux form,

    (1/r^{N-1}) d/dr (r^{N-1} dU/dr),

with faces at the midpoints between nodes. At r = 0 this reduces to
``2N (U_1 - U_0) / r_1**2``, i.e. ``N * U_rr(0)`` with the ghost symmetry
``U_r(0) = 0``. The resulting matrix has positive off-diagonal entries in
every row, which the comparison and zero-number arguments rely on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

MIN_INTERVALS = 16


@dataclass(frozen=True)
class Grading:
    """Node clustering toward r = 0.

    ``ratio`` is spacing(R) / spacing(0); ``ratio == 1`` is uniform.
    """

    ratio: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.ratio) or self.ratio < 1.0:
            raise ConfigurationError(f"grading ratio must be >= 1, got {self.ratio!r}")

    @property
    def kind(self) -> str:
        return "uniform" if self.ratio == 1.0 else "geometric"


@dataclass(frozen=True, eq=False)
class RadialGrid:
    dimension: int
    radius: float
    nodes: np.ndarray
    grading: Grading = field(default_factory=Grading)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h0(self) -> float:
        return float(self.nodes[1])

    def __repr__(self):
        return (f"RadialGrid(N={self.dimension}, R={self.radius}, M={self.size - 1}, "
                f"ratio={self.grading.ratio})")


def build_grid(N: int, R: float = 1.0, M: int = 200, grading: Grading | float | None = None) -> RadialGrid:
    """Nodes ``0 = r_0 < ... < r_M = R``.

    With a geometric grading of ratio ``q**(M-1)``, consecutive spacings grow
    by the constant factor ``q`` so that the last spacing is ``ratio`` times
    the first.
    """
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ConfigurationError(f"dimension must be an integer >= 1, got {N!r}")
    if isinstance(M, bool) or not isinstance(M, (int, np.integer)) or M < MIN_INTERVALS:
        raise ConfigurationError(f"nodes must be an integer >= {MIN_INTERVALS}, got {M!r}")
    if not np.isfinite(R) or R <= 0:
        raise ConfigurationError(f"radius must be positive, got {R!r}")
    if grading is None:
        grading = Grading()
    elif not isinstance(grading, Grading):
        grading = Grading(float(grading))

    M = int(M)
    if grading.ratio == 1.0:
        nodes = R * (np.arange(M + 1, dtype=np.float64) / M)
    else:
        q = grading.ratio ** (1.0 / (M - 1))
        widths = q ** np.arange(M, dtype=np.float64)
        nodes = np.concatenate(([0.0], np.cumsum(widths)))
        nodes *= R / nodes[-1]
    nodes[0] = 0.0
    nodes[-1] = R
    nodes.setflags(write=False)
    return RadialGrid(int(N), float(R), nodes, grading)


class RadialField:
    """Nodal values of a radial function on a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values):
        values = np.array(values, dtype=np.float64)
        if values.shape != (grid.size,):
            raise ConfigurationError(
                f"field has {values.shape} values, grid has {grid.size} nodes")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ConfigurationError(f"non-finite field value at node {bad} (r={grid.nodes[bad]:g})")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "RadialField":
        return cls(grid, func(grid.nodes))

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def max(self) -> float:
        return float(np.max(self.values))

    def __repr__(self):
        return f"RadialField({self.grid!r}, max={self.max():.6g})"


def laplacian_bands(grid: RadialGrid):
    """Three diagonals ``(lower, diag, upper)`` of the discrete Laplacian.

    ``lower[i]`` multiplies ``U[i-1]`` in row ``i`` and ``upper[i]`` multiplies
    ``U[i+1]``; unused corners are zero. The last row (r = R) is all zero.
    """
    r = grid.nodes
    N = grid.dimension
    if r.size < 3:
        raise ConfigurationError("radial Laplacian needs at least 3 nodes")
    h = np.diff(r)
    faces = 0.5 * (r[:-1] + r[1:])
    # conductance of each face: r_face^{N-1} / h
    cond = faces ** (N - 1) / h
    lower = np.zeros_like(r)
    upper = np.zeros_like(r)

    upper[0] = 2.0 * N / h[0] ** 2
    i = np.arange(1, r.size - 1)
    vol = (faces[i] ** N - faces[i - 1] ** N) / N
    lower[i] = cond[i - 1] / vol
    upper[i] = cond[i] / vol
    diag = -(lower + upper)
    return lower, diag, upper


def apply_bands(bands, u: np.ndarray) -> np.ndarray:
    lower, diag, upper = bands
    out = diag * u
    out[1:] += lower[1:] * u[:-1]
    out[:-1] += upper[:-1] * u[1:]
    return out


def radial_laplacian(field: RadialField) -> RadialField:
    """Discrete Laplacian of a radial field; the boundary entry is 0."""
    out = apply_bands(laplacian_bands(field.grid), field.values)
    out[-1] = 0.0
    return RadialField(field.grid, out)


def write_field_csv(path, field: RadialField) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "value"])
        for r, v in zip(field.grid.nodes, field.values):
            w.writerow([f"{r:.17g}", f"{v:.17g}"])
    return path


def grid_from_nodes(N: int, nodes) -> RadialGrid:
    """Grid on explicit nodes, e.g. read back from a field CSV."""
    nodes = np.array(nodes, dtype=np.float64)
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ConfigurationError(f"dimension must be an integer >= 1, got {N!r}")
    if nodes.ndim != 1 or nodes.size < MIN_INTERVALS + 1:
        raise ConfigurationError(f"need at least {MIN_INTERVALS + 1} nodes, got {nodes.size}")
    if nodes[0] != 0.0 or not np.all(np.diff(nodes) > 0) or not np.all(np.isfinite(nodes)):
        raise ConfigurationError("nodes must start at 0 and increase strictly")
    sp = np.diff(nodes)
    nodes.setflags(write=False)
    return RadialGrid(int(N), float(nodes[-1]), nodes, Grading(max(1.0, float(sp[-1] / sp[0]))))


def read_field_csv(path, N: int) -> RadialField:
    """Inverse of :func:`write_field_csv`."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"field file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["r", "value"]:
        raise ConfigurationError(f"{path}: expected header 'r,value'")
    try:
        data = np.array([[float(a), float(b)] for a, b, *_ in rows[1:]])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if data.size == 0:
        raise ConfigurationError(f"{path}: no data rows")
    return RadialField(grid_from_nodes(N, data[:, 0]), data[:, 1])
