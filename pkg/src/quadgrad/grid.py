"""Structured grids on intervals and rectangles.

The last axis plays the role of the normal direction ``x_n``: the face
``x_n = 0`` is the *flat portion* used by the boundary inequalities, every
other face is an ordinary Dirichlet face.  Grid functions are stored with
shape ``grid.shape`` in C order (``indexing="ij"``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

INTERIOR = 0
DIRICHLET = 1
FLAT = 2


class GridError(ValueError):
    """Invalid grid, region or grid function."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid on ``[0, L_0] x ... x [0, L_{d-1}]``."""

    dimension: int
    extents: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.dimension}")
        if len(self.extents) != self.dimension or len(self.counts) != self.dimension:
            raise GridError("extents and counts must have one entry per axis")
        if any(n < 3 for n in self.counts):
            raise GridError(f"need at least 3 nodes per axis, got {self.counts}")
        if any(not np.isfinite(L) or L <= 0 for L in self.extents):
            raise GridError(f"extents must be positive, got {self.extents}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.extents, self.counts))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        # index arithmetic, not linspace, so coordinates are reproducible exactly
        return tuple(np.arange(n) * h for n, h in zip(self.counts, self.spacing))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def xn(self) -> np.ndarray:
        """Normal coordinate (last axis) at every node."""
        return self.coords[-1]

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.full(self.shape, INTERIOR, dtype=np.int8)
        for ax in range(self.dimension):
            idx = [slice(None)] * self.dimension
            for end in (0, -1):
                idx[ax] = end
                m[tuple(idx)] = DIRICHLET
        flat = [slice(None)] * self.dimension
        flat[-1] = 0
        m[tuple(flat)] = FLAT
        return m

    @cached_property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Flat (C-order) indices of interior nodes."""
        return np.flatnonzero(self.interior.ravel())

    @cached_property
    def boundary_distance(self) -> np.ndarray:
        d = [np.minimum(x, L - x) for x, L in zip(self.coords, self.extents)]
        return np.min(np.stack(d), axis=0)

    @property
    def centroid_node(self) -> tuple[int, ...]:
        return tuple((n - 1) // 2 if n % 2 else n // 2 for n in self.counts)

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        return tuple(
            int(np.clip(round(p / h), 0, n - 1))
            for p, h, n in zip(point, self.spacing, self.counts)
        )

    def function(self, values) -> "GridFunction":
        return GridFunction(self, np.asarray(values, dtype=float).reshape(self.shape))

    def evaluate(self, fn: Callable[..., np.ndarray]) -> "GridFunction":
        """Sample ``fn(*coords)`` at every node."""
        vals = np.broadcast_to(np.asarray(fn(*self.coords), dtype=float), self.shape)
        return self.function(np.array(vals))

    def zeros(self) -> "GridFunction":
        return self.function(np.zeros(self.shape))

    def whole(self) -> "Region":
        return Region(self, (0,) * self.dimension, tuple(self.counts))

    def same_as(self, other: "Grid") -> bool:
        return (
            self is other
            or (
                self.dimension == other.dimension
                and self.counts == other.counts
                and np.allclose(self.extents, other.extents, rtol=0, atol=0)
            )
        )


def build_grid(dimension: int, extents: Sequence[float], counts: Sequence[int]) -> Grid:
    return Grid(int(dimension), tuple(float(L) for L in extents), tuple(int(n) for n in counts))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values on a grid; always finite."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {vals.size}")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise GridError(f"non-finite value at node {tuple(int(i) for i in bad)}")
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return GridFunction(self.grid, fn(self.values))


@dataclass(frozen=True, eq=False)
class Region:
    """Axis-aligned box of nodes, ``lo[k] <= i_k < hi[k]``."""

    grid: Grid
    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != self.grid.dimension or len(self.hi) != self.grid.dimension:
            raise GridError("region bounds must match grid dimension")
        for l, h, n in zip(self.lo, self.hi, self.grid.counts):
            if not 0 <= l < h <= n:
                raise GridError(f"region [{self.lo}, {self.hi}) not inside grid {self.grid.counts}")

    @classmethod
    def from_coords(cls, grid: Grid, lower: Sequence[float], upper: Sequence[float]) -> "Region":
        """Box of nodes between the nodes nearest to ``lower`` and ``upper``."""
        lo = grid.nearest_node(lower)
        hi = tuple(i + 1 for i in grid.nearest_node(upper))
        return cls(grid, lo, hi)

    @property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(l, h) for l, h in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def measure(self) -> float:
        return float(np.prod([(n - 1) * h for n, h in zip(self.shape, self.grid.spacing)]))

    def contains(self, other: "Region") -> bool:
        return all(a <= b for a, b in zip(self.lo, other.lo)) and all(
            a >= b for a, b in zip(self.hi, other.hi)
        )

    def node_mask(self) -> np.ndarray:
        m = np.zeros(self.grid.shape, dtype=bool)
        m[self.slices] = True
        return m

    def boundary_mask(self) -> np.ndarray:
        """Nodes on the faces of the box."""
        inner = np.zeros(self.grid.shape, dtype=bool)
        inner_sl = tuple(slice(l + 1, h - 1) for l, h in zip(self.lo, self.hi))
        inner[inner_sl] = True
        return self.node_mask() & ~inner

    def weights(self) -> np.ndarray:
        """Tensor trapezoid weights over the box; they sum to ``measure``."""
        w = np.ones(())
        for n, h in zip(self.shape, self.grid.spacing):
            w1 = np.full(n, h)
            if n > 1:
                w1[[0, -1]] = h / 2
            else:
                w1[:] = 0.0
            w = np.multiply.outer(w, w1)
        return w


def lp_mean(f: GridFunction | np.ndarray, p: float, region: Region) -> float:
    """Discrete ``(int_R |f|^p)^(1/p)`` with trapezoid weights."""
    if p <= 0:
        raise GridError(f"p must be positive, got {p}")
    w = region.weights()
    if region.measure <= 0:
        raise GridError("empty region (zero measure)")
    vals = np.abs(np.asarray(f, dtype=float).reshape(region.grid.shape)[region.slices])
    top = vals.max()
    if top == 0:
        return 0.0
    # factor out the max so large p does not overflow
    s = np.sum(w * (vals / top) ** p)
    return float(top * s ** (1.0 / p))


def boundary_quotient(f: GridFunction) -> GridFunction:
    """``f / x_n`` off the flat face; one-sided ``df/dx_n`` on it."""
    grid = f.grid
    vals = f.values
    face = vals[..., 0]
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    if np.any(np.abs(face) > 1e-12 * scale):
        bad = int(np.argmax(np.abs(face)))
        raise GridError(f"field does not vanish on the flat face (node {bad}, value {face.flat[bad]:.3e})")
    xn = grid.xn
    q = np.empty_like(vals)
    q[..., 1:] = vals[..., 1:] / xn[..., 1:]
    q[..., 0] = (vals[..., 1] - vals[..., 0]) / grid.spacing[-1]
    return GridFunction(grid, q)


def half_boxes(grid: Grid, ratios: Sequence[float] = (1.0, 1.5, 2.0)) -> dict[float, Region]:
    """Nested boxes anchored on the flat face, standing in for half-balls.

    The largest ratio fills the domain: in 2D the box is centred on the face
    with half-width ``L_0/2`` and height ``L_1``; the others are scaled down
    proportionally.  In 1D the boxes are ``[0, r * L / R_max]``.
    """
    ratios = sorted(ratios)
    rmax = ratios[-1]
    out = {}
    if grid.dimension == 1:
        (L,) = grid.extents
        for r in ratios:
            out[r] = Region.from_coords(grid, [0.0], [r / rmax * L])
    else:
        L0, L1 = grid.extents
        r0 = min(L0 / 2, L1) / rmax
        xc = L0 / 2
        for r in ratios:
            out[r] = Region.from_coords(grid, [xc - r * r0, 0.0], [xc + r * r0, r * r0])
    return out
