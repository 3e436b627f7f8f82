"""Uniform Cartesian grids and sampled fields.

Fields are node-sampled.  The measure model attaches to every node its dual
cell ``[x - h/2, x + h/2]^n`` clipped to the bounding box, so that functions
are piecewise constant on cells and level-set measures are exact sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

EXTERIOR = 0
INTERIOR = 1
DIRICHLET = 2  # node on the domain boundary, zero data
DATA = 3  # node on the cube boundary inside the domain


@dataclass(frozen=True)
class Grid:
    """Node lattice ``lower + h * index`` with ``shape`` nodes per axis."""

    lower: tuple[float, ...]
    h: float
    shape: tuple[int, ...]

    @classmethod
    def box(cls, half_width: float, height: float, h: float, n: int) -> "Grid":
        """Lattice on ``[-c, c]^(n-1) x [0, d]``; ``h`` must divide both extents."""
        counts = []
        for extent in [2.0 * half_width] * (n - 1) + [height]:
            k = extent / h
            if abs(k - round(k)) > 1e-8 * max(1.0, k) or round(k) < 1:
                raise ValueError(f"spacing {h!r} does not divide extent {extent!r}")
            counts.append(int(round(k)) + 1)
        lower = tuple([-half_width] * (n - 1) + [0.0])
        return cls(lower, float(h), tuple(counts))

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(lo + self.h * (k - 1) for lo, k in zip(self.lower, self.shape))

    def axes(self) -> list[np.ndarray]:
        return [lo + self.h * np.arange(k) for lo, k in zip(self.lower, self.shape)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def cell_weights(self) -> list[np.ndarray]:
        """Per-axis dual-cell lengths (half cells on the box faces)."""
        out = []
        for k in self.shape:
            w = np.full(k, self.h)
            w[0] = w[-1] = 0.5 * self.h
            out.append(w)
        return out

    def cell_volumes(self) -> np.ndarray:
        vol = np.ones(self.shape)
        for axis, w in enumerate(self.cell_weights()):
            sh = [1] * self.n
            sh[axis] = -1
            vol = vol * w.reshape(sh)
        return vol

    def cell_overlap(self, lo: Sequence[float], hi: Sequence[float]) -> list[np.ndarray]:
        """Per-axis lengths of (dual cell) ∩ [lo_k, hi_k]."""
        out = []
        for ax, (a, b) in zip(self.axes(), zip(lo, hi)):
            left = np.maximum(ax - 0.5 * self.h, ax[0])
            right = np.minimum(ax + 0.5 * self.h, ax[-1])
            out.append(np.clip(np.minimum(right, b) - np.maximum(left, a), 0.0, None))
        return out

    def sub_box_slices(self, lo: Sequence[float], hi: Sequence[float]) -> tuple[slice, ...]:
        """Index slices of the nodes lying in the closed box [lo, hi]."""
        sl = []
        for ax, a, b in zip(self.axes(), lo, hi):
            tol = 1e-9 * self.h
            idx = np.nonzero((ax >= a - tol) & (ax <= b + tol))[0]
            if idx.size == 0:
                raise ValueError("box contains no grid nodes")
            sl.append(slice(int(idx[0]), int(idx[-1]) + 1))
        return tuple(sl)


@dataclass(frozen=True)
class GridFunction:
    """Node values on a grid plus the set of nodes belonging to the domain."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", vals)
        m = np.ones(self.grid.shape, bool) if self.mask is None else np.asarray(self.mask, bool)
        object.__setattr__(self, "mask", m)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values, self.mask)

    def __mul__(self, alpha: float) -> "GridFunction":
        return self.with_values(alpha * self.values)

    __rmul__ = __mul__

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values - other.values)

    def cell_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (values, cell volumes) over the masked nodes."""
        vol = self.grid.cell_volumes()
        return self.values[self.mask], vol[self.mask]

    def sup(self, box: tuple[Sequence[float], Sequence[float]] | None = None) -> float:
        vals = np.where(self.mask, np.abs(self.values), 0.0)
        if box is not None:
            vals = vals[self.grid.sub_box_slices(*box)]
        return float(vals.max()) if vals.size else 0.0

    def interpolator(self, method: str = "linear") -> Callable[[np.ndarray], np.ndarray]:
        """Interpolant of the zero-extended field; zero outside the lattice.

        ``"cubic"`` is local tensor-product Lagrange interpolation on the
        4^n surrounding nodes, exact for polynomials of degree 3 per variable.
        """
        vals = np.where(self.mask, self.values, 0.0)
        if method == "cubic" and min(self.grid.shape) >= 4:
            return lambda pts: _lagrange_cubic(self.grid, vals, pts)
        interp = RegularGridInterpolator(
            self.grid.axes(), vals, method="linear", bounds_error=False, fill_value=0.0
        )
        return lambda pts: interp(np.asarray(pts, float).reshape(-1, self.grid.n)).reshape(
            np.shape(pts)[:-1]
        )


def _lagrange_cubic(grid: Grid, vals: np.ndarray, pts) -> np.ndarray:
    pts = np.asarray(pts, float)
    flat = pts.reshape(-1, grid.n)
    lower = np.asarray(grid.lower)
    shape = np.asarray(grid.shape)
    t = (flat - lower) / grid.h
    outside = np.any((t < -1e-9) | (t > shape - 1 + 1e-9), axis=1)
    base = np.clip(np.floor(t).astype(int) - 1, 0, shape - 4)
    s = t - base  # local coordinate, nodes at 0, 1, 2, 3
    nodes = np.arange(4.0)
    weights = []
    for k in range(grid.n):
        sk = s[:, k, None]
        w = np.ones((len(flat), 4))
        for j in range(4):
            for m in range(4):
                if m != j:
                    w[:, j] *= (sk[:, 0] - nodes[m]) / (nodes[j] - nodes[m])
        weights.append(w)
    out = np.zeros(len(flat))
    for offs in np.ndindex(*(4,) * grid.n):
        idx = tuple(base[:, k] + offs[k] for k in range(grid.n))
        wt = np.ones(len(flat))
        for k in range(grid.n):
            wt = wt * weights[k][:, offs[k]]
        out += wt * vals[idx]
    out[outside] = 0.0
    return out.reshape(pts.shape[:-1])


def sample(fn, grid: Grid) -> np.ndarray:
    """Evaluate a field on grid nodes.

    Objects providing ``sample(grid)`` control their own evaluation (singular
    presets use it to floor the radius at the grid scale); plain callables get
    the node coordinates; a GridFunction on another lattice is interpolated.
    """
    if isinstance(fn, GridFunction):
        if fn.grid == grid:
            return np.where(fn.mask, fn.values, 0.0)
        return fn.interpolator()(grid.points())
    if hasattr(fn, "sample"):
        return np.asarray(fn.sample(grid), float)
    if np.isscalar(fn):
        return np.full(grid.shape, float(fn))
    return np.asarray(fn(grid.points()), float).reshape(grid.shape)
