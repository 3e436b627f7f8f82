"""Convex domains touching the origin, boundary moduli and the scale schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect

from .grid import DATA, DIRICHLET, EXTERIOR, INTERIOR, Grid, GridFunction


class DegenerateSchedule(Exception):
    """ψ(r0) = 0: the domain is flat near 0 and no scale schedule is needed."""


# ---------------------------------------------------------------- graph catalog


@dataclass(frozen=True)
class GraphFunction:
    """Convex ``L : R^(n-1) -> [0, inf)`` with ``L(0) = 0``, from a closed-form catalog."""

    name: str
    params: tuple = ()

    def __call__(self, xp: np.ndarray) -> np.ndarray:
        xp = np.asarray(xp, float)
        rad = np.sqrt(np.sum(xp * xp, axis=-1))
        if self.name == "zero":
            return np.zeros(rad.shape)
        if self.name == "quadratic":
            (coef,) = self.params or (1.0,)
            return coef * rad**2
        if self.name == "power":
            (p,) = self.params
            return rad**p
        if self.name == "cone":
            (slope,) = self.params
            return slope * rad
        if self.name == "max_affine":
            slopes = np.asarray(self.params, float).reshape(-1, xp.shape[-1])
            return np.maximum(0.0, np.max(xp @ slopes.T, axis=-1))
        raise ValueError(f"unknown graph function {self.name!r}")


GRAPH_PRESETS = {
    "zero": GraphFunction("zero"),
    "quadratic": GraphFunction("quadratic", (1.0,)),
    "power1.5": GraphFunction("power", (1.5,)),
    "max_affine": GraphFunction("max_affine", (0.5, -0.25)),
}


# ---------------------------------------------------------------------- domains


@dataclass(frozen=True)
class ConvexDomain:
    """Half-space, cone or graph domain in R^n_+ with 0 on its boundary.

    Cones are either polyhedral (inward ``normals`` of half-spaces through 0)
    or circular ``{x_n > slope |x'|}``.
    """

    kind: str
    n: int = 2
    graph: GraphFunction | None = None
    normals: tuple[tuple[float, ...], ...] = ()
    slope: float | None = None
    name: str = field(default="", compare=False)
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if self.kind not in ("half_space", "cone", "graph"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "graph" and self.graph is None:
            raise ValueError("graph domain needs a graph function")
        if self.kind == "cone" and not self.normals and self.slope is None:
            raise ValueError("cone needs normals or a slope")

    @classmethod
    def half_space(cls, n: int = 2) -> "ConvexDomain":
        return cls("half_space", n, name="half_space")

    @classmethod
    def circular_cone(cls, slope: float, n: int = 2) -> "ConvexDomain":
        if slope <= 0:
            raise ValueError("cone slope must be positive")
        return cls("cone", n, slope=float(slope), name=f"cone_k({slope:g})")

    @classmethod
    def polyhedral_cone(cls, normals: Sequence[Sequence[float]]) -> "ConvexDomain":
        normals = tuple(tuple(float(v) for v in a) for a in normals)
        return cls("cone", len(normals[0]), normals=normals, name="cone")

    @classmethod
    def graph_domain(cls, graph: GraphFunction | str, n: int = 2) -> "ConvexDomain":
        if isinstance(graph, str):
            graph = GRAPH_PRESETS[graph]
        return cls("graph", n, graph=graph, name=f"graph_{graph.name}")

    def rescaled(self, r: float) -> "ConvexDomain":
        """The blow-up ``Ω / r``: ``y ∈ Ω/r`` iff ``r y ∈ Ω``."""
        if self.kind != "graph":
            return self
        return replace(self, scale=self.scale * r)

    def level(self, x: np.ndarray) -> np.ndarray:
        """Negative inside, zero on the boundary, positive outside."""
        x = np.asarray(x, float)
        if self.scale != 1.0:
            return ConvexDomain.level(replace(self, scale=1.0), self.scale * x) / self.scale
        xn = x[..., -1]
        if self.kind == "half_space":
            return -xn
        if self.kind == "graph":
            return self.graph(x[..., :-1]) - xn
        if self.slope is not None:
            rad = np.sqrt(np.sum(x[..., :-1] ** 2, axis=-1))
            lev = (self.slope * rad - xn) / math.hypot(1.0, self.slope)
        else:
            a = np.asarray(self.normals)
            a = a / np.linalg.norm(a, axis=1, keepdims=True)
            lev = np.max(-(x @ a.T), axis=-1)
        return np.maximum(lev, -xn)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.level(x) < -tol

    def closure_contains(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        return self.level(x) <= tol

    def boundary_height(self, xp: np.ndarray) -> np.ndarray:
        """Height of ∂Ω above ``x'`` (graphs and circular cones)."""
        xp = np.asarray(xp, float)
        rad = np.sqrt(np.sum(xp * xp, axis=-1))
        if self.kind == "half_space":
            return np.zeros(rad.shape)
        if self.kind == "graph":
            return self.graph(self.scale * xp) / self.scale
        if self.slope is not None:
            return self.slope * rad
        raise ValueError("boundary height undefined for polyhedral cones")


@dataclass(frozen=True)
class CubeSpec:
    """``Q[c x d] = T_c x (0, d)``; ``T_c`` is realized as the cube ``|x_i| < c``."""

    half_width: float
    height: float

    def __post_init__(self):
        if not (self.half_width > 0 and self.height > 0):
            raise ValueError("cube extents must be positive")

    @classmethod
    def square(cls, r: float) -> "CubeSpec":
        return cls(r, r)

    def bounds(self, n: int) -> tuple[list[float], list[float]]:
        c, d = self.half_width, self.height
        return [-c] * (n - 1) + [0.0], [c] * (n - 1) + [d]


@dataclass(frozen=True)
class MaskedGrid:
    """Node classification of ``dom ∩ Q`` plus boundary-cut fractions.

    ``theta[..., k, 0]`` and ``theta[..., k, 1]`` are the distances (in units of
    h) from an interior node to ∂dom along ``-e_k`` and ``+e_k``; 1 means the
    lattice neighbour is used.
    """

    grid: Grid
    kind: np.ndarray
    theta: np.ndarray
    domain: ConvexDomain
    cube: CubeSpec

    @property
    def in_domain(self) -> np.ndarray:
        return self.kind != EXTERIOR

    def function(self, values) -> GridFunction:
        return GridFunction(self.grid, np.asarray(values, float), self.in_domain)

    def cut_points(self, axis: int, side: int) -> np.ndarray:
        """Coordinates of the boundary-cut points along ``(-1)^(side+1) e_axis``."""
        pts = self.grid.points().copy()
        step = (2 * side - 1) * self.theta[..., axis, side] * self.grid.h
        pts[..., axis] += step
        return pts


def build_mask(dom: ConvexDomain, cube: CubeSpec, h: float) -> MaskedGrid:
    """Classify the nodes of ``Q`` into interior, ∂dom, ∂Q ∩ dom and exterior."""
    grid = Grid.box(cube.half_width, cube.height, h, dom.n)
    pts = grid.points()
    tol = 1e-12 * max(cube.half_width, cube.height)
    lev = dom.level(pts)
    lo, hi = cube.bounds(dom.n)
    on_face = np.zeros(grid.shape, bool)
    for k in range(dom.n):
        on_face |= np.abs(pts[..., k] - lo[k]) <= tol
        on_face |= np.abs(pts[..., k] - hi[k]) <= tol
    kind = np.full(grid.shape, EXTERIOR, np.int8)
    kind[(lev < -tol) & on_face] = DATA
    kind[(lev < -tol) & ~on_face] = INTERIOR
    kind[np.abs(lev) <= tol] = DIRICHLET
    if not np.any(kind == INTERIOR):
        raise ValueError("empty interior")

    theta = np.ones(grid.shape + (dom.n, 2))
    interior = kind == INTERIOR
    for axis in range(dom.n):
        for side, shift in ((0, 1), (1, -1)):
            # neighbour along (2*side - 1) e_axis
            nb = np.roll(kind, shift, axis=axis)
            cut = interior & (nb == EXTERIOR)
            if not np.any(cut):
                continue
            base = pts[cut]
            direction = np.zeros(dom.n)
            direction[axis] = (2 * side - 1) * h
            a = np.zeros(len(base))
            b = np.ones(len(base))
            for _ in range(60):
                mid = 0.5 * (a + b)
                inside = dom.level(base + mid[:, None] * direction) < 0
                a = np.where(inside, mid, a)
                b = np.where(inside, b, mid)
            theta[cut, axis, side] = np.maximum(0.5 * (a + b), 1e-3)
    return MaskedGrid(grid, kind, theta, dom, cube)


# --------------------------------------------------------------- cone opening


def _sphere_directions(m: int, count: int = 720) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    rng = np.random.default_rng(0)
    v = rng.normal(size=(count * 8, m))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def cone_opening(dom: ConvexDomain, tol: float = 1e-12) -> float:
    """ν = inf{r > 0 : (e_n + T_r) ∩ ∂X ≠ ∅} by bisection on r."""
    if dom.kind == "half_space" or (dom.kind == "graph" and dom.graph.name == "zero"):
        raise ValueError("opening undefined for ℝ⁺ⁿ")
    if dom.kind != "cone":
        raise ValueError("cone_opening needs a cone")
    n = dom.n
    dirs = _sphere_directions(n - 1)
    en = np.zeros(n)
    en[-1] = 1.0
    if not dom.contains(en[None])[0]:
        raise ValueError("e_n must lie inside the cone")

    def leaves(r: float) -> bool:
        pts = np.tile(en, (len(dirs), 1))
        pts[:, :-1] = r * dirs
        return bool(np.any(dom.level(pts) >= 0))

    hi = 1.0
    while not leaves(hi):
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("cone opening diverged; is the cone the half-space?")
    lo = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if leaves(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ------------------------------------------------------------------ moduli


def _disc_samples(m: int, r: float, density: int = 400) -> np.ndarray:
    if m == 1:
        s = np.linspace(-r, r, 2 * density + 1)
        return s[s != 0][:, None]
    rad = np.linspace(r / density, r, density)
    dirs = _sphere_directions(m, 256)
    return (rad[:, None, None] * dirs[None]).reshape(-1, m)


def graph_modulus(dom: ConvexDomain, r: float, density: int = 400) -> float:
    """L̃(r) = max{L(x')/|x'| : x' ∈ T_r} over a dense sample of the closed disc."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if dom.kind == "half_space":
        return 0.0
    xp = _disc_samples(dom.n - 1, r, density)
    vals = dom.boundary_height(xp) / np.linalg.norm(xp, axis=1)
    return float(np.max(vals))


def psi(dom: ConvexDomain, r: float, G0_tilde: Callable[[float], float]) -> float:
    """ψ(r) = max{L̃(r), G̃₀(r)}."""
    return max(graph_modulus(dom, r), float(G0_tilde(r)))


def running_sup(fn: Callable[[float], float], r_max: float, r_min: float, points: int = 200
                ) -> Callable[[float], float]:
    """Continuous non-decreasing envelope ``r -> sup_{t <= r} fn(t)``.

    The supremum is taken over a geometric sample of ``[r_min, r_max]`` and
    linearly interpolated; beyond ``r_max`` the envelope is constant.
    """
    ts = np.geomspace(r_min, r_max, points)
    vals = np.maximum.accumulate(np.array([fn(t) for t in ts]))

    def envelope(r: float) -> float:
        if r <= ts[0]:
            return float(vals[0] * r / ts[0])
        return float(np.interp(r, ts, vals))

    return envelope


@dataclass(frozen=True)
class ScaleSchedule:
    r0: float
    psi0: float
    sigmas: tuple[float, ...]
    radii: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.radii)


def solve_scale_equation(psi_fn: Callable[[float], float], r0: float, J: int,
                         rtol: float = 1e-12) -> ScaleSchedule:
    """Roots ``r_j √ψ(r_j) = σ_j`` with ``σ_j = r0 ψ(r0) / 2^j``, j = 0..J-1.

    Bisection brackets ``(0, r0]``; on plateaus it converges to the smallest
    root.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    psi0 = float(psi_fn(r0))
    if psi0 <= 0:
        raise DegenerateSchedule("ψ(r0) = 0")
    sigmas, radii = [], []
    for j in range(J):
        s = r0 * psi0 / 2**j

        def f(r, s=s):
            return r * math.sqrt(max(psi_fn(r), 0.0)) - s

        if f(r0) < 0:
            raise ValueError(f"root bracketing failed for σ_{j}; need ψ(r0) ≤ 1")
        root = bisect(f, 0.0, r0, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps),
                      maxiter=2000)
        sigmas.append(s)
        radii.append(root)
    return ScaleSchedule(float(r0), psi0, tuple(sigmas), tuple(radii))
