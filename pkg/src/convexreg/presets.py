"""Right-hand sides, exact solutions and named presets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .grid import Grid, GridFunction


@dataclass(frozen=True)
class Constant:
    c: float

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], float(self.c))


@dataclass(frozen=True)
class BallIndicator:
    radius: float
    center: tuple[float, ...] | None = None

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.center is not None:
            x = x - np.asarray(self.center)
        return (np.sum(x * x, axis=-1) < self.radius**2).astype(float)


@dataclass(frozen=True)
class RadialPowerLog:
    """``g_β(x) = |x|^(-1) log^(-β)(e/|x|)`` for ``|x| < 1``, zero outside.

    On a grid the radius is floored at ``h/2`` so that the node at the
    singularity carries a finite value.
    """

    beta: float

    def profile(self, s):
        s = np.asarray(s, float)
        inside = (s > 0) & (s < 1.0)
        safe = np.where(inside, s, 0.5)
        return np.where(inside, 1.0 / (safe * np.log(math.e / safe) ** self.beta), 0.0)

    def __call__(self, x):
        return self.profile(np.linalg.norm(np.asarray(x, float), axis=-1))

    def sample(self, grid: Grid) -> np.ndarray:
        rad = np.linalg.norm(grid.points(), axis=-1)
        return self.profile(np.maximum(rad, 0.5 * grid.h))

    def ball_lq_mass(self, a: float, q: float, n: int) -> float:
        """``∫_{B_a} |g|^q`` by 1-D radial quadrature (substitution t = log(e/s))."""
        area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        a = min(a, 1.0)
        t_lo = math.log(math.e / a)

        # s = e^(1-t), ds = -s dt
        def integrand(t):
            s = math.exp(1.0 - t)
            return area * s ** (n - q) * t ** (-self.beta * q)

        val, _ = quad(integrand, t_lo, np.inf, limit=200)
        return val

    def cell_lq_means(self, grid: Grid, q: float, sub: int = 8) -> np.ndarray:
        """Node values ``(⨍_cell |g|^q)^(1/q)`` on the dual cells of ``grid``.

        Cells are integrated by a ``sub^n`` midpoint rule; the cell holding the
        singularity gets the exact mass of its inscribed ball plus the midpoint
        rule on the remainder.
        """
        n = grid.n
        h = grid.h
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        sub_pts = np.stack(np.meshgrid(*([offs] * n), indexing="ij"), -1).reshape(-1, n) * h
        pts = grid.points()
        vol = grid.cell_volumes()
        mass = np.zeros(grid.shape)
        flat_pts = pts.reshape(-1, n)
        flat_mass = mass.reshape(-1)
        lo = np.asarray(grid.lower)
        hi = np.asarray(grid.upper)
        for k in range(0, flat_pts.shape[0], 4096):
            block = flat_pts[k:k + 4096, None, :] + sub_pts[None]
            keep = np.all((block >= lo) & (block <= hi), axis=-1)
            vals = self(block) ** q * keep
            flat_mass[k:k + 4096] = vals.sum(axis=1) * (h / sub) ** n
        rad = np.linalg.norm(pts, axis=-1)
        centre = np.unravel_index(np.argmin(rad), grid.shape)
        if rad[centre] < 1e-12 * h:
            block = pts[centre][None] + sub_pts
            keep = np.all((block >= lo) & (block <= hi), axis=-1)
            outer = np.linalg.norm(block, axis=-1) >= 0.5 * h
            # fraction of the inscribed ball inside the clipped box
            frac = float(np.prod([1.0 if (pts[centre][i] - lo[i] > 0.5 * h - 1e-15
                                          and hi[i] - pts[centre][i] > 0.5 * h - 1e-15)
                                  else 0.5 for i in range(n)]))
            mass[centre] = (np.sum(self(block[keep & outer]) ** q) * (h / sub) ** n
                            + frac * self.ball_lq_mass(0.5 * h, q, n))
        return (mass / vol) ** (1.0 / q)


@dataclass(frozen=True)
class Manufactured:
    """``w = x_n (1 - x_n)`` solving ``-Δw = 2`` with the identity operator."""

    def exact(self, x):
        xn = np.asarray(x, float)[..., -1]
        return xn * (1.0 - xn)

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], 2.0)


@dataclass(frozen=True)
class HarmonicPolynomial:
    """``w = x_n (1 + eps * x_1)``: harmonic, zero on ``x_n = 0``."""

    eps: float = 1.0

    def exact(self, x):
        x = np.asarray(x, float)
        return x[..., -1] * (1.0 + self.eps * x[..., 0])

    def __call__(self, x):
        return np.zeros(np.shape(x)[:-1])


def parse_call(text: str) -> tuple[str, list[float]]:
    """Split ``name(a, b)`` into ``("name", [a, b])``."""
    text = text.strip()
    if "(" not in text:
        return text, []
    if not text.endswith(")"):
        raise ValueError(f"malformed preset {text!r}")
    name, args = text[:-1].split("(", 1)
    vals = [float(a) for a in args.split(",") if a.strip()]
    return name.strip(), vals


@dataclass(frozen=True)
class GridFileField:
    """Node values stored in an ``.npz`` file with arrays ``values``, ``lower`` and ``h``."""

    path: str

    def function(self) -> GridFunction:
        with np.load(self.path) as data:
            values = np.asarray(data["values"], float)
            grid = Grid(tuple(float(v) for v in data["lower"]), float(data["h"]), values.shape)
        return GridFunction(grid, values)

    def sample(self, grid: Grid) -> np.ndarray:
        from .grid import sample

        return sample(self.function(), grid)

    def __call__(self, x):
        return self.function().interpolator()(x)


def rhs_preset(text: str):
    text = text.strip()
    if text.startswith("file(") and text.endswith(")"):
        path = text[5:-1].strip().strip("'\"")
        if not path:
            raise ValueError("file preset needs a path")
        return GridFileField(path)
    name, args = parse_call(text)
    if name == "zero":
        return Constant(0.0)
    if name == "constant":
        return Constant(args[0] if args else 1.0)
    if name == "manufactured":
        return Manufactured()
    if name == "harmonic":
        return HarmonicPolynomial(args[0] if args else 1.0)
    if name == "g_beta":
        if not args:
            raise ValueError("g_beta needs an exponent")
        return RadialPowerLog(args[0])
    if name == "ball":
        return BallIndicator(args[0] if args else 0.5)
    raise ValueError(f"unknown rhs preset {name!r}")


def domain_preset(text: str, n: int):
    from .geometry import ConvexDomain, GraphFunction

    name, args = parse_call(text)
    if name == "half_space":
        return ConvexDomain.half_space(n)
    if name == "cone_k":
        return ConvexDomain.circular_cone(args[0] if args else 1.0, n)
    if name == "graph_quadratic":
        return ConvexDomain.graph_domain(GraphFunction("quadratic", (args[0] if args else 1.0,)), n)
    if name == "graph_power":
        return ConvexDomain.graph_domain(GraphFunction("power", (args[0] if args else 1.5,)), n)
    if name == "graph_max_affine":
        return ConvexDomain.graph_domain(
            GraphFunction("max_affine", tuple(args) if args else (0.5, -0.25)), n)
    if name == "graph_zero":
        return ConvexDomain.graph_domain("zero", n)
    raise ValueError(f"unknown domain preset {name!r}")


DOMAIN_PRESETS = ("half_space", "cone_k(slope)", "graph_quadratic", "graph_power(p)",
                  "graph_max_affine", "graph_zero")
RHS_PRESETS = ("zero", "constant(c)", "manufactured", "harmonic(eps)", "g_beta(beta)",
               "ball(r)", "file(path)")
OPERATOR_PRESETS = ("identity", "anisotropic", "checkerboard", "checkerboard_diagonal")


@dataclass(frozen=True)
class ScaledField:
    """``alpha * field``, keeping the field's own grid sampling."""

    field: object
    alpha: float

    def sample(self, grid: Grid) -> np.ndarray:
        from .grid import sample

        return self.alpha * sample(self.field, grid)

    def __call__(self, x):
        return self.alpha * np.asarray(self.field(x), float)


def scaled(field, alpha: float):
    if isinstance(field, ScaledField):
        return ScaledField(field.field, field.alpha * alpha)
    if np.isscalar(field):
        return alpha * float(field)
    return ScaledField(field, alpha)
