"""Rearrangements, Lorentz quasi-norms and Riesz-type potentials on cell data.

A grid function is read as piecewise constant on the dual cells of its
nodes, so distribution functions and rearrangements are finite step
functions and every identity below is evaluated exactly on that model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .grid import Grid, GridFunction
from .quadrature import dyadic_midpoint


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class LorentzIndex:
    p: float
    q: float

    def __post_init__(self):
        if not (1 <= self.p < math.inf):
            raise ValueError(f"Lorentz exponent p={self.p!r} must satisfy 1 <= p < inf")
        if not self.q > 0:
            raise ValueError(f"Lorentz exponent q={self.q!r} must be positive")

    @property
    def weak(self) -> bool:
        return math.isinf(self.q)


@dataclass(frozen=True)
class RearrangementProfile:
    """Decreasing rearrangement ``f*`` as steps of (measure, value)."""

    measures: np.ndarray
    values: np.ndarray
    total_measure: float = field(default=0.0)

    def __post_init__(self):
        m = np.asarray(self.measures, float)
        v = np.asarray(self.values, float)
        if m.shape != v.shape or m.ndim != 1:
            raise ValueError("measures and values must be matching 1-D arrays")
        if np.any(m <= 0):
            raise ValueError("step measures must be positive")
        if np.any(np.diff(v) >= 0):
            raise ValueError("step values must be strictly decreasing")
        object.__setattr__(self, "measures", m)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "total_measure", float(m.sum()))

    @property
    def steps(self) -> list[tuple[float, float]]:
        return list(zip(self.measures.tolist(), self.values.tolist()))

    @property
    def edges(self) -> np.ndarray:
        """Right end points ``s_k`` of the steps of ``f*``."""
        return np.cumsum(self.measures)

    def distribution(self, level: float) -> float:
        """``|{|f| > level}|``."""
        return float(self.measures[self.values > level].sum())

    def f_star(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        k = np.searchsorted(self.edges, s, side="right")
        vals = np.append(self.values, 0.0)
        return vals[k]

    def prefix_integral(self, s) -> np.ndarray:
        """``∫_0^s f*(t) dt``."""
        s = np.asarray(s, float)
        edges = self.edges
        cum = np.concatenate([[0.0], np.cumsum(self.measures * self.values)])
        starts = np.concatenate([[0.0], edges])
        k = np.searchsorted(edges, s, side="right")
        vals = np.append(self.values, 0.0)
        return cum[k] + vals[k] * (s - starts[k])

    def f_double_star(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        return self.prefix_integral(s) / s


def profile_from_cells(values: np.ndarray, volumes: np.ndarray) -> RearrangementProfile:
    """Rearrangement of the step function taking ``|values[i]|`` on cells of ``volumes[i]``."""
    vals = np.abs(np.asarray(values, float).ravel())
    vols = np.asarray(volumes, float).ravel()
    keep = vols > 0
    vals, vols = vals[keep], vols[keep]
    if vals.size == 0:
        raise ValueError("empty domain")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite values")
    uniq, inv = np.unique(-vals, return_inverse=True)
    meas = np.bincount(inv.ravel(), weights=vols)
    return RearrangementProfile(meas, -uniq)


def rearrange(f: GridFunction) -> RearrangementProfile:
    vals, vols = f.cell_data()
    return profile_from_cells(vals, vols)


def maximal_average(profile: RearrangementProfile, rho: float) -> float:
    """``f**(ρ) = ρ^(-1) ∫_0^ρ f*``."""
    if not rho > 0:
        raise ValueError("averaging length must be positive")
    return float(profile.f_double_star(rho))


def lorentz_integral(profile: RearrangementProfile, idx: LorentzIndex) -> float:
    """``∫_0^∞ (λ^p |{|f| > λ}|)^(q/p) dλ/λ``; for ``q = ∞`` the supremum of ``λ^p |{…}|``.

    The distribution function is constant between consecutive values, so
    the integral is a finite sum.
    """
    v = profile.values
    pos = v > 0
    v = v[pos]
    mu = profile.edges[pos]
    if v.size == 0:
        return 0.0
    if idx.weak:
        return float(np.max(v**idx.p * mu))
    q, p = idx.q, idx.p
    nxt = np.append(v[1:], 0.0)
    return float(np.sum(mu ** (q / p) * (v**q - nxt**q)) / q)


def lorentz_norm(f: GridFunction | RearrangementProfile, idx: LorentzIndex) -> float:
    profile = f if isinstance(f, RearrangementProfile) else rearrange(f)
    val = lorentz_integral(profile, idx)
    if idx.weak:
        return val ** (1.0 / idx.p)
    return val ** (1.0 / idx.q)


def maximal_integral(profile: RearrangementProfile, idx: LorentzIndex,
                     panels: int = 16) -> float:
    """``∫_0^∞ (f**(ρ) ρ^(1/p))^q dρ/ρ`` (needs ``p > 1``, ``q < ∞``).

    Exact on ``[0, s_1]`` where ``f**`` is constant and beyond the total
    measure where ``f**(ρ) = ‖f‖_1 / ρ``; dyadic midpoint rule in between.
    """
    p, q = idx.p, idx.q
    if p <= 1 or idx.weak:
        raise ValueError("maximal characterisation needs p > 1 and q < inf")
    s1 = float(profile.measures[0])
    total = profile.total_measure
    v1 = float(profile.values[0])
    head = v1**q * s1 ** (q / p) / (q / p)
    mass = float(profile.prefix_integral(total))
    tail = mass**q * total ** ((1 / p - 1) * q) / ((1 - 1 / p) * q)
    if total > s1:
        mid = dyadic_midpoint(lambda r: (profile.f_double_star(r) * r ** (1 / p)) ** q / r,
                              s1, total, panels)
    else:
        mid = 0.0
    return head + mid + tail


def lebesgue_norm(f: GridFunction | tuple[np.ndarray, np.ndarray], q: float) -> float:
    vals, vols = f.cell_data() if isinstance(f, GridFunction) else f
    if math.isinf(q):
        return float(np.max(np.abs(vals))) if np.size(vals) else 0.0
    return float(np.sum(np.abs(vals) ** q * vols) ** (1.0 / q))


# ---------------------------------------------------------------------------
# box norms

def box_norm_profile(f: GridFunction, q: float) -> Callable[[float | np.ndarray], np.ndarray]:
    """``ρ ↦ ‖f‖_{L^q(mask ∩ Q[ρ × ρ])}`` with exact cell/box overlaps.

    ``Q[ρ × ρ] = [-ρ, ρ]^(n-1) × [0, ρ]``.  The result is continuous and
    non-decreasing in ρ.
    """
    grid = f.grid
    n = grid.n
    dens = np.where(f.mask, np.abs(f.values) ** q, 0.0)

    def one(rho: float) -> float:
        lo = [-rho] * (n - 1) + [0.0]
        hi = [rho] * n
        acc = dens
        # contracting the leading axis each time walks through x_1, ..., x_n
        for w in grid.cell_overlap(lo, hi):
            acc = np.tensordot(w, acc, axes=([0], [0]))
        return float(acc) ** (1.0 / q)

    def profile(rho):
        arr = np.asarray(rho, float)
        out = np.array([one(float(r)) for r in arr.ravel()])
        return out.reshape(arr.shape) if arr.ndim else out[0]

    return profile


# ---------------------------------------------------------------------------
# Riesz-type potential

@dataclass(frozen=True)
class PotentialQuery:
    """Evaluation data ``(x, r)`` of ``∫_0^r (⨍_{B_ρ(x)} |g|^q)^(1/q) dρ``.

    ``rho_min`` truncates the ρ-integral from below; by default the integral
    starts at 0 with the sub-grid piece closed by one midpoint panel.
    """

    center: tuple[float, ...]
    radius: float
    exponent_q: float
    rho_min: float | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("potential radius must be positive")
        if not self.exponent_q > 0:
            raise ValueError("potential exponent must be positive")
        if self.rho_min is not None and not 0 <= self.rho_min <= self.radius:
            raise ValueError("rho_min must lie in [0, radius]")


class BallMeans:
    """``ρ ↦ ⨍_{B_ρ(x)} |g|^q`` for a grid function extended by zero.

    Each lattice cell is counted in ``B_ρ`` with the fraction
    ``clip((ρ - d)/h + 1/2, 0, 1)``, ``d`` the node distance.  The same
    fractions applied to the unbounded lattice give the ball volume, so the
    mean of a constant is that constant.
    """

    def __init__(self, g: GridFunction, center: Sequence[float], r_max: float, q: float):
        grid = g.grid
        n = grid.n
        h = grid.h
        c = np.asarray(center, float)
        lower = np.asarray(grid.lower)
        upper = np.asarray(grid.upper)
        reach = r_max + h
        if np.any(c + reach < lower - 0.5 * h) or np.any(c - reach > upper + 0.5 * h):
            raise ValueError("ball does not meet the grid")
        idx_lo = np.floor((c - reach - lower) / h).astype(int)
        idx_hi = np.ceil((c + reach - lower) / h).astype(int)
        axes = [np.arange(a, b + 1) for a, b in zip(idx_lo, idx_hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([lower[k] + h * mesh[k] for k in range(n)], -1)
        dist = np.linalg.norm(pts - c, axis=-1)
        inside = np.ones(dist.shape, bool)
        for k in range(n):
            inside &= (mesh[k] >= 0) & (mesh[k] < grid.shape[k])
        dens = np.where(g.mask, np.abs(g.values) ** q, 0.0) * grid.cell_volumes()
        mass = np.zeros(dist.shape)
        sel = tuple(np.clip(m, 0, s - 1) for m, s in zip(mesh, grid.shape))
        mass[inside] = dens[sel][inside]
        keep = dist <= reach
        order = np.argsort(dist[keep])
        self.dist = dist[keep][order]
        self.mass = mass[keep][order]
        self.h = h
        self.n = n
        self.cell = h**n

    def __call__(self, rho) -> np.ndarray:
        rho = np.atleast_1d(np.asarray(rho, float))
        out = np.empty(rho.shape)
        h = self.h
        for i, r in enumerate(rho):
            hi = np.searchsorted(self.dist, r + 0.5 * h, side="right")
            d = self.dist[:hi]
            frac = np.clip((r - d) / h + 0.5, 0.0, 1.0)
            vol = self.cell * frac.sum()
            out[i] = float(np.dot(self.mass[:hi], frac)) / vol if vol > 0 else 0.0
        return out


def riesz_potential(g: GridFunction, query: PotentialQuery, panels: int = 8) -> float:
    """``∫_0^r (⨍_{B_ρ(x)} |g|^q)^(1/q) dρ`` on the dyadic midpoint partition."""
    q = query.exponent_q
    means = BallMeans(g, query.center, query.radius, q)
    integrand = lambda rho: means(rho) ** (1.0 / q)
    if query.rho_min:
        return dyadic_midpoint(integrand, query.rho_min, query.radius, panels)
    return dyadic_midpoint(integrand, 0.0, query.radius, panels, floor=g.grid.h)


def _potential_centres(grid: Grid, r: float, max_centres: int) -> np.ndarray:
    axes = []
    for ax in grid.axes():
        sel = ax[(ax - r >= ax[0] - 1e-12) & (ax + r <= ax[-1] + 1e-12)]
        axes.append(sel)
    if any(a.size == 0 for a in axes):
        raise ValueError("no grid node carries a ball of this radius inside the grid")
    count = int(np.prod([a.size for a in axes]))
    stride = max(1, math.ceil((count / max_centres) ** (1.0 / grid.n)))
    axes = [a[::stride] for a in axes]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, grid.n)


def potential_bound_rhs(g: GridFunction, q: float, r: float, panels: int = 16) -> float:
    """``|B_1|^(-1/n) ∫_0^{|B_r|} [(|g|^q)**(t) t^(q/n)]^(1/q) dt/t``."""
    n = g.grid.n
    vals, vols = g.cell_data()
    prof = profile_from_cells(np.abs(vals) ** q, vols)
    top = unit_ball_volume(n) * r**n
    t0 = min(float(prof.measures[0]), top)
    # (|g|^q)** is constant on [0, t0]
    head = float(prof.values[0]) ** (1.0 / q) * n * t0 ** (1.0 / n)
    body = 0.0
    if top > t0:
        body = dyadic_midpoint(lambda t: (prof.f_double_star(t) * t ** (q / n)) ** (1.0 / q) / t,
                               t0, top, panels)
    return (head + body) / unit_ball_volume(n) ** (1.0 / n)


def potential_bound_check(g: GridFunction, q: float, r: float, tol: float = 0.05,
                          max_centres: int = 400) -> tuple[float, float, bool]:
    """Compare ``sup_x Ĩ_q(x, r)`` against the rearrangement bound.

    The supremum runs over grid nodes whose ball ``B_r(x)`` lies in the grid
    (subsampled to at most about ``max_centres`` nodes).
    """
    centres = _potential_centres(g.grid, r, max_centres)
    if not np.any(g.values[g.mask]):
        return 0.0, 0.0, True
    lhs = max(riesz_potential(g, PotentialQuery(tuple(c), r, q)) for c in centres)
    rhs = potential_bound_rhs(g, q, r)
    return lhs, rhs, bool(lhs <= rhs * (1.0 + tol))


# ---------------------------------------------------------------------------
# radial oracles for g_β(x) = |x|^-1 log^-β(e/|x|)

def radial_ball_mean(beta: float, n: int, q: float, rho: float) -> float:
    """``⨍_{B_ρ} g_β^q`` over the full ball, by 1-D quadrature in ``t = log(e/s)``."""
    from .presets import RadialPowerLog

    return RadialPowerLog(beta).ball_lq_mass(rho, q, n) / (unit_ball_volume(n) * rho**n)


def radial_potential(beta: float, n: int, q: float, r: float, rho_min: float = 0.0) -> float:
    """High-accuracy ``∫_{ρ_min}^r (⨍_{B_ρ} g_β^q)^(1/q) dρ`` at the origin.

    In ``u = log(e/ρ)`` the integrand behaves like a power of ``u``; below
    ``ρ = 1e-100`` the remainder is closed with the locally fitted power law.
    """
    F = lambda u: radial_ball_mean(beta, n, q, math.exp(1.0 - u)) ** (1.0 / q) * math.exp(1.0 - u)
    u_lo = math.log(math.e / r)
    u_cut = math.log(math.e / 1e-100)
    u_hi = math.log(math.e / rho_min) if rho_min > 0 else math.inf
    val, _ = quad(F, u_lo, min(u_hi, u_cut), limit=400)
    if u_hi > u_cut:
        p = math.log(F(u_cut) / F(0.5 * u_cut)) / math.log(2.0)
        if p >= -1:
            return math.inf
        tail = F(u_cut) * u_cut / (-p - 1)
        if math.isfinite(u_hi):
            tail *= 1.0 - (u_hi / u_cut) ** (p + 1)
        val += tail
    return val


def radial_lorentz_n1(beta: float, n: int, eps: float = 0.0) -> float:
    """``L(n,1)`` norm of ``g_β`` truncated to ``|x| ≥ eps``.

    With ``∫_0^∞ |{g > λ}|^(1/n) dλ = |B_1|^(1/n) ∫_eps^1 g_β(s) ds`` and the
    substitution ``u = log(e/s)`` this is ``|B_1|^(1/n) ∫_1^U u^(-β) du``.
    """
    upper = math.inf if eps <= 0 else math.log(math.e / eps)
    val, _ = quad(lambda u: u ** (-beta), 1.0, upper, limit=200)
    return unit_ball_volume(n) ** (1.0 / n) * val


def radial_dini(beta: float, n: int, eps: float) -> float:
    """``∫_eps^1 ‖g_β‖_{L^n(B_ρ)} dρ/ρ`` via 1-D quadrature in ``u = log(e/ρ)``."""
    from .presets import RadialPowerLog

    g = RadialPowerLog(beta)
    upper = math.log(math.e / eps)
    val, _ = quad(lambda u: g.ball_lq_mass(math.exp(1.0 - u), n, n) ** (1.0 / n),
                  1.0, upper, limit=400)
    return val


@dataclass(frozen=True)
class MembershipVerdict:
    values: tuple[float, ...]
    scales: tuple[float, ...]
    slope: float
    converges: bool


def increment_slope(values: Sequence[float], scales: Sequence[float]) -> float:
    """Slope of ``log ΔN_k`` against ``log log(e/h_k)``.

    For a truncation sequence ``N_k ≈ ∫_1^{u_k} u^(-β) du`` with
    ``u_k = log(e/h_k)`` the increments behave like ``u_k^(-β)``, so the slope
    estimates ``-β`` and the sequence converges iff it is below ``-1``.
    """
    v = np.asarray(values, float)
    u = np.log(math.e / np.asarray(scales, float))
    du = np.diff(u)
    inc = np.diff(v) / du
    mid = 0.5 * (u[1:] + u[:-1])
    good = inc > 0
    if good.sum() < 2:
        return -math.inf
    return float(np.polyfit(np.log(mid[good]), np.log(inc[good]), 1)[0])


def refinement_membership(beta: float, n: int = 2, idx: LorentzIndex | None = None,
                          levels: Sequence[int] = (4, 5, 6, 7, 8, 9),
                          threshold: float = -1.1) -> MembershipVerdict:
    """Grid ``L(p,q)`` norms of ``g_β`` under refinement ``h = 2^-k``.

    The norm is computed on ``[0, 1]^n`` and scaled by reflection symmetry.
    Convergent iff the fitted increment slope is below ``threshold``.
    """
    from .presets import RadialPowerLog

    idx = idx or LorentzIndex(n, 1)
    g = RadialPowerLog(beta)
    norms, scales = [], []
    for k in levels:
        h = 2.0**-k
        grid = Grid((0.0,) * n, h, (2**k + 1,) * n)
        vals = g.sample(grid)
        prof = profile_from_cells(vals, grid.cell_volumes() * 2**n)
        norms.append(lorentz_norm(prof, idx))
        scales.append(h)
    slope = increment_slope(norms, scales)
    return MembershipVerdict(tuple(norms), tuple(scales), slope, slope < threshold)
