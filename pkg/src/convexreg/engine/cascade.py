"""Slope envelopes and the multiscale oscillation-decay iteration.

At level ``l`` the solution is re-solved on ``Q[σ^l × σ^l] ∩ Ω`` with a fixed
number of nodes per axis; boundary data come from the level above by
interpolation.  This realises the blow-up ``u(y) = w(σ^l y)/σ^l`` without
leaving physical coordinates, since the discrete problems are exact
rescalings of each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..barriers import BarrierParams
from ..coefficients import EllipticOperatorField
from ..geometry import ConvexDomain, CubeSpec, build_mask
from ..grid import GridFunction, sample
from ..lorentz import box_norm_profile
from ..presets import scaled
from ..quadrature import dyadic_midpoint
from ..solver import DirichletProblem, solve


class CascadeDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearEnvelope:
    """``m x_n - c <= w <= M x_n + c`` on ``Q[r × r]``."""

    m: float
    M: float
    c: float
    r: float

    def __post_init__(self):
        if self.M < self.m:
            raise ValueError("envelope needs M >= m")
        if self.c < 0 or self.r <= 0:
            raise ValueError("envelope needs c >= 0 and r > 0")

    @property
    def oscillation(self) -> float:
        return self.M - self.m

    def scaled(self, alpha: float) -> "LinearEnvelope":
        if alpha > 0:
            return LinearEnvelope(alpha * self.m, alpha * self.M, alpha * self.c, self.r)
        return LinearEnvelope(alpha * self.M, alpha * self.m, -alpha * self.c, self.r)

    def violation(self, w: GridFunction) -> float:
        """Largest amount by which ``w`` leaves the envelope on ``Q[r × r]``."""
        xn, vals = _box_nodes(w, self.r)
        lo = self.m * xn - self.c - vals
        hi = vals - self.M * xn - self.c
        return float(max(lo.max(initial=0.0), hi.max(initial=0.0)))


def _box_nodes(w: GridFunction, r: float) -> tuple[np.ndarray, np.ndarray]:
    n = w.grid.n
    pts = w.grid.points()
    tol = 1e-12 * r
    inside = w.mask.copy()
    for k in range(n - 1):
        inside &= np.abs(pts[..., k]) <= r + tol
    inside &= (pts[..., -1] >= -tol) & (pts[..., -1] <= r + tol)
    return pts[..., -1][inside], w.values[inside]


def fit_envelope(w: GridFunction, r: float, c: float = 0.0, tol: float = 1e-10) -> LinearEnvelope:
    """Tightest slopes with ``m x_n - c <= w <= M x_n + c`` on ``Q[r × r]``."""
    xn, vals = _box_nodes(w, r)
    pos = xn > 1e-12 * r
    if not np.any(pos):
        raise ValueError("no interior nodes with x_n > 0")
    M = float(np.max((vals[pos] - c) / xn[pos]))
    m = float(np.min((vals[pos] + c) / xn[pos]))
    if M < m:
        M = m = 0.5 * (M + m)
    flat = vals[~pos]
    scale = max(1.0, float(np.abs(vals).max()))
    if flat.size and np.max(np.abs(flat)) > c + tol * scale:
        raise ValueError("no linear envelope with this c: |w| > c on {x_n = 0}")
    env = LinearEnvelope(m, M, c, r)
    if env.violation(w) > tol * scale:
        raise ValueError("envelope verification failed")
    return env


@dataclass(frozen=True)
class CascadeLevel:
    l: int
    r: float
    m: float
    M: float
    c: float
    g_norm: float
    branch: str = ""


@dataclass(frozen=True)
class StepResult:
    envelope: LinearEnvelope
    solution: GridFunction
    branch: str
    g_norm: float


@dataclass
class OscillationTrace:
    levels: list[CascadeLevel]
    sigma: float
    alpha: float
    eta_emp: float | None = None
    gamma_emp: float | None = None
    K2_emp: float | None = None
    K3_emp: float | None = None
    bound: list[float] = field(default_factory=list)
    C_fit: float | None = None
    C_frozen: float | None = None

    @property
    def oscillations(self) -> np.ndarray:
        return np.array([lv.M - lv.m for lv in self.levels])

    @property
    def bound_holds(self) -> bool | None:
        if self.C_frozen is None or not self.bound:
            return None
        osc = self.alpha * self.oscillations
        return bool(np.all(osc <= self.C_frozen * np.asarray(self.bound) * (1 + 1e-9) + 1e-14))


def _interpolant(w: GridFunction):
    method = "cubic" if bool(np.all(w.mask)) else "linear"
    return w.interpolator(method)


def zoom_solve(parent: GridFunction, dom: ConvexDomain, operator: EllipticOperatorField, g,
               r: float, nodes: int) -> GridFunction:
    """Solve on ``Q[r × r] ∩ Ω`` at spacing ``r / nodes`` with data from ``parent``."""
    mg = build_mask(dom, CubeSpec.square(r), r / nodes)
    data = _interpolant(parent)
    problem = DirichletProblem(operator, g, mg, data)
    return solve(problem).solution


def nested_zoom(w: GridFunction, dom: ConvexDomain, operator: EllipticOperatorField, g,
                radii, nodes: int) -> list[GridFunction]:
    """``w`` followed down a decreasing sequence of boxes, each level fed by the previous."""
    out, parent = [], w
    for r in radii:
        parent = zoom_solve(parent, dom, operator, g, r, nodes)
        out.append(parent)
    return out


def level_g_norm(sol: GridFunction, g, q: float, r: float) -> float:
    """``‖g‖_{L^q(Ω ∩ Q[r × r])}`` on the lattice of ``sol``."""
    vals = sample(g, sol.grid)
    return float(box_norm_profile(GridFunction(sol.grid, vals, sol.mask), q)(r))


def branch_test(w: GridFunction, env: LinearEnvelope, sigma: float) -> str:
    """Which alternative of the dichotomy at ``σ r e_n`` holds."""
    point = np.zeros(w.grid.n)
    point[-1] = sigma * env.r
    val = float(w.interpolator("linear")(point[None])[0])
    return "upper" if val >= 0.5 * (env.M + env.m) * sigma * env.r else "lower"


def oscillation_step(w: GridFunction, operator: EllipticOperatorField, g,
                     envelope: LinearEnvelope, dom: ConvexDomain | None = None,
                     q: float | None = None, sigma: float | None = None,
                     K1: float | None = None, nodes: int = 128) -> StepResult:
    """Envelope one scale down, with ``c̃ = K1 r^(2 - n/q) ‖g‖_{L^q(Q[r × r])}``."""
    n = w.grid.n
    dom = dom or ConvexDomain.half_space(n)
    q = q or n
    sigma = sigma or BarrierParams.build(n, operator.lam).sigma
    if K1 is None:
        from .calibration import abp_constant

        K1 = abp_constant(n, operator.lam, "half_space")
    scale = max(1.0, float(np.abs(w.values[w.mask]).max()))
    if envelope.violation(w) > 1e-10 * scale:
        raise ValueError("input envelope does not hold")
    r = envelope.r
    g_norm = level_g_norm(w, g, q, r)
    c_new = K1 * r ** (2 - n / q) * g_norm
    child = zoom_solve(w, dom, operator, g, sigma * r, nodes)
    env = fit_envelope(child, sigma * r, c_new)
    return StepResult(env, child, branch_test(w, envelope, sigma), g_norm)


def _fit_gamma(osc: np.ndarray, sigma: float) -> float | None:
    l = np.arange(len(osc))
    ok = osc > 1e-13 * max(1.0, float(osc.max(initial=0.0)))
    if ok.sum() < 2:
        return None
    slope = np.polyfit(l[ok] * math.log(sigma), np.log(osc[ok]), 1)[0]
    return float(slope)


def _g_profile(levels_sol: list[GridFunction], g, q: float, sigma: float):
    """``r ↦ g_r`` using the finest level lattice that contains ``Q[r × r]``."""
    profiles = [box_norm_profile(GridFunction(s.grid, sample(g, s.grid), s.mask), q)
                for s in levels_sol]

    def g_r(r):
        r = np.atleast_1d(r)
        out = np.empty(r.shape)
        for i, rho in enumerate(r):
            k = min(max(int(math.floor(math.log(rho) / math.log(sigma) + 1e-9)), 0),
                    len(profiles) - 1)
            out[i] = profiles[k](float(rho))
        return out

    return g_r


def run_oscillation_cascade(w: GridFunction, operator: EllipticOperatorField, g, depth: int,
                            dom: ConvexDomain | None = None, q: float | None = None,
                            sigma: float | None = None, K1: float | None = None,
                            nodes: int = 128, gamma: float | None = None,
                            C_frozen: float | None = None, homogeneous_check: bool = True
                            ) -> OscillationTrace:
    """Iterate ``oscillation_step`` from ``Q[1 × 1]`` down to ``Q[σ^L × σ^L]``.

    The data are first normalised to ``‖w‖_∞ + ‖g‖_{L^q} = 1`` (envelopes in
    the trace are mapped back).  ``γ`` is fitted on a homogeneous companion
    run from the harmonic replacement of ``w`` unless ``g`` vanishes already
    or ``gamma`` is given.
    """
    n = w.grid.n
    dom = dom or ConvexDomain.half_space(n)
    q = q or n
    sigma = sigma or BarrierParams.build(n, operator.lam).sigma
    if K1 is None:
        from .calibration import abp_constant

        K1 = abp_constant(n, operator.lam, "half_space")
    total = max(float(np.abs(_box_nodes(w, 1.0)[1]).max(initial=0.0)), 0.0) + \
        level_g_norm(w, g, q, 1.0)
    alpha = 1.0 / total if total > 0 else 1.0
    u = w * alpha
    gs = scaled(g, alpha)
    g_zero = not np.any(sample(gs, w.grid)[w.mask])

    env = fit_envelope(u, 1.0, 0.0)
    levels = [CascadeLevel(0, 1.0, env.m / alpha, env.M / alpha, 0.0, 0.0)]
    sols = [u]
    norm_envs = [env]
    rising = 0
    for l in range(1, depth + 1):
        step = oscillation_step(sols[-1], operator, gs, env, dom, q, sigma, K1, nodes)
        if g_zero:
            rising = rising + 1 if step.envelope.oscillation > env.oscillation else 0
            if rising >= 3:
                raise CascadeDivergence("cascade divergence: check solver/barriers")
        env = step.envelope
        norm_envs.append(env)
        sols.append(step.solution)
        levels.append(CascadeLevel(l, env.r, env.m / alpha, env.M / alpha, env.c / alpha,
                                   step.g_norm / alpha, step.branch))

    osc = np.array([e.oscillation for e in norm_envs])
    if gamma is None:
        if g_zero or not homogeneous_check:
            gamma = _fit_gamma(osc, sigma)
        else:
            base = _harmonic_companion(u, dom, operator)
            sub = run_oscillation_cascade(base, operator, 0.0, depth, dom, q, sigma, K1, nodes,
                                          homogeneous_check=False)
            # a vanishing companion carries no decay information
            gamma = sub.gamma_emp if sub.gamma_emp is not None else _fit_gamma(osc, sigma)
        if gamma is None:
            from .calibration import decay_exponent

            try:
                gamma = decay_exponent(n, operator.lam)
            except KeyError:
                pass
    trace = OscillationTrace(levels, sigma, alpha, gamma_emp=gamma)
    if gamma is not None:
        trace.eta_emp = 1.0 - sigma**gamma
        g_r = _g_profile(sols, gs, q, sigma)
        bound = []
        for l in range(depth + 1):
            lo = sigma ** max(l - 1, 0)
            integral = dyadic_midpoint(lambda r: g_r(r) / r ** (1 + gamma), lo, 1.0) \
                if lo < 1.0 else 0.0
            bound.append(lo**gamma * (1.0 + integral))
        trace.bound = bound
        trace.C_fit = float(np.max(osc / np.asarray(bound)))
        eta = trace.eta_emp
        k2, k3 = [], []
        for l in range(1, depth + 1):
            parent, child = norm_envs[l - 1], norm_envs[l]
            cy = parent.c / parent.r
            if cy > 0:
                k2.append((child.oscillation - (1 - eta) * parent.oscillation) / cy)
                k3.append((abs((child.M + child.m) - (parent.M + parent.m))
                           - eta * parent.oscillation) / cy)
        trace.K2_emp = float(max(k2)) if k2 else None
        trace.K3_emp = float(max(k3)) if k3 else None
    trace.C_frozen = C_frozen
    return trace


def _harmonic_companion(u: GridFunction, dom: ConvexDomain,
                        operator: EllipticOperatorField) -> GridFunction:
    """Homogeneous solve on the lattice of ``u`` with the boundary data of ``u``."""
    from ..solver import harmonic_replacement

    lo = np.asarray(u.grid.lower)
    hi = np.asarray(u.grid.upper)
    cube = CubeSpec(float(hi[0]), float(hi[-1]))
    if not (np.allclose(lo[:-1], -hi[:-1]) and lo[-1] == 0.0):
        raise ValueError("solution lattice must be a cube Q[c × d]")
    mg = build_mask(dom, cube, u.grid.h)
    if mg.grid != u.grid:
        raise ValueError("solution lattice does not match the domain mask")
    problem = DirichletProblem(operator, 0.0, mg, u)
    return harmonic_replacement(problem).solution
