"""Dyadic Log-Lipschitz induction.

Level ``k`` lives on ``Q[ρ^k × ρ^k] ∩ Ω``; re-solving there at a fixed node
count is the unit-scale problem for ``u(y) = (w - L_k)(ρ^k y) / ρ^k``.  The
affine part is updated by the slope of the homogeneous comparison solution,
``L_{k+1} = L_k + ã_k x_n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..coefficients import EllipticOperatorField
from ..geometry import ConvexDomain, CubeSpec, build_mask
from ..grid import GridFunction
from ..lorentz import lebesgue_norm
from ..presets import scaled
from ..solver import DirichletProblem, solve
from .cascade import nested_zoom
from .derivative import DecayReport, DecayRow, slab_slope


class InductionFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class InductionStep:
    k: int
    r: float
    slope: float
    error: float
    passed: bool
    sup_w: float

    @property
    def linear_ratio(self) -> float:
        return self.sup_w / self.r

    @property
    def loglip_ratio(self) -> float:
        return self.sup_w / (self.r * math.log(1.0 / self.r)) if self.r < 1 else math.inf


def ball_sup(f: GridFunction, r: float, shift=None) -> float:
    """``sup |f - shift|`` over lattice nodes of ``B_r`` in the mask."""
    pts = f.grid.points()
    inside = (np.linalg.norm(pts, axis=-1) <= r * (1 + 1e-12)) & f.mask
    vals = f.values if shift is None else f.values - shift(pts)
    vals = np.abs(vals)[inside]
    return float(vals.max()) if vals.size else 0.0


def _comparison_slope(trace: GridFunction, L: float, dom: ConvexDomain,
                      operator: EllipticOperatorField, r: float) -> float:
    """Slope at 0 of the homogeneous solve with data ``w - L x_n`` on the box ``Q[r × r] ∩ Ω``."""
    mg = build_mask(dom, CubeSpec.square(r), trace.grid.h)
    data = GridFunction(trace.grid, trace.values - L * trace.grid.points()[..., -1], trace.mask)
    h = solve(DirichletProblem(operator, 0.0, mg, data)).solution
    return slab_slope(h, r / 4, dom)


def normalization(w: GridFunction, g, rho: float, abp_C: float = 1.0) -> float:
    """``α`` with ``α ‖w‖_∞ ≤ 1`` and ``α ‖g‖_{L^n} ≤ δ = (ρ/2) / abp_C``."""
    from ..grid import sample

    wmax = float(np.abs(w.values[w.mask]).max()) if w.mask.any() else 0.0
    gn = lebesgue_norm(GridFunction(w.grid, sample(g, w.grid), w.mask), w.grid.n)
    delta = 0.5 * rho / abp_C
    cands = [1.0]
    if wmax > 0:
        cands.append(1.0 / wmax)
    if gn > 0:
        cands.append(delta / gn)
    return min(cands)


def loglip_induction(w: GridFunction, operator: EllipticOperatorField, g, rho_dyadic: float = 0.5,
                     Kmax: int = 8, dom: ConvexDomain | None = None, nodes: int = 128,
                     abp_C: float = 1.0, normalize: bool = True) -> DecayReport:
    """Run the induction to depth ``Kmax`` and fit ``sup_{B_r}|w| ≤ C_LL r log(1/r)``."""
    if not 0 < rho_dyadic < 1:
        raise ValueError("rho_dyadic must lie in (0, 1)")
    n = w.grid.n
    dom = dom or ConvexDomain.half_space(n)
    alpha = normalization(w, g, rho_dyadic, abp_C) if normalize else 1.0
    gs = scaled(g, alpha)
    base = GridFunction(w.grid, alpha * w.values, w.mask)
    radii = [rho_dyadic**k for k in range(Kmax + 1)]
    top = float(w.grid.lower[-1] + (w.grid.shape[-1] - 1) * w.grid.h)
    if radii[0] > top + 1e-12:
        raise ValueError("w must live on Q[1 × 1]")
    traces = nested_zoom(base, dom, operator, gs, radii, nodes)
    steps: list[InductionStep] = []
    L = 0.0
    for k in range(Kmax + 1):
        trace, r = traces[k], radii[k]
        err = ball_sup(trace, r, lambda x: L * x[..., -1])
        ok = err <= r * (1 + 1e-9)
        steps.append(InductionStep(k, r, L, err, bool(ok), ball_sup(trace, r)))
        if k == 1 and not ok:
            raise InductionFailure(
                f"induction fails at k = 1 (error {err:.3g} > rho = {r:.3g}); "
                f"try rho_dyadic = {rho_dyadic / 2:g}")
        if k < Kmax:
            L += _comparison_slope(trace, L, dom, operator, r)
    ks = np.array([s.k for s in steps[1:]])
    errs = np.array([s.error for s in steps[1:]])
    rs = np.array([s.r for s in steps[1:]])
    C_k = float(np.max(errs / (ks * rs))) if ks.size else 0.0
    C_LL = float(max(s.loglip_ratio for s in steps[1:])) if Kmax >= 1 else math.nan
    rows = [DecayRow(s.k, s.r, s.r, s.slope / alpha, s.error, s.error / max(s.k, 1) / s.r,
                     s.loglip_ratio) for s in steps]
    verdicts = {
        "induction_passes": all(s.passed for s in steps),
        "differentiable_at_0": None,
        "loglip_constant": C_LL / alpha if math.isfinite(C_LL) else None,
    }
    return DecayReport(rows, L / alpha, [(s.r, s.loglip_ratio) for s in steps[1:]], verdicts,
                       alpha, 1.0, [], extra={"steps": steps, "C_k_bound": C_k,
                                              "linear_ratios": [s.linear_ratio / alpha for s in steps],
                                              "loglip_ratios": [s.loglip_ratio / alpha for s in steps]})
