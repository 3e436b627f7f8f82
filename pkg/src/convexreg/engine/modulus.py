"""The scale modulus ``G_j(r)`` controlling ``|w_j - a_j x_n|`` on ``Q[r × r]``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..quadrature import dyadic_midpoint


@dataclass(frozen=True)
class ModulusInputs:
    """Data entering ``G_j``.

    ``g_norm(ρ)`` is ``‖g‖_{L^q(X ∩ Q[ρ × ρ])}`` (vectorised over ρ).  ``radii``
    holds ``r_j``; ``w_sup`` is ``‖w‖_∞`` on ``X ∩ Q[r_j × r_j]``, a number or
    one value per ``j``.  Integrals from 0 stop at ``rho_min`` (one midpoint
    panel covers ``[0, rho_min]``).
    """

    g_norm: Callable
    w_sup: float | Sequence[float]
    beta: float
    Lambda: float
    radii: Sequence[float] = (1.0,)
    rho_min: float = 2.0**-30

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.Lambda < 1:
            raise ValueError("Lambda must be at least 1")

    def sup_at(self, j: int) -> float:
        if np.ndim(self.w_sup) == 0:
            return float(self.w_sup)
        return float(self.w_sup[j])

    def check_monotone(self, scales) -> bool:
        vals = np.asarray(self.g_norm(np.sort(np.asarray(scales, float))), float)
        return bool(np.all(np.diff(vals) >= -1e-12 * max(1.0, float(vals.max(initial=0)))))


def modulus_terms(inputs: ModulusInputs, j: int, r: float, panels: int = 8) -> np.ndarray:
    """The five summands of ``G_j(r)`` in order."""
    rj = float(inputs.radii[j])
    if r <= 0:
        raise ValueError("r must be positive")
    if r > rj / inputs.Lambda * (1 + 1e-12):
        raise ValueError(f"r = {r:g} exceeds r_j / Lambda = {rj / inputs.Lambda:g}")
    b, lam, g = inputs.beta, inputs.Lambda, inputs.g_norm
    gv = lambda rho: np.asarray(g(rho), float)
    return np.array([
        r**b / rj ** (1 + b) * inputs.sup_at(j),
        (r / rj) ** b * float(gv(rj)),
        r**b * dyadic_midpoint(lambda s: gv(s) / s ** (1 + b), r, rj, panels),
        dyadic_midpoint(lambda s: gv(s) / s, 0.0, lam * r, panels,
                        floor=min(inputs.rho_min, lam * r)),
        float(gv(lam * r)),
    ])


def modulus_G(inputs: ModulusInputs, j: int, r: float, panels: int = 8) -> float:
    return float(modulus_terms(inputs, j, r, panels).sum())


def constant_g_norm(c: float, n: int, q: float) -> Callable:
    """``ρ ↦ c (2^(n-1) ρ^n)^(1/q)``, the norm of the constant ``c`` on ``Q[ρ × ρ]``."""
    return lambda rho: abs(c) * (2.0 ** (n - 1) * np.asarray(rho, float) ** n) ** (1.0 / q)


def constant_g_modulus(c: float, n: int, q: float, w_sup: float, beta: float, Lambda: float,
                       rj: float, r: float) -> float:
    """Closed form of ``G_j(r)`` for constant ``g``."""
    A = abs(c) * 2.0 ** ((n - 1) / q)
    s = n / q
    if math.isclose(s, beta):
        third = r**beta * A * math.log(rj / r)
    else:
        third = r**beta * A * (rj ** (s - beta) - r ** (s - beta)) / (s - beta)
    return (r**beta / rj ** (1 + beta) * w_sup + (r / rj) ** beta * A * rj**s + third
            + A * (Lambda * r) ** s / s + A * (Lambda * r) ** s)
