"""Explicit barriers for the oscillation-decay step and their certification.

``phi`` is a supersolution on ``Q[1 × σ̃]`` lying above 1 on the top and
lateral faces; ``Phi`` is a subsolution on ``Q[Kσ × σ]`` lying below 1 on the
top face and below 0 on the bottom and lateral faces.  Lateral faces are the
faces ``|x_i| = c`` of the cube realisation of ``T_c``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .coefficients import EllipticityError, EllipticOperatorField

MARGIN = 1e-9
VALID_TOL = 1e-10


def barrier_K(n: int, lam: float) -> float:
    s = math.sqrt(n - 1)
    return s * (1.0 + 2.0 * s / lam)


def epsilon_condition(eps: float, K: float) -> float:
    """Left side of the curvature budget ``(1+ε)(2+ε)(K-1)^ε``."""
    return (1.0 + eps) * (2.0 + eps) * (K - 1.0) ** eps


def choose_epsilon(K: float, step: float = 1.0 / 64, cap: float = 8.0,
                   tol: float = 1e-13) -> float:
    """Largest ε on the bisection lattice with ``(1+ε)(2+ε)(K-1)^ε <= 4 - 1e-9``.

    The first lattice crossing is bracketed by a forward scan from 0 and then
    refined by bisection, so the whole interval ``(0, ε]`` is admissible.
    """
    if not K > 1:
        raise ValueError(f"K = {K!r} must exceed 1")
    ok = lambda e: epsilon_condition(e, K) <= 4.0 - MARGIN
    lo, hi = 0.0, None
    e = step
    while e <= cap:
        if not ok(e):
            hi = e
            break
        lo = e
        e += step
    if hi is None:
        return lo
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    grid = np.linspace(0.0, lo, 1001)
    if np.any(epsilon_condition(grid, K) > 4.0 - MARGIN):
        raise ArithmeticError("curvature budget is not monotone on (0, eps]")
    return lo


@dataclass(frozen=True)
class BarrierParams:
    n: int
    lam: float
    K: float
    epsilon: float
    sigma_tilde: float
    sigma: float

    def __post_init__(self):
        if abs(self.K - barrier_K(self.n, self.lam)) > 1e-12 * self.K:
            raise ValueError("K does not match the ellipticity data")
        if self.epsilon <= 0 or epsilon_condition(self.epsilon, self.K) > 4.0:
            raise ValueError("epsilon violates the curvature budget")
        if abs(self.sigma_tilde - 1.0 / self.K) > 1e-15 or \
                abs(self.sigma - self.sigma_tilde / (2 * self.K)) > 1e-15:
            raise ValueError("inconsistent barrier scales")

    @classmethod
    def build(cls, n: int, lam: float, epsilon: float | None = None) -> "BarrierParams":
        K = barrier_K(n, lam)
        eps = choose_epsilon(K) if epsilon is None else epsilon
        st = 1.0 / K
        return cls(n, lam, K, eps, st, st / (2 * K))


def _lateral(x, scale, eps):
    """Sum of ``((|x_i|/scale - 1)^+)^(2+ε)`` and its per-axis derivatives."""
    t = np.abs(x[..., :-1]) / scale
    s = np.maximum(t - 1.0, 0.0)
    val = np.sum(s ** (2 + eps), axis=-1)
    d1 = (2 + eps) * s ** (1 + eps) * np.sign(x[..., :-1]) / scale
    d2 = (2 + eps) * (1 + eps) * s**eps / scale**2
    return val, d1, d2


def phi(x, params: BarrierParams):
    """Value, gradient and (diagonal) Hessian of the supersolution barrier."""
    x = np.asarray(x, float)
    st, eps = params.sigma_tilde, params.epsilon
    coef = params.lam**2 / (2 * (params.n - 1))
    t = x[..., -1] / st
    lv, d1, d2 = _lateral(x, st, eps)
    val = 2 * t - t * t + coef * lv
    grad = np.concatenate([coef * d1, (2.0 / st - 2 * t / st)[..., None]], axis=-1)
    hess = np.concatenate([coef * d2, np.full(t.shape + (1,), -2.0 / st**2)], axis=-1)
    return val, grad, hess


def Phi(x, params: BarrierParams):
    """Value, gradient and (diagonal) Hessian of the subsolution barrier."""
    x = np.asarray(x, float)
    s, eps = params.sigma, params.epsilon
    coef = params.lam**2 / (4 * (params.n - 1))
    t = x[..., -1] / s
    lv, d1, d2 = _lateral(x, s, eps)
    val = 0.5 * (t + t * t) - coef * lv
    grad = np.concatenate([-coef * d1, (0.5 / s + t / s)[..., None]], axis=-1)
    hess = np.concatenate([-coef * d2, np.full(t.shape + (1,), 1.0 / s**2)], axis=-1)
    return val, grad, hess


BARRIERS = {"phi": phi, "Phi": Phi}


def barrier_region(barrier_id: str, params: BarrierParams) -> tuple[float, float]:
    """Half width and height of the cube the barrier is certified on."""
    if barrier_id == "phi":
        return 1.0, params.sigma_tilde
    return params.K * params.sigma, params.sigma


def _box_samples(n: int, c: float, d: float, density: int) -> np.ndarray:
    axes = [np.linspace(-c, c, density)] * (n - 1) + [np.linspace(0.0, d, density)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)


def _face_samples(n: int, c: float, d: float, density: int) -> dict[str, np.ndarray]:
    pts = _box_samples(n, c, d, density)
    faces = {"bottom": pts[pts[:, -1] == 0.0], "top": pts[pts[:, -1] == d]}
    lateral = np.any(np.abs(pts[:, :-1]) == c, axis=1)
    faces["lateral"] = pts[lateral]
    return faces


def extremal_defect(hess_diag: np.ndarray, lam: float, sign: float) -> np.ndarray:
    """Worst value of ``sign * (-tr(b H))`` over all ``b`` with spectrum in ``[lam, 1/lam]``.

    For diagonal ``H`` the extremum aligns the eigenvector with eigenvalue
    ``1/lam`` with the Hessian directions of the unfavourable sign.
    """
    h = -sign * hess_diag
    # minimise tr(b h): put lam on positive entries, 1/lam on negative ones
    return np.sum(np.where(h > 0, lam * h, h / lam), axis=-1)


@dataclass(frozen=True)
class BarrierCertificate:
    barrier_id: str
    params: BarrierParams
    operator_samples: int
    min_defect: float
    extremal_defect: float
    boundary_checks: list[tuple[str, float]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return (self.min_defect >= -VALID_TOL and self.extremal_defect >= -VALID_TOL
                and all(m >= -VALID_TOL for _, m in self.boundary_checks))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["boundary_checks"] = [list(c) for c in self.boundary_checks]
        out["valid"] = self.valid
        return out


def certify(barrier_id: str, params: BarrierParams,
            operator_batch: Sequence[EllipticOperatorField] = (), sample_density: int = 64,
            chunk: int = 65536) -> BarrierCertificate:
    """Sample the defect and boundary clauses of ``phi`` or ``Phi``.

    The defect is ``-b_ij ∂_ij φ`` for ``phi`` and ``b_ij ∂_ij Φ`` for ``Phi``;
    both must be nonnegative.  Besides the operator batch, the analytic
    extremal coefficient is evaluated at every sample point.
    """
    if barrier_id not in BARRIERS:
        raise ValueError(f"unknown barrier {barrier_id!r}")
    fn = BARRIERS[barrier_id]
    sign = 1.0 if barrier_id == "phi" else -1.0
    n = params.n
    c, d = barrier_region(barrier_id, params)
    pts = _box_samples(n, c, d, sample_density)
    for op in operator_batch:
        if op.n != n or op.lam < params.lam - 1e-12:
            raise EllipticityError(f"{op.name}: outside the ellipticity class of the barrier")
        op.check_ellipticity(pts[:: max(1, len(pts) // 4096)])
    _, _, hess = fn(pts, params)
    worst = float(np.min(extremal_defect(hess, params.lam, sign)))
    min_def = math.inf
    for op in operator_batch:
        for k in range(0, len(pts), chunk):
            b = op(pts[k:k + chunk])
            diag = np.diagonal(b, axis1=-2, axis2=-1)
            defect = -sign * np.sum(diag * hess[k:k + chunk], axis=-1)
            min_def = min(min_def, float(defect.min()))
    if not operator_batch:
        min_def = worst
    faces = _face_samples(n, c, d, sample_density)
    checks = []
    if barrier_id == "phi":
        checks.append(("top >= 1", float(np.min(fn(faces["top"], params)[0] - 1.0))))
        checks.append(("lateral >= 1", float(np.min(fn(faces["lateral"], params)[0] - 1.0))))
        checks.append(("bottom >= 0", float(np.min(fn(faces["bottom"], params)[0]))))
    else:
        checks.append(("top <= 1", float(np.min(1.0 - fn(faces["top"], params)[0]))))
        checks.append(("bottom <= 0", float(np.min(-fn(faces["bottom"], params)[0]))))
        checks.append(("lateral <= 0", float(np.min(-fn(faces["lateral"], params)[0]))))
    return BarrierCertificate(barrier_id, params, len(operator_batch), min_def, worst, checks)


def comparison_checks(params: BarrierParams, density: int = 64) -> dict[str, float]:
    """Worst margins of ``φ <= 2x_n/σ̃`` on ``Q[σ̃ × σ̃]`` and ``Φ >= x_n/(2σ)`` on ``Q[σ × σ]``."""
    n = params.n
    st, s = params.sigma_tilde, params.sigma
    p1 = _box_samples(n, st, st, density)
    p2 = _box_samples(n, s, s, density)
    return {
        "phi_upper": float(np.min(2 * p1[:, -1] / st - phi(p1, params)[0])),
        "Phi_lower": float(np.min(Phi(p2, params)[0] - p2[:, -1] / (2 * s))),
    }
