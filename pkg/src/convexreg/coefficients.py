"""Position-dependent symmetric coefficient matrices ``b(x)``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class EllipticityError(ValueError):
    pass


@dataclass(frozen=True)
class EllipticOperatorField:
    """``b : R^n -> Sym(n)`` with eigenvalues in ``[lam, 1/lam]``.

    ``fn`` maps points of shape ``(..., n)`` to matrices ``(..., n, n)``.
    """

    n: int
    lam: float
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    diagonal: bool = field(default=False)

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError("ellipticity constant must lie in (0, 1]")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, float)), float)

    def rescaled(self, scale: float) -> "EllipticOperatorField":
        """``a(y) = b(scale * y)``."""
        fn = self.fn
        return EllipticOperatorField(self.n, self.lam, lambda y: fn(scale * np.asarray(y)),
                                     self.name, self.diagonal)

    def check_ellipticity(self, x: np.ndarray, tol: float = 1e-10) -> None:
        b = self(x).reshape(-1, self.n, self.n)
        if not np.allclose(b, np.swapaxes(b, -1, -2), atol=tol):
            raise EllipticityError(f"{self.name}: coefficient matrix not symmetric")
        ev = np.linalg.eigvalsh(b)
        if ev.min() < self.lam - tol or ev.max() > 1.0 / self.lam + tol:
            raise EllipticityError(
                f"{self.name}: eigenvalues [{ev.min():.6g}, {ev.max():.6g}] "
                f"outside [{self.lam:g}, {1 / self.lam:g}]")


def identity(n: int, lam: float = 1.0) -> EllipticOperatorField:
    eye = np.eye(n)
    return EllipticOperatorField(
        n, lam, lambda x: np.broadcast_to(eye, np.shape(x)[:-1] + (n, n)), "identity", True)


def constant(matrix, lam: float) -> EllipticOperatorField:
    b = np.asarray(matrix, float)
    n = b.shape[0]
    diag = bool(np.allclose(b, np.diag(np.diag(b))))
    return EllipticOperatorField(
        n, lam, lambda x: np.broadcast_to(b, np.shape(x)[:-1] + (n, n)), "constant", diag)


def _rotation(n: int, theta: np.ndarray) -> np.ndarray:
    """Rotation by ``theta`` in the (x_1, x_n) plane."""
    R = np.zeros(theta.shape + (n, n))
    for i in range(1, n - 1):
        R[..., i, i] = 1.0
    c, s = np.cos(theta), np.sin(theta)
    R[..., 0, 0] = c
    R[..., 0, n - 1] = -s
    R[..., n - 1, 0] = s
    R[..., n - 1, n - 1] = c
    return R


def smooth_anisotropic(n: int, lam: float) -> EllipticOperatorField:
    """``R(θ(x)) diag(lam, 1, ..., 1) R(θ(x))^T`` with a smooth angle field."""
    d = np.ones(n)
    d[0] = lam

    def fn(x):
        theta = 0.25 * np.pi * np.sin(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., -1])
        R = _rotation(n, theta)
        return np.einsum("...ik,k,...jk->...ij", R, d, R)

    return EllipticOperatorField(n, lam, fn, "anisotropic")


def checkerboard(n: int, lam: float, seed: int = 0, cell: float = 0.125,
                 diagonal: bool = False, table: int = 16) -> EllipticOperatorField:
    """Piecewise-constant random field on cubes of side ``cell``.

    Each cube draws eigenvalues uniformly in ``[lam, 1/lam]`` and, unless
    ``diagonal``, a random orthogonal frame.  Cube indices wrap modulo
    ``table`` per axis.
    """
    rng = np.random.default_rng(seed)
    count = table**n
    ev = rng.uniform(lam, 1.0 / lam, size=(count, n))
    if diagonal:
        mats = np.zeros((count, n, n))
        idx = np.arange(n)
        mats[:, idx, idx] = ev
    else:
        q, r = np.linalg.qr(rng.normal(size=(count, n, n)))
        q = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]
        mats = np.einsum("cik,ck,cjk->cij", q, ev, q)
        mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))

    def fn(x):
        k = np.floor(np.asarray(x) / cell).astype(np.int64) % table
        flat = np.zeros(k.shape[:-1], np.int64)
        for axis in range(n):
            flat = flat * table + k[..., axis]
        return mats[flat]

    name = "checkerboard_diagonal" if diagonal else "checkerboard"
    return EllipticOperatorField(n, lam, fn, f"{name}[{seed}]", diagonal)


def operator_preset(name: str, n: int, lam: float, seed: int = 0) -> EllipticOperatorField:
    if name == "identity":
        return identity(n, lam)
    if name == "anisotropic":
        return smooth_anisotropic(n, lam)
    if name == "checkerboard":
        return checkerboard(n, lam, seed)
    if name == "checkerboard_diagonal":
        return checkerboard(n, lam, seed, diagonal=True)
    raise ValueError(f"unknown operator preset {name!r}")


def random_batch(n: int, lam: float, count: int, seed: int = 0,
                 diagonal: bool = False) -> list[EllipticOperatorField]:
    return [checkerboard(n, lam, seed + k, diagonal=diagonal) for k in range(count)]
