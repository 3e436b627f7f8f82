"""Finite-difference Dirichlet solver for ``-b_ij ∂_ij w = g`` on masked grids."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .coefficients import EllipticOperatorField
from .geometry import ConvexDomain, CubeSpec, MaskedGrid, build_mask
from .grid import DATA, DIRICHLET, INTERIOR, GridFunction, sample
from .lorentz import lebesgue_norm

DIRECT_LIMIT = 200_000


class SolverError(RuntimeError):
    pass


class MaximumPrincipleViolation(RuntimeError):
    pass


class MonotonicityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DirichletProblem:
    """Operator, right-hand side, classified grid and boundary data.

    ``boundary`` supplies values on the data nodes (∂Q ∩ Ω); Dirichlet nodes
    on ∂Ω get zero unless ``zero_on_boundary`` is False, in which case they
    are read from ``boundary`` too.
    """

    operator: EllipticOperatorField
    rhs: object
    mask: MaskedGrid
    boundary: object = 0.0
    zero_on_boundary: bool = True
    tol: float = 1e-10

    @property
    def grid(self):
        return self.mask.grid


@dataclass(frozen=True)
class SolveReport:
    solution: GridFunction
    residual_norm: float
    iterations: int
    h: float
    monotone: bool = True
    backend: str = field(default=kernels.BACKEND)


def boundary_values(problem: DirichletProblem) -> np.ndarray:
    kind = problem.mask.kind
    bval = np.zeros(kind.shape)
    known = (kind == DATA) | ((kind == DIRICHLET) & (not problem.zero_on_boundary))
    if np.any(known):
        vals = sample(problem.boundary, problem.grid)
        bval[known] = vals[known]
    if not np.all(np.isfinite(bval)):
        raise ValueError("boundary data must be finite")
    return bval


def cut_values(problem: DirichletProblem) -> np.ndarray:
    """Boundary data at the ∂Ω cut points, shape ``(*shape, n, 2)``."""
    mg = problem.mask
    out = np.zeros(mg.theta.shape)
    if problem.zero_on_boundary:
        return out
    data = problem.boundary
    if isinstance(data, GridFunction):
        data = data.interpolator()
    cut = np.any(mg.theta < 1.0, axis=(-1, -2))
    if not np.any(cut):
        return out
    for axis in range(mg.grid.n):
        for side in (0, 1):
            pts = mg.cut_points(axis, side)[cut]
            if callable(data):
                out[cut, axis, side] = np.asarray(data(pts), float).reshape(-1)
            else:
                out[cut, axis, side] = float(data)
    return out


def stencil_inputs(problem: DirichletProblem) -> tuple:
    """Flattened arrays consumed by the assembly kernels (see ``_assembly_py``)."""
    mg = problem.mask
    grid = mg.grid
    kind = mg.kind.ravel().astype(np.int8)
    nodes = np.flatnonzero(kind == INTERIOR).astype(np.int64)
    unk = np.full(kind.size, -1, np.int64)
    unk[nodes] = np.arange(nodes.size)
    pts = grid.points().reshape(-1, grid.n)[nodes]
    B = np.ascontiguousarray(problem.operator(pts).reshape(-1, grid.n, grid.n))
    g = sample(problem.rhs, grid).ravel()[nodes]
    if not np.all(np.isfinite(g)):
        raise ValueError("right-hand side must be finite")
    strides = np.array([int(np.prod(grid.shape[k + 1:])) for k in range(grid.n)], np.int64)
    theta = mg.theta.reshape(-1, grid.n, 2)
    bval = boundary_values(problem).ravel()
    cutval = cut_values(problem).reshape(-1, grid.n, 2)
    return kind, theta, cutval, bval, B, g, nodes, unk, strides, grid.h


def assemble(problem: DirichletProblem, backend=None):
    """Sparse matrix, right-hand side, unknown indices and known values."""
    args = stencil_inputs(problem)
    nodes, bval = args[6], args[3]
    rows, cols, vals, rhs = (backend or kernels.assemble_stencil)(*args)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(nodes.size, nodes.size))
    return A, rhs, nodes, bval


def is_m_matrix(A: sp.csr_matrix) -> bool:
    """Off-diagonal entries non-positive (diagonal dominance holds by construction)."""
    off = A - sp.diags(A.diagonal())
    scale = float(np.abs(A.diagonal()).max()) if A.shape[0] else 1.0
    return bool(off.nnz == 0 or off.data.max() <= 1e-14 * scale)


def _linear_solve(A, b, tol):
    if A.shape[0] <= DIRECT_LIMIT:
        return spla.spsolve(A.tocsc(), b), 1
    ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
    M = spla.LinearOperator(A.shape, ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(A, b, M=M, rtol=tol, atol=0.0, restart=100, maxiter=50, callback=cb,
                         callback_type="legacy")
    if info != 0:
        raise SolverError(f"iterative solver did not converge (info={info})")
    return x, count[0]


def solve(problem: DirichletProblem) -> SolveReport:
    A, rhs, nodes, bval = assemble(problem)
    if nodes.size == 0:
        raise SolverError("no unknowns")
    monotone = is_m_matrix(A)
    if not monotone:
        warnings.warn("stencil is not an M-matrix: the discrete maximum principle may fail",
                      MonotonicityWarning, stacklevel=2)
    x, iters = _linear_solve(A, rhs, problem.tol)
    bnorm = float(np.linalg.norm(rhs))
    denom = bnorm if bnorm > 0 else 1.0
    res = float(np.linalg.norm(A @ x - rhs)) / denom
    if res > problem.tol:
        # one step of iterative refinement
        dx, _ = _linear_solve(A, rhs - A @ x, problem.tol)
        x = x + dx
        iters += 1
        res = float(np.linalg.norm(A @ x - rhs)) / denom
    if not np.isfinite(res) or res > problem.tol:
        raise SolverError(f"relative residual {res:.3e} above tolerance {problem.tol:.1e}")
    vals = bval.copy()
    vals[nodes] = x
    mg = problem.mask
    sol = GridFunction(mg.grid, vals.reshape(mg.grid.shape), mg.in_domain)
    return SolveReport(sol, res, iters, mg.grid.h, monotone)


def make_problem(dom: ConvexDomain, cube: CubeSpec, h: float, operator, rhs,
                 boundary=0.0, **kw) -> DirichletProblem:
    return DirichletProblem(operator, rhs, build_mask(dom, cube, h), boundary, **kw)


def harmonic_replacement(problem: DirichletProblem, w: GridFunction | None = None) -> SolveReport:
    """Solve the homogeneous equation with the data of ``w`` on ∂Q ∩ Ω and 0 on ∂Ω."""
    boundary = problem.boundary if w is None else w
    return solve(replace(problem, rhs=0.0, boundary=boundary))


def abp_check(w: GridFunction, u: GridFunction, g: GridFunction, norm_exponent: float,
              C_emp: float, tol: float = 1e-8) -> tuple[float, bool, float]:
    """Ratio ``‖w - u‖_∞ / ‖g‖_{L^q}`` against the frozen constant ``C_emp``."""
    mask = w.mask & u.mask
    diff = float(np.max(np.abs(w.values - u.values)[mask])) if mask.any() else 0.0
    gnorm = lebesgue_norm(GridFunction(g.grid, g.values, g.mask & mask), norm_exponent)
    if gnorm == 0.0:
        if diff > tol:
            raise MaximumPrincipleViolation(
                f"homogeneous data but ‖w - u‖ = {diff:.3e}: solver defect")
        return 0.0, True, C_emp
    ratio = diff / gnorm
    return ratio, bool(ratio <= C_emp), C_emp


def localized_solve(w_global: GridFunction, cube: CubeSpec, operator: EllipticOperatorField,
                    g, dom: ConvexDomain, h: float | None = None) -> SolveReport:
    """Solve on the full box ``Q`` with ``w`` on ∂Q ∩ Ω, 0 on ∂Q \\ Ω and rhs ``g χ_Ω``.

    With ``h = None`` the box lattice is the sub-lattice of ``w_global``;
    otherwise a fresh lattice of spacing ``h`` is used and ``w_global`` is
    interpolated onto its boundary.
    """
    n = dom.n
    spacing = w_global.grid.h if h is None else h
    mg = build_mask(ConvexDomain.half_space(n), cube, spacing)
    pts = mg.grid.points()
    inside = dom.contains(pts)
    if h is None:
        lo, hi = cube.bounds(n)
        sl = w_global.grid.sub_box_slices(lo, hi)
        wv = np.where(w_global.mask, w_global.values, 0.0)[sl]
        if wv.shape != mg.grid.shape:
            raise ValueError("cube is not aligned with the lattice of w")
        gv = sample(g, w_global.grid)[sl] if isinstance(g, GridFunction) else sample(g, mg.grid)
    else:
        wv = sample(w_global, mg.grid)
        gv = sample(g, mg.grid)
    data = np.where(inside, wv, 0.0)
    rhs = np.where(inside, gv, 0.0)
    problem = DirichletProblem(operator, rhs_grid(mg, rhs), mg, rhs_grid(mg, data))
    return solve(problem)


def rhs_grid(mg: MaskedGrid, values: np.ndarray) -> GridFunction:
    return GridFunction(mg.grid, values)


def manufactured_error(h: float, n: int = 2) -> float:
    """Max-norm error of the ``x_n (1 - x_n)`` manufactured case on ``Q[1 × 1]``."""
    from .coefficients import identity
    from .presets import Manufactured

    man = Manufactured()
    problem = make_problem(ConvexDomain.half_space(n), CubeSpec(1.0, 1.0), h, identity(n),
                           man, man.exact)
    rep = solve(problem)
    exact = man.exact(rep.solution.grid.points())
    return float(np.max(np.abs(rep.solution.values - exact)[rep.solution.mask]))


def sup_norm(f: GridFunction) -> float:
    vals = np.abs(f.values)[f.mask]
    return float(vals.max()) if vals.size else 0.0


def relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), math.ulp(1.0))
