import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import solve_on
from convexreg import kernels
from convexreg.coefficients import EllipticityError, checkerboard, constant, identity, random_batch
from convexreg.engine.calibration import abp_constant
from convexreg.geometry import ConvexDomain, CubeSpec, build_mask
from convexreg.grid import GridFunction, sample
from convexreg.presets import HarmonicPolynomial, Manufactured
from convexreg.solver import (DirichletProblem, MaximumPrincipleViolation, MonotonicityWarning,
                              abp_check, assemble, harmonic_replacement, localized_solve,
                              make_problem, manufactured_error, solve, sup_norm)

HALF = ConvexDomain.half_space(2)
QUAD = ConvexDomain.graph_domain("quadratic")


def error(sol, exact):
    return float(np.max(np.abs(sol.values - exact(sol.grid.points()))[sol.mask]))


def smooth_exact(x):
    return np.exp(x[..., 0]) * np.sin(x[..., -1])


class TestSolve:
    def test_manufactured_second_order(self):
        # the scheme is exact on quadratics, so the error sits at round-off level
        for h in (1 / 16, 1 / 32, 1 / 64):
            assert manufactured_error(h) <= h**2

    def test_zero(self):
        sol = solve_on(HALF, 0.0, 0.0, h=1 / 16)
        assert sup_norm(sol) == 0.0

    def test_harmonic_polynomial(self):
        hp = HarmonicPolynomial(1.0)
        for h in (1 / 16, 1 / 32):
            assert error(solve_on(HALF, hp, hp.exact, h=h), hp.exact) <= h**2

    @pytest.mark.parametrize("dom", [HALF, QUAD], ids=["half_space", "graph"])
    def test_convergence_order(self, dom):
        errs = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            p = make_problem(dom, CubeSpec(1.0, 1.0), h, identity(2), 0.0, smooth_exact,
                             zero_on_boundary=False)
            errs.append(error(solve(p).solution, smooth_exact))
        for a, b in zip(errs, errs[1:]):
            assert 3.2 <= a / b <= 4.8

    def test_residual_reported(self):
        rep = solve(make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 16, identity(2), 1.0))
        assert rep.residual_norm <= 1e-10
        assert rep.monotone and rep.backend == kernels.BACKEND

    def test_monotonicity_warning(self):
        op = constant([[1.0, 0.9], [0.9, 1.0]], 0.1)
        with pytest.warns(MonotonicityWarning):
            rep = solve(make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 8, op, 1.0))
        assert not rep.monotone

    def test_infinite_rhs(self):
        with pytest.raises(ValueError):
            solve(make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 8, identity(2), np.inf))

    def test_ellipticity_check(self):
        op = constant([[1.0, 0.0], [0.0, 4.0]], 1.0)
        with pytest.raises(EllipticityError):
            op.check_ellipticity(np.zeros((1, 2)))


def test_backends_agree():
    op = checkerboard(2, 0.5, seed=3)
    p = make_problem(QUAD, CubeSpec(1.0, 1.0), 1 / 32, op, Manufactured(), smooth_exact,
                     zero_on_boundary=False)
    A1, b1, _, _ = assemble(p, kernels.assemble_stencil)
    A2, b2, _, _ = assemble(p, kernels.assemble_stencil_py)
    assert abs(A1 - A2).max() <= 1e-12 * abs(A2).max()
    np.testing.assert_allclose(b1, b2, rtol=1e-13, atol=1e-13)


class TestHarmonicReplacement:
    def test_homogeneous_is_own_replacement(self):
        hp = HarmonicPolynomial(0.5)
        p = make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 32, identity(2), 0.0, hp.exact)
        w = solve(p).solution
        u = harmonic_replacement(p, w).solution
        assert np.max(np.abs(w.values - u.values)) <= 1e-10

    def test_manufactured_gap(self, manufactured_w):
        m = Manufactured()
        p = make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 64, identity(2), m, m.exact)
        u = harmonic_replacement(p, manufactured_w).solution
        g = GridFunction(u.grid, sample(m, u.grid), u.mask)
        ratio, holds, _ = abp_check(manufactured_w, u, g, 2, abp_constant(2, 1.0))
        assert ratio > 0 and holds

    def test_zero_data(self):
        p = make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 16, identity(2), 1.0, 0.0)
        assert sup_norm(harmonic_replacement(p).solution) == 0.0


class TestABP:
    def test_zero_rhs(self):
        hp = HarmonicPolynomial(1.0)
        w = solve_on(HALF, 0.0, hp.exact, h=1 / 32)
        g = GridFunction(w.grid, np.zeros(w.grid.shape), w.mask)
        ratio, holds, _ = abp_check(w, w, g, 2, 0.1)
        assert ratio == 0.0 and holds

    def test_violation_detected(self):
        w = solve_on(HALF, 0.0, 1.0, h=1 / 16)
        zero = w.with_values(np.zeros(w.grid.shape))
        with pytest.raises(MaximumPrincipleViolation):
            abp_check(w, zero, zero, 2, 0.1)

    @pytest.mark.parametrize("h", [1 / 32, 1 / 64, 1 / 128])
    def test_refinement(self, h):
        p = make_problem(HALF, CubeSpec(1.0, 1.0), h, identity(2), 2.0, 0.0)
        w = solve(p).solution
        u = harmonic_replacement(p, w).solution
        g = GridFunction(w.grid, np.full(w.grid.shape, 2.0), w.mask)
        assert abp_check(w, u, g, 2, abp_constant(2, 1.0))[1]

    def test_random_batch_stable(self):
        ratios = []
        C = abp_constant(2, 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for op in random_batch(2, 0.5, 20, seed=0):
                p = make_problem(HALF, CubeSpec(1.0, 1.0), 1 / 32, op, 1.0, 0.0)
                w = solve(p).solution
                g = GridFunction(w.grid, np.ones(w.grid.shape), w.mask)
                ratio, holds, _ = abp_check(w, w * 0.0, g, 2, C)
                ratios.append(ratio)
                assert holds
        assert np.isfinite(ratios).all() and max(ratios) <= 2 * min(ratios)


@pytest.fixture(scope="module")
def graph_w():
    return solve_on(QUAD, 2.0, 0.0)


class TestLocalized:
    def test_half_space_identity(self, manufactured_w):
        rep = localized_solve(manufactured_w, CubeSpec.square(0.5), identity(2), Manufactured(), HALF)
        sl = manufactured_w.grid.sub_box_slices([-0.5, 0.0], [0.5, 0.5])
        assert np.max(np.abs(rep.solution.values - manufactured_w.values[sl])) <= 1e-9

    def test_graph_comparison(self, graph_w):
        wj = localized_solve(graph_w, CubeSpec.square(0.5), identity(2), 2.0, QUAD).solution
        sl = graph_w.grid.sub_box_slices([-0.5, 0.0], [0.5, 0.5])
        inside = graph_w.mask[sl]
        assert np.all(wj.values[inside] >= graph_w.values[sl][inside] - 1e-8)
        assert np.all(wj.values >= -1e-10)

    def test_nested_chain(self, graph_w):
        w1 = localized_solve(graph_w, CubeSpec.square(0.5), identity(2), 2.0, QUAD).solution
        w2 = localized_solve(graph_w, CubeSpec.square(0.25), identity(2), 2.0, QUAD).solution
        sl = w1.grid.sub_box_slices([-0.25, 0.0], [0.25, 0.25])
        sl0 = graph_w.grid.sub_box_slices([-0.25, 0.0], [0.25, 0.25])
        inside = graph_w.mask[sl0]
        assert np.all(w2.values <= w1.values[sl] + 1e-8)
        assert np.all(graph_w.values[sl0][inside] <= w2.values[inside] + 1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**16))
def test_discrete_maximum_principle(seed):
    rng = np.random.default_rng(seed)
    mg = build_mask(QUAD, CubeSpec(1.0, 1.0), 1 / 16)
    g = GridFunction(mg.grid, rng.random(mg.grid.shape))
    op = checkerboard(2, 0.5, seed=seed, diagonal=True)
    sol = solve(DirichletProblem(op, g, mg, 0.0)).solution
    assert sol.values[sol.mask].min() >= -1e-10


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**16))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    mg = build_mask(HALF, CubeSpec(1.0, 1.0), 1 / 16)
    g1 = GridFunction(mg.grid, rng.standard_normal(mg.grid.shape))
    g2 = GridFunction(mg.grid, rng.standard_normal(mg.grid.shape))
    op = identity(2)
    s = lambda g: solve(DirichletProblem(op, g, mg, 0.0)).solution.values
    lhs = s(a * g1 + b * g2)
    rhs = a * s(g1) + b * s(g2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))


def test_pure_python_backend_subprocess():
    import os
    import subprocess
    import sys

    code = ("from convexreg import kernels; from convexreg.solver import manufactured_error; "
            "print(kernels.BACKEND, manufactured_error(1/16) < 1e-12)")
    env = dict(os.environ, CONVEXREG_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["numpy", "True"]
