import numpy as np
import pytest

from conftest import solve_on
from convexreg.coefficients import identity
from convexreg.engine.calibration import cascade_constant
from convexreg.engine.cascade import (LinearEnvelope, fit_envelope, oscillation_step,
                                      run_oscillation_cascade)
from convexreg.geometry import ConvexDomain, CubeSpec
from convexreg.grid import GridFunction
from convexreg.presets import HarmonicPolynomial, Manufactured
from convexreg.solver import make_problem, solve

HALF = ConvexDomain.half_space(2)
OP = identity(2)


def on_box(fn, r=1.0, h=1 / 64):
    from convexreg.geometry import build_mask

    mg = build_mask(HALF, CubeSpec.square(r), h)
    return mg.function(fn(mg.grid.points()))


class TestFitEnvelope:
    def test_linear(self):
        env = fit_envelope(on_box(lambda x: x[..., 1]), 1.0)
        assert (env.m, env.M) == pytest.approx((1.0, 1.0))

    def test_zero(self):
        env = fit_envelope(on_box(lambda x: 0 * x[..., 1]), 1.0)
        assert (env.m, env.M) == (0.0, 0.0)

    def test_bump_and_tightness(self):
        bump = lambda x: x[..., 1] + 0.1 * np.sin(np.pi * x[..., 1]) * np.cos(3 * x[..., 0])
        w = on_box(bump)
        env = fit_envelope(w, 1.0, 0.1)
        assert env.m >= 0.8
        oscs = [fit_envelope(w, 1.0, c).oscillation for c in (0.1, 0.05, 0.02, 0.0)]
        assert all(b > a for a, b in zip(oscs, oscs[1:]))

    def test_no_interior(self):
        w = on_box(lambda x: x[..., 1])
        thin = GridFunction(w.grid, w.values, w.mask & (w.grid.points()[..., 1] == 0))
        with pytest.raises(ValueError):
            fit_envelope(thin, 1.0)

    def test_invalid_envelope(self):
        with pytest.raises(ValueError):
            LinearEnvelope(1.0, 0.5, 0.0, 1.0)


class TestStep:
    def test_exact_linear(self):
        w = on_box(lambda x: 0.7 * x[..., 1])
        step = oscillation_step(w, OP, 0.0, fit_envelope(w, 1.0))
        assert step.envelope.m == pytest.approx(0.7) and step.envelope.M == pytest.approx(0.7)
        assert step.envelope.c == 0.0 and step.envelope.oscillation == pytest.approx(0, abs=1e-9)

    def test_manufactured_contraction(self, manufactured_w):
        env = fit_envelope(manufactured_w, 1.0)
        step = oscillation_step(manufactured_w, OP, Manufactured(), env)
        assert step.envelope.oscillation < env.oscillation
        assert 1 - step.envelope.oscillation / env.oscillation > 0

    def test_rejects_broken_envelope(self, manufactured_w):
        with pytest.raises(ValueError):
            oscillation_step(manufactured_w, OP, Manufactured(), LinearEnvelope(2.0, 3.0, 0.0, 1.0))

    def test_rescaling_commutes(self):
        rho = 0.25
        man = Manufactured()
        a = solve(make_problem(HALF, CubeSpec.square(rho), rho / 64, OP, man, man.exact)).solution
        b_exact = lambda y: y[..., -1] * (1 - rho * y[..., -1])
        b = solve(make_problem(HALF, CubeSpec.square(1.0), 1 / 64, OP, 2 * rho, b_exact)).solution
        sa = oscillation_step(a, OP, man, fit_envelope(a, rho)).envelope
        sb = oscillation_step(b, OP, 2 * rho, fit_envelope(b, 1.0)).envelope
        assert sa.m == pytest.approx(sb.m, rel=1e-8)
        assert sa.M == pytest.approx(sb.M, rel=1e-8)
        assert sa.c == pytest.approx(rho * sb.c, rel=1e-8)


@pytest.fixture(scope="module")
def harmonic():
    hp = HarmonicPolynomial(1.0)
    w = solve_on(HALF, 0.0, hp.exact)
    return w, run_oscillation_cascade(w, OP, 0.0, 6)


class TestCascade:
    def test_linear(self, linear_w):
        t = run_oscillation_cascade(linear_w, OP, 0.0, 4)
        for lv in t.levels:
            assert (lv.m, lv.M) == pytest.approx((1.0, 1.0), abs=1e-9)
        assert np.all(t.oscillations <= 1e-9)

    def test_homogeneous_decay(self, harmonic):
        _, t = harmonic
        osc = t.oscillations
        assert np.all(np.diff(osc) < 0)
        ratios = osc[1:] / osc[:-1]
        assert np.all(ratios <= (1 - t.eta_emp) * 1.05)

    def test_doubling(self, harmonic):
        w, t = harmonic
        t2 = run_oscillation_cascade(w * 2.0, OP, 0.0, 6)
        for a, b in zip(t.levels, t2.levels):
            assert b.m == pytest.approx(2 * a.m, rel=1e-9, abs=1e-12)
            assert b.M == pytest.approx(2 * a.M, rel=1e-9, abs=1e-12)

    def test_constant_rhs_bound(self):
        w = solve_on(HALF, 1.0, 0.0)
        t = run_oscillation_cascade(w, OP, 1.0, 5, C_frozen=cascade_constant(2, 1.0))
        assert t.C_fit is not None and t.bound_holds
