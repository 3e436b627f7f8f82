import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convexreg.engine.modulus import (ModulusInputs, constant_g_modulus, constant_g_norm,
                                      modulus_G, modulus_terms)
from convexreg.presets import RadialPowerLog


def zero_norm(rho):
    return np.zeros(np.shape(rho))


def test_zero_rhs():
    inp = ModulusInputs(zero_norm, 1.0, 0.5, 2.0, radii=(1.0,))
    assert modulus_G(inp, 0, 1 / 16) == pytest.approx(0.25, rel=1e-14)
    np.testing.assert_array_equal(modulus_terms(inp, 0, 1 / 16)[1:], 0.0)


@pytest.mark.parametrize("c, beta, rj", [(1.0, 0.5, 1.0), (3.0, 0.74, 0.5), (0.2, 0.3, 0.25)])
def test_constant_closed_form(c, beta, rj):
    n, q, lam = 2, 2.0, 4.0
    inp = ModulusInputs(constant_g_norm(c, n, q), 0.7, beta, lam, radii=(rj,), rho_min=1e-12)
    for r in (rj / 4, rj / 16, rj / 128):
        num = modulus_G(inp, 0, r)
        assert num == pytest.approx(constant_g_modulus(c, n, q, 0.7, beta, lam, rj, r), rel=0.01)


def test_radial_family_decreasing():
    g = RadialPowerLog(2.0)
    # L^2 norm of g_β over the upper half ball of radius ρ
    norm = np.vectorize(lambda rho: (0.5 * g.ball_lq_mass(rho, 2.0, 2)) ** 0.5)
    inp = ModulusInputs(norm, 1.0, 0.5, 4.0, radii=(1.0,))
    vals = [modulus_G(inp, 0, 2.0**-k) for k in range(4, 11)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_scale_separation_enforced():
    inp = ModulusInputs(zero_norm, 1.0, 0.5, 4.0, radii=(1.0,))
    with pytest.raises(ValueError):
        modulus_G(inp, 0, 0.3)


@pytest.mark.parametrize("beta, lam", [(0.0, 2.0), (1.0, 2.0), (0.5, 0.5)])
def test_invalid_inputs(beta, lam):
    with pytest.raises(ValueError):
        ModulusInputs(zero_norm, 1.0, beta, lam)


def test_per_level_sup():
    inp = ModulusInputs(zero_norm, [1.0, 2.0], 0.5, 2.0, radii=(1.0, 0.5))
    assert inp.sup_at(1) == 2.0
    assert inp.check_monotone([0.1, 0.2]) is True


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.1, 5.0), st.integers(3, 12))
def test_terms_nonnegative_and_monotone_in_g(beta, c, k):
    r = 2.0**-k
    small = ModulusInputs(constant_g_norm(c, 2, 2.0), 1.0, beta, 4.0)
    large = ModulusInputs(constant_g_norm(2 * c, 2, 2.0), 1.0, beta, 4.0)
    t = modulus_terms(small, 0, r)
    assert np.all(t >= 0)
    assert modulus_G(large, 0, r) >= modulus_G(small, 0, r)
