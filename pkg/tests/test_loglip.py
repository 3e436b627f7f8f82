import math

import numpy as np
import pytest

from conftest import solve_on
from convexreg.coefficients import identity
from convexreg.engine.loglip import InductionFailure, ball_sup, loglip_induction, normalization
from convexreg.geometry import ConvexDomain
from convexreg.presets import Constant, Manufactured, RadialPowerLog

HALF = ConvexDomain.half_space(2)
OP = identity(2)


def test_linear(linear_w):
    rep = loglip_induction(linear_w, OP, 0.0, 0.5, Kmax=6, nodes=64)
    steps = rep.extra["steps"]
    assert steps[1].error <= 1e-10
    assert all(s.passed for s in steps)
    assert all(s.error <= 1e-9 * s.r for s in steps[1:])
    # the log-Lipschitz fit of a linear function is its linear growth over log(1/r)
    assert rep.verdicts["loglip_constant"] == pytest.approx(1 / math.log(2), rel=1e-6)


def test_manufactured(manufactured_w):
    m = Manufactured()
    rep = loglip_induction(manufactured_w, OP, m, 0.5, Kmax=8, nodes=64)
    steps = rep.extra["steps"][1:]
    assert rep.verdicts["induction_passes"]
    fit = lambda ks: max(s.error / (s.k * s.r) for s in steps if s.k in ks)
    assert fit(range(1, 9)) <= 2 * fit(range(1, 5))
    C = fit(range(1, 9))
    assert all(s.error <= C * s.k * s.r * (1 + 1e-12) for s in steps)


def test_borderline_family():
    g = RadialPowerLog(0.6)
    w = solve_on(HALF, g, 0.0)
    rep = loglip_induction(w, OP, g, 0.5, Kmax=8, nodes=64)
    lin = np.array(rep.extra["linear_ratios"][2:])
    ll = np.array(rep.extra["loglip_ratios"][2:])
    assert np.all(np.diff(lin) > 0)
    assert ll.max() <= 2 * ll.min()


def test_failure_suggests_smaller_ratio():
    w = solve_on(HALF, Constant(20.0), lambda x: 10 * x[..., -1] * (1 - x[..., -1]))
    with pytest.raises(InductionFailure, match="rho_dyadic = 0.45"):
        loglip_induction(w, OP, Constant(20.0), 0.9, Kmax=3, normalize=False, nodes=64)


def test_bad_ratio(linear_w):
    with pytest.raises(ValueError):
        loglip_induction(linear_w, OP, 0.0, 1.0)


def test_normalization(manufactured_w):
    alpha = normalization(manufactured_w, Manufactured(), 0.5, abp_C=0.1)
    assert alpha * ball_sup(manufactured_w, 10.0) <= 1 + 1e-12
    assert 0 < alpha <= 1
