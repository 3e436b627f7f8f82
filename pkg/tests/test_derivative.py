import numpy as np
import pytest

from conftest import solve_on
from convexreg.coefficients import identity
from convexreg.engine.derivative import (CSV_COLUMNS, boundary_derivative, one_sided_slope,
                                         reduce_r0, slab_slope)
from convexreg.geometry import ConvexDomain, CubeSpec, build_mask, graph_modulus
from convexreg.presets import Manufactured

HALF = ConvexDomain.half_space(2)
OP = identity(2)


@pytest.fixture(scope="module")
def manufactured_report(manufactured_w):
    return boundary_derivative(manufactured_w, OP, Manufactured(), HALF, J=6, nodes=128)


@pytest.fixture(scope="module")
def linear_report(linear_w):
    return boundary_derivative(linear_w, OP, 0.0, HALF, J=6, nodes=128)


class TestSlopes:
    def test_slab_fit_exact_on_model(self):
        mg = build_mask(HALF, CubeSpec(1.0, 1.0), 1 / 32)
        x = mg.grid.points()
        w = mg.function(0.8 * x[..., 1] - 3 * x[..., 1] ** 2 + 0.5 * x[..., 0] * x[..., 1])
        assert slab_slope(w, 0.25) == pytest.approx(0.8, rel=1e-12)
        assert one_sided_slope(w) == pytest.approx(0.8, rel=1e-10)

    def test_reduce_r0(self):
        dom = ConvexDomain.graph_domain("quadratic")
        r0 = reduce_r0(dom, 1.0, 4.0)
        assert np.sqrt(graph_modulus(dom, r0)) <= 0.25
        assert np.sqrt(graph_modulus(dom, 2 * r0)) > 0.25


class TestManufactured:
    def test_slope(self, manufactured_report):
        assert manufactured_report.a == pytest.approx(1.0, rel=0.02)
        np.testing.assert_allclose(manufactured_report.slopes, 1.0, rtol=0.02)

    def test_verdicts(self, manufactured_report):
        v = manufactured_report.verdicts
        assert v["a_monotone"] and v["sandwich"] and v["final_estimate"]

    def test_C_of_r_decreasing(self, manufactured_report):
        c = [v for _, v in manufactured_report.C_of_r]
        assert all(b <= a for a, b in zip(c, c[1:]))

    def test_csv(self, manufactured_report):
        lines = manufactured_report.to_csv().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(manufactured_report.rows)


class TestLinear:
    def test_exact_slopes(self, linear_report):
        np.testing.assert_allclose(linear_report.slopes, 1.0, atol=1e-9)

    def test_only_sup_term(self, linear_report):
        terms = np.asarray(linear_report.extra["modulus_terms"])
        assert np.all(terms[:, 1:] == 0.0)
        # C(r) reduces to the first term of G_j: no slope drift, no rhs contribution
        np.testing.assert_allclose(linear_report.C_values, terms[:, 0], rtol=1e-12)


def test_degenerate_shortcut():
    w = solve_on(HALF, 0.0, 0.0, h=1 / 32)
    rep = boundary_derivative(w, OP, 0.0, HALF, J=4, nodes=64)
    assert rep.verdicts["differentiable_at_0"] is True
    assert rep.verdicts["degenerate_schedule"] is True
    assert rep.a == 0.0
