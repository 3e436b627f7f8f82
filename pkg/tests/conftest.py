import warnings

import numpy as np
import pytest

from convexreg.coefficients import identity
from convexreg.geometry import ConvexDomain, CubeSpec
from convexreg.grid import Grid, GridFunction, sample
from convexreg.presets import Manufactured
from convexreg.solver import make_problem, solve


def centred_grid(half: float, h: float, n: int = 2) -> Grid:
    k = int(round(2 * half / h)) + 1
    return Grid((-half,) * n, h, (k,) * n)


def grid_function(fn, grid: Grid, mask=None) -> GridFunction:
    return GridFunction(grid, sample(fn, grid), mask)


def solve_on(dom, rhs, data, h=1.0 / 64, op=None, n=2):
    op = op or identity(n, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve(make_problem(dom, CubeSpec(1.0, 1.0), h, op, rhs, data)).solution


@pytest.fixture(scope="session")
def manufactured_w():
    m = Manufactured()
    return solve_on(ConvexDomain.half_space(2), m, m.exact)


@pytest.fixture(scope="session")
def linear_w():
    return solve_on(ConvexDomain.half_space(2), 0.0, lambda x: x[..., -1])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
