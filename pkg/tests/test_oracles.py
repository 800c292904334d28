import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapcert import gp
from gapcert.domain import SeededRng, TestDomain
from gapcert.errors import BudgetError, NumericalError, ParameterError
from gapcert.oracles import GridSpec, RkhsFunction, dense_gp_solve, grid_optimum, mc_expectation, random_rkhs_function


def test_grid_optimum_examples():
    z, v = grid_optimum(lambda z: -float(np.sum(z**2)), GridSpec(101, TestDomain([-1, -1], [1, 1])), "max")
    np.testing.assert_allclose(z, [0, 0], atol=1e-15)
    assert v == pytest.approx(0.0, abs=1e-15)
    z, v = grid_optimum(lambda z: float(z[0]), GridSpec(11, TestDomain([0], [1])), "max")
    assert (z[0], v) == (1.0, 1.0)


def test_grid_optimum_tie_goes_to_smallest_point():
    z, v = grid_optimum(lambda z: 0.05 + 0.1 * abs(z[0]), GridSpec(201, TestDomain([-1], [1])), "max")
    assert z[0] == -1.0
    assert v == pytest.approx(0.15, abs=1e-15)


def test_grid_budget_and_mode():
    with pytest.raises(BudgetError):
        GridSpec(1001, TestDomain([0, 0], [1, 1]), budget=1000).points()
    with pytest.raises(ParameterError):
        GridSpec(1, TestDomain([0], [1]))
    with pytest.raises(ParameterError):
        grid_optimum(lambda z: 0.0, GridSpec(3, TestDomain([0], [1])), "median")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3))
def test_grid_min_max_duality(c):
    f = lambda z: c[0] * z[0] ** 2 + c[1] * z[0] * z[1] + c[2] * z[1]
    g = GridSpec(9, TestDomain([-1, -1], [1, 1]))
    _, vmax = grid_optimum(f, g, "max")
    _, vmin = grid_optimum(lambda z: -f(z), g, "min")
    assert vmax == -vmin


def test_mc_expectation():
    assert mc_expectation(lambda r: 2.5, 10, SeededRng(0)) == (2.5, 0.0)
    mean, se = mc_expectation(lambda r: 1.0 if r.generator().random() < 0.5 else -1.0, 10_000, SeededRng(12345))
    assert -0.05 <= mean <= 0.05
    assert mean == -0.008
    with pytest.raises(ParameterError):
        mc_expectation(lambda r: 0.0, 1, SeededRng(0))


def test_mc_stderr_scaling():
    s = lambda r: float(r.generator().standard_normal())
    _, se1 = mc_expectation(s, 400, SeededRng(9))
    _, se4 = mc_expectation(s, 1600, SeededRng(9))
    assert 0.8 <= (se1 / se4) / 2.0 <= 1.2


def test_dense_solve_single_point_noiseless():
    k = gp.KernelSpec("squared-exponential", (1.0,), 1.0)
    mean, var = dense_gp_solve(gp.Dataset([[0.3]], [4.0]), k, 0.0, (0.3,))
    assert mean == pytest.approx(4.0, abs=1e-14)
    assert var == pytest.approx(0.0, abs=1e-14)


def test_dense_solve_two_point_hand_values():
    k = gp.KernelSpec("squared-exponential", (1.0,), 1.0)
    mean, var = dense_gp_solve(gp.Dataset([[0.0], [1.0]], [1.0, -1.0]), k, 0.1, (0.25,))
    assert mean == pytest.approx(0.4344619107693435, abs=1e-12)
    assert var == pytest.approx(0.08252939791489866, abs=1e-12)


def test_dense_solve_singular():
    k = gp.KernelSpec("squared-exponential", (1.0,), 1.0)
    with pytest.raises(NumericalError):
        dense_gp_solve(gp.Dataset([[0.0], [0.0]], [1.0, 1.0]), k, 0.0, (0.5,))


def test_rkhs_function_norm():
    f = RkhsFunction("squared-exponential", (1.0,), 1.0, ((0.0,), (1.0,)), (1.0, -1.0))
    assert f.norm == pytest.approx(math.sqrt(2 - 2 * math.exp(-0.5)), abs=1e-14)
    assert f((0.0,)) == pytest.approx(1 - math.exp(-0.5), abs=1e-14)
    k = gp.KernelSpec("matern-5/2", (0.2, 0.3), 1.0)
    g = random_rkhs_function(k, TestDomain([0, 0], [1, 1]), 4, SeededRng(3))
    assert g == random_rkhs_function(k, TestDomain([0, 0], [1, 1]), 4, SeededRng(3))
    assert g.norm > 0
