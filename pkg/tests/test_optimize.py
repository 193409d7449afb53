import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from cqedfit.optimize import NM_COEFFS, Objective, basin_hopping, nelder_mead


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def rosenbrock(x):
    return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)


def double_well(x):
    return float((x[0] ** 2 - 1) ** 2 + 0.1 * x[0])


def test_standard_coefficients():
    assert NM_COEFFS == (1.0, 2.0, 0.5, 0.5)


def test_sphere():
    res = nelder_mead(Objective(sphere), [3.0, 4.0], tol=1e-16)
    assert res.converged
    assert np.max(np.abs(res.params)) < 1e-6


def test_rosenbrock():
    res = nelder_mead(Objective(rosenbrock), [-1.2, 1.0], tol=1e-16, max_eval=5000, n_restarts=2)
    assert np.allclose(res.params, [1.0, 1.0], atol=1e-4)


def test_one_dimensional_quadratic():
    res = nelder_mead(Objective(lambda x: (x[0] - 5.0) ** 2), [0.0], tol=1e-20, xtol=1e-10)
    assert res.params[0] == pytest.approx(5.0, abs=1e-8)


def test_symmetric_straddle_needs_xtol():
    # vertices at equal cost on both sides of the minimum satisfy the cost test alone
    f = lambda x: (x[0] - 2.0) ** 2  # noqa: E731
    tight = nelder_mead(Objective(f), [0.0], xtol=1e-9)
    assert tight.converged and abs(tight.params[0] - 2.0) < 1e-8


def test_budget_exhaustion_reports_not_converged():
    obj = Objective(rosenbrock)
    res = nelder_mead(obj, [-1.2, 1.0], tol=1e-16, max_eval=20)
    assert not res.converged and res.n_eval <= 25
    assert "exhausted" in res.message


def test_start_outside_bounds_rejected():
    with pytest.raises(ValueError):
        nelder_mead(Objective(sphere, bounds=[(0, 1)]), [2.0])


def test_bounds_are_respected():
    seen = []

    def f(x):
        seen.append(x.copy())
        return (x[0] + 3) ** 2

    res = nelder_mead(Objective(f, bounds=[(-1, 1)]), [0.5], tol=1e-14)
    assert res.params[0] == pytest.approx(-1.0)
    assert all(-1 <= v[0] <= 1 for v in seen)


def test_non_finite_cost_treated_as_infinite():
    obj = Objective(lambda x: math.nan if x[0] > 2 else (x[0] - 1) ** 2)
    assert obj(np.array([3.0])) == math.inf
    assert nelder_mead(obj, [0.0], tol=1e-14, xtol=1e-8).params[0] == pytest.approx(1.0, abs=1e-5)


def test_objective_counts_evaluations():
    obj = Objective(sphere)
    res = nelder_mead(obj, [1.0, 1.0])
    assert obj.n_eval == res.n_eval > 0


# ------------------------------------------------------------ basin hopping
def test_single_basin_matches_local_minimiser():
    f = lambda x: (x[0] - 2.0) ** 2 + 1.0  # noqa: E731
    local = nelder_mead(Objective(f), [0.0], xtol=1e-8)
    hop = basin_hopping(Objective(f), [0.0], n_hops=5, step=0.5, seed=3, local_xtol=1e-8)
    assert hop.cost <= local.cost
    assert hop.params[0] == pytest.approx(local.params[0], abs=1e-4)


def test_double_well_finds_global_minimum():
    x_star = brentq(lambda x: 4 * x * (x * x - 1) + 0.1, -1.5, -0.5)
    local = nelder_mead(Objective(double_well), [1.0], tol=1e-14)
    assert local.params[0] > 0  # trapped in the right-hand well
    res = basin_hopping(Objective(double_well), [1.0], n_hops=20, step=1.5, temperature=0.5, seed=0, local_tol=1e-14)
    assert res.params[0] == pytest.approx(x_star, abs=1e-3)


def test_same_seed_is_bit_identical():
    runs = [basin_hopping(Objective(double_well), [1.0], n_hops=10, step=1.5, seed=42) for _ in range(2)]
    assert np.array_equal(runs[0].params, runs[1].params)
    assert runs[0].history == runs[1].history
    assert runs[0].n_eval == runs[1].n_eval


@given(st.integers(0, 1000))
def test_best_ever_cost_never_increases(seed):
    res = basin_hopping(Objective(double_well, bounds=[(-3, 3)]), [1.0], n_hops=6, seed=seed)
    assert len(res.history) == 7
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert res.cost == res.history[-1]
