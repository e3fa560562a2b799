import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from lp_core import (INF, INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, DimensionError, IndeterminateForm,
                     LinearProgram, RejectedInput, check_kkt, dual_objective, ext_add, ext_neg, ext_scale,
                     solve_lp)


def test_ext_add_absorbs_infinities():
    assert ext_add(1.0, 2.5) == 3.5
    assert ext_add(1.0, INF) == INF
    assert ext_add(-INF, 4.0, -2.0) == -INF
    with pytest.raises(IndeterminateForm):
        ext_add(INF, -INF)


def test_ext_scale_and_negation():
    assert ext_scale(0.0, INF) == 0.0
    assert ext_scale(2.0, -INF) == -INF
    with pytest.raises(RejectedInput):
        ext_scale(-1.0, 1.0)
    assert ext_neg(INF) == -INF


def test_textbook_lp():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18
    lp = LinearProgram(
        c=[-3.0, -5.0],
        A_ub=[[1.0, 0.0], [0.0, 2.0], [3.0, 2.0]],
        b_ub=[4.0, 12.0, 18.0],
        bounds=[(0, None), (0, None)],
    )
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value == pytest.approx(-36.0)
    assert sol.z == pytest.approx([2.0, 6.0])
    assert dual_objective(lp, sol) == pytest.approx(-36.0)
    assert check_kkt(lp, sol).passed


def test_free_variables_with_equalities():
    lp = LinearProgram(
        c=[1.0, 1.0, 0.0],
        A_ub=[[-1.0, 0.0, 1.0], [0.0, -1.0, -1.0]],
        b_ub=[0.0, 0.0],
        A_eq=[[0.0, 0.0, 1.0]],
        b_eq=[2.0],
    )
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value == pytest.approx(0.0, abs=1e-9)
    assert sol.z[2] == pytest.approx(2.0)
    report = check_kkt(lp, sol)
    assert report.passed, report.as_dict()


def test_infeasible_lp():
    lp = LinearProgram(c=[1.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0])
    sol = solve_lp(lp)
    assert sol.status == INFEASIBLE
    assert sol.value == INF
    assert sol.z is None


def test_unbounded_lp():
    lp = LinearProgram(c=[-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0], bounds=[(0, None), (None, None)])
    sol = solve_lp(lp)
    assert sol.status == UNBOUNDED
    assert sol.value == -INF


def test_iteration_limit_is_reported():
    lp = LinearProgram(
        c=[-1.0, -1.0, -1.0],
        A_ub=[[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [2.0, 0.0, 1.0]],
        b_ub=[4.0, 6.0, 5.0],
        bounds=[(0, None)] * 3,
    )
    sol = solve_lp(lp, max_iter=1)
    assert sol.status == ITERATION_LIMIT
    assert math.isnan(sol.value)


def test_empty_lp_without_constraints():
    sol = solve_lp(LinearProgram(c=[0.0, 0.0]))
    assert sol.status == OPTIMAL
    assert sol.value == 0.0


def test_dimension_errors():
    with pytest.raises(DimensionError):
        LinearProgram(c=[1.0, 2.0], A_ub=[[1.0, 2.0, 3.0]], b_ub=[1.0])
    with pytest.raises(DimensionError):
        LinearProgram(c=[1.0], A_eq=[[1.0]], b_eq=[1.0, 2.0])
    with pytest.raises(RejectedInput):
        LinearProgram(c=[math.nan])


@pytest.mark.parametrize("seed", range(10))
def test_random_bounded_lps_satisfy_kkt(seed):
    rng = np.random.default_rng(seed)
    n, m = 4, 7
    A = rng.standard_normal((m, n))
    # a box keeps every instance bounded; z = 0 keeps it feasible
    A_ub = np.vstack([A, np.eye(n), -np.eye(n)])
    b_ub = np.concatenate([rng.uniform(0.5, 2.0, m), 3.0 * np.ones(2 * n)])
    lp = LinearProgram(c=rng.standard_normal(n), A_ub=A_ub, b_ub=b_ub)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    report = check_kkt(lp, sol, tol=1e-7)
    assert report.passed, report.as_dict()
    assert dual_objective(lp, sol) == pytest.approx(sol.value, abs=1e-7)


def test_kkt_rejects_non_optimal_solution():
    lp = LinearProgram(c=[1.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0])
    with pytest.raises(RejectedInput):
        check_kkt(lp, solve_lp(lp))


def textbook_lp():
    return LinearProgram(
        c=[-3.0, -5.0],
        A_ub=[[1.0, 0.0], [0.0, 2.0], [3.0, 2.0]],
        b_ub=[4.0, 12.0, 18.0],
        bounds=[(0, None), (0, None)],
    )


def test_kkt_flags_perturbed_point_and_multipliers():
    lp = textbook_lp()
    sol = solve_lp(lp)
    # 3x + 2y = 18.3 breaks the last row
    shifted = replace(sol, z=sol.z + np.array([0.1, 0.0]))
    report = check_kkt(lp, shifted)
    assert not report.passed
    assert report.primal_feasibility == pytest.approx(0.3)
    y = sol.y_ub.copy()
    y[0] = -0.25
    report = check_kkt(lp, replace(sol, y_ub=y))
    assert not report.passed
    assert report.dual_feasibility == pytest.approx(0.25)


def test_solver_is_deterministic():
    rng = np.random.default_rng(17)
    n, m = 5, 9
    A_ub = np.vstack([rng.standard_normal((m, n)), np.eye(n), -np.eye(n)])
    b_ub = np.concatenate([rng.uniform(0.5, 2.0, m), np.ones(2 * n)])
    lp = LinearProgram(c=rng.standard_normal(n), A_ub=A_ub, b_ub=b_ub)
    first, second = solve_lp(lp), solve_lp(lp)
    assert first.status == second.status == OPTIMAL
    assert first.iterations == second.iterations
    assert np.array_equal(first.z, second.z)
    assert np.array_equal(first.y_ub, second.y_ub)
    assert first.value == second.value


def vertex_optimum(c, A, b):
    """Brute force: best feasible basic point over all square row subsets"""
    best = INF
    for rows in itertools.combinations(range(A.shape[0]), A.shape[1]):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        z = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ z <= b + 1e-9):
            best = min(best, float(c @ z))
    return best


@pytest.mark.parametrize("seed", range(30))
def test_random_lps_match_vertex_enumeration(seed):
    rng = np.random.default_rng(300 + seed)
    n = int(rng.integers(2, 4))
    m = int(rng.integers(1, 5))
    A_ub = np.vstack([rng.standard_normal((m, n)), np.eye(n), -np.eye(n)])
    b_ub = np.concatenate([rng.uniform(0.1, 2.0, m), rng.uniform(0.5, 3.0, 2 * n)])
    c = rng.standard_normal(n)
    sol = solve_lp(LinearProgram(c=c, A_ub=A_ub, b_ub=b_ub))
    assert sol.status == OPTIMAL
    assert sol.value == pytest.approx(vertex_optimum(c, A_ub, b_ub), abs=1e-7)
