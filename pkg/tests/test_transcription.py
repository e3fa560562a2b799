import logging
import math

import numpy as np
import pytest
from conftest import random_certificate, random_instance, random_trajectory

import config
import demos
from cli import parse_problem
from convex_geometry import Polytope
from convex_functions import evaluate
from lp_core import INF, INFEASIBLE, UNBOUNDED, DimensionError, RejectedInput, solve_lp
from transcription import (DifferenceOperator, DualCertificate, PrimalNotOptimal, ProblemSpec,
                           adjoint_endpoint_derivatives, adjoint_residual_terms, assemble_primal_lp,
                           dual_identity_residual, dual_terms, endpoint_derivatives, endpoint_stencils,
                           evaluate_dual_functional, extract_dual_certificate, forward_diff,
                           higher_endpoint_multipliers, map_nodes, solve_primal, specialize_dual,
                           trajectory_residuals, transversality_point)


# ============================================================================
# DIFFERENCE OPERATORS
# ============================================================================

@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_forward_difference_of_monomial(j):
    h = 0.125
    t = h * np.arange(12)
    # the j-th difference of t^j is exactly j!
    assert forward_diff(t ** j, j, h) == pytest.approx(math.factorial(j) * np.ones(12 - j))


@pytest.mark.parametrize("seed", range(100))
def test_difference_operator_transpose_identity(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    N = int(rng.integers(k, 51))
    D = DifferenceOperator(k, N + 1, 1.0 / N).matrix
    x, y = rng.standard_normal(N + 1), rng.standard_normal(N + 1 - k)
    scale = np.abs(D).sum() * np.abs(x).max() * np.abs(y).max()
    assert float((D @ x) @ y) == pytest.approx(float(x @ (D.T @ y)), abs=1e-12 * scale)


def test_difference_operator_rejects_short_grid():
    with pytest.raises(RejectedInput):
        DifferenceOperator(3, 3, 0.1)
    with pytest.raises(RejectedInput):
        DifferenceOperator(1, 4, 0.0)


def test_endpoint_derivatives_of_affine_path():
    h = 0.25
    x = 1.0 + 3.0 * h * np.arange(5)
    (x0, xT), (d0, dT) = endpoint_derivatives(x, 2, h)
    assert (x0[0], xT[0]) == pytest.approx((1.0, 4.0))
    assert (d0[0], dT[0]) == pytest.approx((3.0, 3.0))


def test_endpoint_stencils_second_order():
    P0, PT = endpoint_stencils(6, 3, 0.5)
    assert P0[2, :3] == pytest.approx([4.0, -8.0, 4.0])
    assert PT[2, 4:] == pytest.approx([4.0, -8.0, 4.0])
    assert PT[1, 5:] == pytest.approx([-2.0, 2.0])


# ============================================================================
# PROBLEM SPEC
# ============================================================================

def test_problem_spec_replicates_single_state_set(decay):
    assert len(decay.spec.X) == decay.spec.N + 1
    assert decay.spec.h == pytest.approx(0.1)
    assert decay.spec.n_velocities == 10


def test_problem_spec_validation(decay):
    spec = decay.spec
    with pytest.raises(RejectedInput):
        ProblemSpec(2, 1.0, 1, spec.F, spec.f, spec.S, spec.X[:1])
    with pytest.raises(RejectedInput):
        ProblemSpec(1, -1.0, 10, spec.F, spec.f, spec.S, spec.X[:1])
    with pytest.raises(DimensionError):
        ProblemSpec(1, 1.0, 10, spec.F, spec.f, Polytope.whole_space(3), spec.X[:1])
    with pytest.raises(DimensionError):
        ProblemSpec(1, 1.0, 10, spec.F, spec.f, spec.S, list(spec.X[:3]))


def test_short_grid_logs_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="transcription"):
        parse_problem(demos.ptl(N=4))
    assert "2k-1" in caplog.text


# ============================================================================
# PRIMAL
# ============================================================================

def test_decay_optimum(decay):
    assert decay.value == pytest.approx(demos.DECAY_VALUE, abs=1e-9)
    assert decay.traj.x[:, 0] == pytest.approx(0.9 ** np.arange(11), abs=1e-9)
    residuals = trajectory_residuals(decay.spec, decay.traj)
    assert max(residuals.values()) <= 1e-9


def test_ptl_is_bang_bang(ptl):
    assert ptl.value == pytest.approx(demos.ptl_bang_bang_value(64), abs=1e-8)
    assert abs(ptl.value - demos.PTL_CONTINUOUS_VALUE) <= 0.05 * abs(demos.PTL_CONTINUOUS_VALUE)
    assert ptl.traj.u == pytest.approx(-np.ones((62, 1)), abs=1e-8)


def test_assembled_lp_layout(ptl_small):
    lp, idx = assemble_primal_lp(ptl_small.spec)
    assert lp.n == idx.n_vars
    assert idx.diff_rows.stop - idx.diff_rows.start == ptl_small.spec.n_velocities
    assert len(idx.s_rows) == 3
    assert idx.graph_rows is None


def test_infeasible_primal():
    doc = demos.decay()
    doc['state_set'] = {'A': [[1.0]], 'd': [0.5]}
    with pytest.raises(PrimalNotOptimal) as info:
        solve_primal(parse_problem(doc))
    assert info.value.status == INFEASIBLE


def test_unbounded_primal():
    doc = demos.ptl(N=8)
    doc['endpoint_set'] = {'A': [], 'd': []}
    with pytest.raises(PrimalNotOptimal) as info:
        solve_primal(parse_problem(doc))
    assert info.value.status == UNBOUNDED


# ============================================================================
# CERTIFICATE EXTRACTION
# ============================================================================

def test_decay_adjoint_recurrence(decay):
    x_star = decay.cert.x_star[:, 0]
    assert x_star[-1] == pytest.approx(-1.0, abs=1e-8)
    assert x_star[:-1] == pytest.approx(0.9 * x_star[1:], abs=1e-8)
    assert decay.cert.mu0[0] == pytest.approx(demos.DECAY_VALUE, abs=1e-8)
    assert decay.cert.v_star == pytest.approx(np.zeros((11, 1)))


def test_first_order_endpoint_derivatives(decay):
    (d0, dT), = adjoint_endpoint_derivatives(decay.spec, decay.cert)
    x_star, v_star, h = decay.cert.x_star, decay.cert.v_star, decay.spec.h
    assert d0 == pytest.approx(x_star[0], abs=1e-10)
    assert dT == pytest.approx(x_star[-1] - h * v_star[-1], abs=1e-10)


@pytest.mark.parametrize("name", ["decay", "ptl", "pfc"])
def test_strong_duality_on_desk_instances(name, request):
    solved = request.getfixturevalue(name)
    dual = evaluate_dual_functional(solved.spec, solved.cert)
    assert dual == pytest.approx(solved.value, abs=1e-6)


def test_ptl_transversality_point(ptl):
    xi = transversality_point(ptl.spec, ptl.cert)
    assert xi[1] == pytest.approx(1.0, abs=1e-6)
    for w in higher_endpoint_multipliers(ptl.spec, ptl.cert):
        assert w[1] == pytest.approx(0.0, abs=1e-6)


def test_dual_terms_are_finite_at_optimum(pfc):
    terms = dual_terms(pfc.spec, pfc.cert)
    assert set(terms) == {'conjugate', 'hamiltonian', 'state', 'endpoint', 'higher_endpoint'}
    assert all(math.isfinite(t) for t in terms.values())


def test_extraction_needs_optimal_solution(decay):
    lp, _ = assemble_primal_lp(decay.spec)
    sol = solve_lp(lp, max_iter=0)
    with pytest.raises(RejectedInput):
        extract_dual_certificate(decay.spec, sol)


def test_map_nodes_on_thread_pool(monkeypatch):
    serial = map_nodes(lambda i: i * i, list(range(20)))
    monkeypatch.setattr(config, "WORKERS", 4)
    assert map_nodes(lambda i: i * i, list(range(20))) == serial


# ============================================================================
# DUAL FUNCTIONAL ON RANDOM INSTANCES
# ============================================================================

@pytest.mark.parametrize("k,N", [(1, 1), (1, 6), (2, 2), (2, 3), (2, 7), (3, 3), (3, 5), (3, 8)])
def test_summation_by_parts_identity(k, N):
    rng = np.random.default_rng(10 * k + N)
    spec, A_tilde = random_instance(rng, "linear", k, 2, N)
    traj = random_trajectory(rng, spec, A_tilde)
    cert = random_certificate(rng, spec, A_tilde)
    assert dual_identity_residual(spec, cert, traj) <= 1e-8 * (1.0 + np.abs(cert.x_star).max() / spec.h ** k)


@pytest.mark.parametrize("kind", ["linear", "polyhedral"])
@pytest.mark.parametrize("seed", range(50))
def test_weak_duality(kind, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 3))
    n = int(rng.integers(1, 4))
    N = int(rng.integers(2 * k - 1, 9))
    spec, A_tilde = random_instance(rng, kind, k, n, N)
    traj = random_trajectory(rng, spec, A_tilde)
    assert max(trajectory_residuals(spec, traj).values()) <= 1e-9
    cert = random_certificate(rng, spec, A_tilde)
    dual = evaluate_dual_functional(spec, cert)
    assert math.isfinite(dual)
    assert dual <= evaluate(spec.f, traj.endpoints) + 1e-7


def test_off_domain_certificate_scores_minus_infinity(decay):
    x_star = decay.cert.x_star.copy()
    x_star[3] += 1.0
    cert = DualCertificate(x_star, decay.cert.v_star, decay.cert.mu0, decay.cert.muT)
    # B = 0 leaves M_F finite only on a_i = Aᵀx*_{i+1}
    assert adjoint_residual_terms(decay.spec, cert)[2] != pytest.approx(-x_star[3])
    assert evaluate_dual_functional(decay.spec, cert) == -INF


@pytest.mark.parametrize("kind", ["linear", "polyhedral"])
@pytest.mark.parametrize("seed", range(6))
def test_strong_duality_on_random_instances(kind, seed):
    rng = np.random.default_rng(500 + seed)
    spec, _ = random_instance(rng, kind, 2, 1, 6)
    traj, value, sol = solve_primal(spec)
    cert = extract_dual_certificate(spec, sol)
    assert evaluate_dual_functional(spec, cert) == pytest.approx(value, abs=1e-6)


@pytest.mark.parametrize("name,N", [("ptl", 3), ("ptl", 4), ("pfc", 4), ("pfc", 5), ("pfc", 6)])
def test_strong_duality_on_short_grids(name, N):
    spec = parse_problem(demos.DEMOS[name](N=N))
    _, value, sol = solve_primal(spec)
    cert = extract_dual_certificate(spec, sol)
    assert evaluate_dual_functional(spec, cert) == pytest.approx(value, abs=1e-6)


@pytest.mark.parametrize("kind", ["linear", "polyhedral"])
@pytest.mark.parametrize("seed", range(6))
def test_strong_duality_at_minimal_grid(kind, seed):
    rng = np.random.default_rng(600 + seed)
    spec, _ = random_instance(rng, kind, 2, 1, 2)
    _, value, sol = solve_primal(spec)
    cert = extract_dual_certificate(spec, sol)
    assert evaluate_dual_functional(spec, cert) == pytest.approx(value, abs=1e-6)


# ============================================================================
# SPECIALIZED DUALS
# ============================================================================

def test_third_order_specialization(ptl):
    special = specialize_dual(ptl.spec)
    assert special.name == "third-order linear-control dual"
    assert len(special.terms) == 5
    assert special.constraint_residual(ptl.cert) <= 1e-6
    assert special.objective(ptl.cert) == pytest.approx(evaluate_dual_functional(ptl.spec, ptl.cert), abs=1e-8)


def test_fourth_order_specialization(pfc):
    special = specialize_dual(pfc.spec)
    assert special.name == "fourth-order polyhedral dual"
    assert len(special.terms) == 5
    assert special.constraint_residual(pfc.cert) <= 1e-6
    assert special.objective(pfc.cert) == pytest.approx(pfc.value, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_polyhedral_specialization_bounds_dual(seed):
    rng = np.random.default_rng(900 + seed)
    spec, A_tilde = random_instance(rng, "polyhedral", 4, 1, 9)
    cert = random_certificate(rng, spec, A_tilde)
    special = specialize_dual(spec)
    assert special.constraint_residual(cert) <= 1e-8
    dual = evaluate_dual_functional(spec, cert)
    assert math.isfinite(dual)
    assert special.objective(cert) <= dual + 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_linear_control_specialization_equals_dual(seed):
    rng = np.random.default_rng(950 + seed)
    spec, A_tilde = random_instance(rng, "linear", 3, int(rng.integers(1, 3)), int(rng.integers(5, 9)))
    cert = random_certificate(rng, spec, A_tilde)
    special = specialize_dual(spec)
    assert special.constraint_residual(cert) <= 1e-8
    dual = evaluate_dual_functional(spec, cert)
    assert math.isfinite(dual)
    assert special.objective(cert) == pytest.approx(dual, rel=1e-9, abs=1e-7)


def test_no_specialization_for_first_order(decay):
    with pytest.raises(RejectedInput):
        specialize_dual(decay.spec)
