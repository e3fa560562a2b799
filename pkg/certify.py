"""
Certification
=============
Checks a (trajectory, certificate) pair against the sufficient optimality
conditions of the discretized problem and reports one residual per
condition:
- a: Euler-Lagrange inclusion a_i ∈ F*(x*_{i+k}; (x_i, v_i)), v*_m ∈ K*_X(x_m)
- b: argmaximum condition v_i ∈ F_A(x_i; x*_{i+k})
- c, d: transversality at the endpoints
- max_principle (linear-control maps), nonnegativity / complementarity /
  adjoint (polyhedral maps), first_order (k = 1)
- weak_duality, strong_duality
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

import config
from convex_functions import evaluate, subdiff_residual
from convex_geometry import normal_residual, support, violation
from lp_core import INF, DimensionError, RejectedInput
from setvalued_maps import (LinearControlMap, PolyhedralMap, argmax_residual, lam_residual,
                            recover_control)
from transcription import (DiscreteTrajectory, DualCertificate, ProblemSpec,
                           adjoint_endpoint_derivatives, adjoint_residual_terms, endpoint_derivatives,
                           evaluate_dual_functional, extract_dual_certificate, map_nodes,
                           solve_primal, trajectory_residuals, transversality_point)

logger = logging.getLogger(__name__)

SIGN_CONVENTION = (
    "K* = {w* : <w, w*> >= 0 for w in K}; "
    "polyhedral LAM x* = -Aᵀλ, -v* = Eᵀλ, λ >= 0 on active rows; "
    "adjoint paired with v_i is x*_{i+k}"
)


@dataclass(frozen=True)
class ConditionEntry:
    condition: str
    residual: float
    node: Optional[int]
    passed: bool
    tol: float
    detail: Dict[str, float] = field(default_factory=dict)

    def as_dict(self):
        return {
            'condition': self.condition,
            'residual': self.residual,
            'node': self.node,
            'passed': self.passed,
            'tol': self.tol,
            'detail': dict(self.detail),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['condition'], data['residual'], data.get('node'), bool(data['passed']),
                   data['tol'], dict(data.get('detail', {})))


@dataclass(frozen=True)
class VerificationReport:
    entries: Tuple[ConditionEntry, ...]
    sign_convention: str = SIGN_CONVENTION

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def entry(self, condition):
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    @property
    def conditions(self):
        return [e.condition for e in self.entries]

    def as_dict(self):
        return {
            'passed': self.passed,
            'sign_convention': self.sign_convention,
            'entries': [e.as_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(ConditionEntry.from_dict(e) for e in data['entries']),
                   data.get('sign_convention', SIGN_CONVENTION))


def _entry(condition, residuals, tol, detail=None):
    """Worst residual over nodes; inf residuals count as failures"""
    residuals = list(residuals)
    if not residuals:
        return ConditionEntry(condition, 0.0, None, True, tol, detail or {})
    node = int(np.argmax(residuals))
    worst = float(residuals[node])
    entry = ConditionEntry(condition, worst, node, worst <= tol, tol, detail or {})
    if not entry.passed:
        logger.warning(f"Condition {condition} failed: residual {worst:.3e} at node {node} (tol {tol:.1e})")
    return entry


def _require_feasible(spec, traj, tol):
    traj.check_shape(spec)
    residuals = trajectory_residuals(spec, traj)
    worst = max(residuals.values())
    if worst > tol:
        bad = max(residuals, key=residuals.get)
        raise RejectedInput(f"Trajectory is infeasible: {bad} residual {worst:.3e}")


def _tol(value, default):
    return default if value is None else value


# ============================================================================
# EULER-LAGRANGE AND ARGMAX
# ============================================================================

def check_euler_lagrange(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                         tol=None) -> ConditionEntry:
    tol = _tol(tol, config.INCLUSION_TOL)
    _require_feasible(spec, traj, tol)
    cert.check_shape(spec)
    k = spec.k
    a = adjoint_residual_terms(spec, cert)

    lam = map_nodes(lambda i: lam_residual(spec.F, cert.x_star[i + k], traj.x[i], traj.v[i], a[i], tol),
                    list(range(spec.n_velocities)))
    state = map_nodes(lambda m: normal_residual(spec.X[m], traj.x[m], cert.v_star[m], config.ACTIVE_TOL),
                      list(range(spec.N + 1)))
    # the state term lives on every node; the LAM term only on velocity nodes
    per_node = [max(lam[m] if m < len(lam) else 0.0, state[m]) for m in range(spec.N + 1)]
    return _entry('a', per_node, tol, {'lam': max(lam), 'state_cone': max(state)})


def check_argmax(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate, tol=None) -> ConditionEntry:
    tol = _tol(tol, config.INCLUSION_TOL)
    _require_feasible(spec, traj, tol)
    cert.check_shape(spec)
    k = spec.k
    gaps = map_nodes(lambda i: argmax_residual(spec.F, traj.x[i], traj.v[i], cert.x_star[i + k], tol),
                     list(range(spec.n_velocities)))
    return _entry('b', gaps, tol)


# ============================================================================
# TRANSVERSALITY
# ============================================================================

def check_transversality(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                         tol=None) -> List[ConditionEntry]:
    """Entry c, plus entry d when k > 1 (node field = derivative order)"""
    tol = _tol(tol, config.INCLUSION_TOL)
    traj.check_shape(spec)
    cert.check_shape(spec)
    k = spec.k
    pairs = [np.concatenate(p) for p in endpoint_derivatives(traj.x, k, spec.h)]
    for j, p in enumerate(pairs):
        if np.max(spec.S.A @ p - spec.S.d, initial=0.0) > tol:
            raise RejectedInput(f"Endpoint pair of order {j} lies outside S")

    deltas = adjoint_endpoint_derivatives(spec, cert)
    xi = transversality_point(spec, cert, deltas)
    subgradient = subdiff_residual(spec.f, traj.endpoints, xi)
    cone = normal_residual(spec.S, pairs[0], cert.mu, config.ACTIVE_TOL)
    entries = [ConditionEntry('c', max(subgradient, cone), 0, max(subgradient, cone) <= tol, tol,
                              {'subgradient': subgradient, 'endpoint_cone': cone})]
    if not entries[0].passed:
        logger.warning(f"Condition c failed: subgradient {subgradient:.3e}, cone {cone:.3e}")

    if k > 1:
        residuals = {}
        for j in range(k - 1):
            d0, dT = deltas[j]
            w = np.concatenate([(-1) ** (j + 1) * d0, (-1) ** j * dT])
            order = k - 1 - j
            residuals[order] = normal_residual(spec.S, pairs[order], w, config.ACTIVE_TOL)
        ordered = [residuals.get(order, 0.0) for order in range(k)]
        entries.append(_entry('d', ordered, tol))
    return entries


# ============================================================================
# DUALITY
# ============================================================================

def check_weak_duality(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                       tol=None) -> ConditionEntry:
    tol = _tol(tol, config.WEAK_DUALITY_TOL)
    _require_feasible(spec, traj, config.INCLUSION_TOL)
    primal = evaluate(spec.f, traj.endpoints)
    dual = evaluate_dual_functional(spec, cert)
    residual = dual - primal
    return ConditionEntry('weak_duality', residual, None, residual <= tol, tol,
                          {'primal': primal, 'dual': dual})


def check_strong_duality(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                         tol=None) -> ConditionEntry:
    tol = _tol(tol, config.GAP_TOL)
    primal = evaluate(spec.f, traj.endpoints)
    dual = evaluate_dual_functional(spec, cert)
    gap = abs(primal - dual) if dual != -INF else INF
    return ConditionEntry('strong_duality', gap, None, gap <= tol, tol, {'primal': primal, 'dual': dual})


def check_gap(spec: ProblemSpec) -> Tuple[float, float, float]:
    """(primal optimum, J* at the extracted certificate, primal - dual)"""
    traj, primal, sol = solve_primal(spec)
    cert = extract_dual_certificate(spec, sol)
    dual = evaluate_dual_functional(spec, cert)
    gap = primal - dual
    logger.info(f"Gap: primal={primal:.10g} dual={dual:.10g} gap={gap:.3e}")
    return primal, dual, gap


# ============================================================================
# MAP-SPECIFIC CONDITIONS
# ============================================================================

def _control_mismatch(spec, traj):
    """Per node: how far a supplied u_i is from realizing v_i - Ax_i inside U"""
    nv = spec.n_velocities
    if traj.u is None:
        return np.zeros(nv)
    F = spec.F
    u = np.asarray(traj.u, dtype=float)
    if u.shape != (nv, F.r):
        raise DimensionError(f"control grid has shape {u.shape}, expected {(nv, F.r)}")
    realized = np.max(np.abs(traj.v - traj.x[:nv] @ F.A.T - u @ F.B.T), axis=1, initial=0.0)
    outside = np.array([violation(F.U, u[i]) for i in range(nv)])
    return np.maximum(realized, outside)


def check_max_principle(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                        tol=None) -> ConditionEntry:
    """W_U(Bᵀx*_{i+k}) - <v_i - Ax_i, x*_{i+k}> per node.

    Bu_i is always taken from the velocities; supplied controls only have to
    agree with them, and their misfit is folded into the node residual.
    """
    tol = _tol(tol, config.INCLUSION_TOL)
    F = spec.F
    if not isinstance(F, LinearControlMap):
        raise RejectedInput("Maximum principle applies to linear-control maps only")
    traj.check_shape(spec)
    cert.check_shape(spec)
    k = spec.k
    mismatch = _control_mismatch(spec, traj)

    def gap(i):
        recover_control(F, traj.x[i], traj.v[i], tol)
        y = cert.x_star[i + k]
        drift = traj.v[i] - F.A @ traj.x[i]
        return max(support(F.U, F.B.T @ y) - float(drift @ y), float(mismatch[i]))

    residuals = map_nodes(gap, list(range(spec.n_velocities)))
    return _entry('max_principle', residuals, tol, {'control_mismatch': float(np.max(mismatch, initial=0.0))})


def check_polyhedral_conditions(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                                tol=None, complementarity_tol=None) -> List[ConditionEntry]:
    """Entries nonnegativity, complementarity and adjoint"""
    tol = _tol(tol, config.INCLUSION_TOL)
    complementarity_tol = _tol(complementarity_tol, config.COMPLEMENTARITY_TOL)
    F = spec.F
    if not isinstance(F, PolyhedralMap):
        raise RejectedInput("Polyhedral conditions apply to polyhedral maps only")
    if cert.lam is None:
        raise RejectedInput("Polyhedral conditions need lambda multipliers")
    traj.check_shape(spec)
    cert.check_shape(spec)
    k, nv = spec.k, spec.n_velocities
    lam = cert.lam
    slack = traj.x[:nv] @ F.A.T - traj.v @ F.E.T - F.d
    a = adjoint_residual_terms(spec, cert)

    negativity = np.max(-lam, axis=1, initial=0.0)
    complementarity = np.abs(np.sum(slack * lam, axis=1))
    adjoint = np.maximum(np.max(np.abs(cert.x_star[k:] + lam @ F.E), axis=1),
                         np.max(np.abs(a + lam @ F.A), axis=1))
    return [
        _entry('nonnegativity', negativity, tol),
        _entry('complementarity', complementarity, complementarity_tol),
        _entry('adjoint', adjoint, tol),
    ]


def check_first_order(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
                      tol=None) -> ConditionEntry:
    """k = 1 system written out directly:
    -(x*_{i+1} - x*_i)/h - v*_i ∈ F*(x*_{i+1}; (x_i, v_i)), v*_m ∈ K*_X(x_m),
    (x*_0, -(x*_N - h v*_N)) + μ* ∈ ∂f(x_0, x_N) with μ* ∈ K*_S(x_0, x_N)
    """
    tol = _tol(tol, config.INCLUSION_TOL)
    if spec.k != 1:
        raise RejectedInput(f"First-order verifier needs k = 1, got k = {spec.k}")
    _require_feasible(spec, traj, tol)
    cert.check_shape(spec)
    h, N = spec.h, spec.N
    xs, vs = cert.x_star, cert.v_star

    adjoint = [lam_residual(spec.F, xs[i + 1], traj.x[i], traj.v[i], -(xs[i + 1] - xs[i]) / h - vs[i], tol)
               for i in range(N)]
    state = [normal_residual(spec.X[m], traj.x[m], vs[m], config.ACTIVE_TOL) for m in range(N + 1)]
    xi = np.concatenate([xs[0], -(xs[N] - h * vs[N])]) + cert.mu
    subgradient = subdiff_residual(spec.f, traj.endpoints, xi)
    cone = normal_residual(spec.S, traj.endpoints, cert.mu, config.ACTIVE_TOL)

    detail = {'adjoint': max(adjoint), 'state_cone': max(state), 'subgradient': subgradient,
              'endpoint_cone': cone}
    worst = max(detail.values())
    return ConditionEntry('first_order', worst, None, worst <= tol, tol, detail)


# ============================================================================
# FULL REPORT
# ============================================================================

def verify_all(spec: ProblemSpec, traj: DiscreteTrajectory, cert: DualCertificate,
               tols: Optional[Dict[str, float]] = None) -> VerificationReport:
    """Every condition that applies to the problem's map type and order"""
    tols = {**config.tolerances(), **(tols or {})}
    inclusion = tols['inclusion']
    entries = [
        check_euler_lagrange(spec, traj, cert, inclusion),
        check_argmax(spec, traj, cert, inclusion),
        *check_transversality(spec, traj, cert, inclusion),
    ]
    if isinstance(spec.F, LinearControlMap):
        entries.append(check_max_principle(spec, traj, cert, inclusion))
    elif cert.lam is not None:
        entries.extend(check_polyhedral_conditions(spec, traj, cert, inclusion, tols['complementarity']))
    if spec.k == 1:
        entries.append(check_first_order(spec, traj, cert, inclusion))
    entries.append(check_weak_duality(spec, traj, cert, tols['weak_duality']))
    entries.append(check_strong_duality(spec, traj, cert, tols['gap']))

    report = VerificationReport(tuple(entries))
    failed = [e.condition for e in report.entries if not e.passed]
    if failed:
        logger.warning(f"Verification failed: {', '.join(failed)}")
    else:
        logger.info(f"Verification passed ({len(entries)} conditions)")
    return report
