"""
Set-Valued Maps
===============
The two convex mapping families handled by the solver:
- LinearControlMap  F(x) = Ax + BU, U a polytope of controls
- PolyhedralMap     F(x) = {v : Ax - Ev <= d}

For each: Hamiltonian H_F(x, v*), argmaximum points, the locally adjoint
mapping (LAM) F*(v*; (x̃, ṽ)) and M_F(x*, v*) = inf over gph F of <x, x*> - <v, v*>.

Sign convention for the polyhedral LAM: x* = -Aᵀλ, -v* = Eᵀλ, λ >= 0 on
active rows (the form that agrees with the Hamiltonian definition).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

import config
from convex_geometry import Polytope, PolyhedralCone, dual_cone_residual, support, support_point
from lp_core import (INF, OPTIMAL, INFEASIBLE, UNBOUNDED, LinearProgram, RejectedInput,
                     DimensionError, as_matrix, as_vector, ext_neg, solve_lp)

logger = logging.getLogger(__name__)


class HamiltonianNotFinite(RejectedInput):
    """H_F(x, v*) is +inf or -inf, so no argmax point exists"""

    def __init__(self, value, message=None):
        self.value = value
        super().__init__(message or f"Hamiltonian is {value}; argmax set is empty")


# ============================================================================
# MAP TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class LinearControlMap:
    """F(x) = Ax + BU"""

    A: np.ndarray
    B: np.ndarray
    U: Polytope

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[1]
        if A.shape[0] != n:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        B = as_matrix(self.B, self.U.dim, "B")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        if self.U.is_empty:
            raise RejectedInput("Control set U is empty")
        if not self.U.is_bounded:
            raise RejectedInput("Control set U must be bounded")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def r(self):
        return self.B.shape[1]

    def as_dict(self):
        return {'kind': 'linear_control', 'A': self.A.tolist(), 'B': self.B.tolist(), 'U': self.U.as_dict()}


@dataclass(frozen=True, eq=False)
class PolyhedralMap:
    """gph F = {(x, v) : Ax - Ev <= d}"""

    A: np.ndarray
    E: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        E = as_matrix(self.E, name="E")
        if A.shape != E.shape:
            raise DimensionError(f"A {A.shape} and E {E.shape} must have the same shape")
        d = as_vector(self.d, A.shape[0], "d")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'E', E)
        object.__setattr__(self, 'd', d)
        if self.graph.is_empty:
            raise RejectedInput("Graph {(x, v) : Ax - Ev <= d} is empty")

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def graph(self):
        return Polytope(np.hstack([self.A, -self.E]), self.d)

    def as_dict(self):
        return {'kind': 'polyhedral', 'A': self.A.tolist(), 'E': self.E.tolist(), 'd': self.d.tolist()}


SetValuedMap = Union[LinearControlMap, PolyhedralMap]


def _vec(F, value, name):
    return as_vector(value, F.n, name)


# ============================================================================
# MEMBERSHIP
# ============================================================================

def recover_control(F: LinearControlMap, x_tilde, v_tilde, tol=None):
    """Control ũ in U with Bũ = ṽ - Ax̃ (least inf-norm misfit); rejects when the misfit exceeds tol"""
    tol = config.INCLUSION_TOL if tol is None else tol
    u, misfit = _control_fit(F, _vec(F, x_tilde, "x_tilde"), _vec(F, v_tilde, "v_tilde"))
    if misfit > tol:
        raise RejectedInput(f"No control in U realizes the velocity (misfit {misfit:.3e})")
    return u


def _control_fit(F, x, v):
    n, r = F.n, F.r
    w = v - F.A @ x
    # variables (u, t): min t s.t. |Bu - w| <= t, u in U
    ones = np.ones((n, 1))
    A_ub = np.vstack([
        np.hstack([F.B, -ones]),
        np.hstack([-F.B, -ones]),
        np.hstack([F.U.A, np.zeros((F.U.m, 1))]),
    ])
    b_ub = np.concatenate([w, -w, F.U.d])
    c = np.zeros(r + 1)
    c[-1] = 1.0
    sol = solve_lp(LinearProgram(c, A_ub, b_ub))
    if sol.status != OPTIMAL:
        raise RuntimeError(f"Control recovery LP ended with status {sol.status}")
    return sol.z[:r], max(sol.value, 0.0)


def inclusion_residual(F: SetValuedMap, x, v) -> float:
    """How far v is from F(x) (zero when v is in F(x))"""
    x, v = _vec(F, x, "x"), _vec(F, v, "v")
    if isinstance(F, LinearControlMap):
        return _control_fit(F, x, v)[1]
    return float(np.max(F.A @ x - F.E @ v - F.d, initial=0.0))


def _require_member(F, x, v, tol):
    tol = config.INCLUSION_TOL if tol is None else tol
    residual = inclusion_residual(F, x, v)
    if residual > tol:
        raise RejectedInput(f"Velocity is not in F(x) (residual {residual:.3e})")


# ============================================================================
# HAMILTONIAN
# ============================================================================

def hamiltonian(F: SetValuedMap, x, v_star) -> float:
    """H_F(x, v*) = sup{<v, v*> : v in F(x)}; -inf when F(x) is empty"""
    x, v_star = _vec(F, x, "x"), _vec(F, v_star, "v_star")
    if isinstance(F, LinearControlMap):
        return float(F.A @ x @ v_star) + support(F.U, F.B.T @ v_star)
    sol = solve_lp(LinearProgram(-v_star, -F.E, F.d - F.A @ x))
    if sol.status == OPTIMAL:
        return -sol.value
    if sol.status == UNBOUNDED:
        return INF
    if sol.status == INFEASIBLE:
        return -INF
    raise RuntimeError(f"Hamiltonian LP ended with status {sol.status}")


def argmax_point(F: SetValuedMap, x, v_star):
    """One v in F(x) attaining H_F(x, v*)"""
    x, v_star = _vec(F, x, "x"), _vec(F, v_star, "v_star")
    if isinstance(F, LinearControlMap):
        u = support_point(F.U, F.B.T @ v_star)
        return F.A @ x + F.B @ u
    sol = solve_lp(LinearProgram(-v_star, -F.E, F.d - F.A @ x))
    if sol.status == UNBOUNDED:
        raise HamiltonianNotFinite(INF)
    if sol.status == INFEASIBLE:
        raise HamiltonianNotFinite(-INF)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"Argmax LP ended with status {sol.status}")
    return sol.z


def argmax_residual(F: SetValuedMap, x, v, v_star, tol=None) -> float:
    """H_F(x, v*) - <v, v*>; zero iff v is an argmax point"""
    _require_member(F, x, v, tol)
    v, v_star = _vec(F, v, "v"), _vec(F, v_star, "v_star")
    H = hamiltonian(F, x, v_star)
    if H == INF:
        return INF
    return max(H - float(v @ v_star), 0.0)


# ============================================================================
# M_F AND LOCALLY ADJOINT MAPPINGS
# ============================================================================

def _graph_program(F, x_star, v_star):
    """LP for inf <x, x*> - <v, v*> over gph F (controls replace v for linear maps)"""
    if isinstance(F, LinearControlMap):
        c = np.concatenate([x_star - F.A.T @ v_star, -F.B.T @ v_star])
        A_ub = np.hstack([np.zeros((F.U.m, F.n)), F.U.A])
        return LinearProgram(c, A_ub, F.U.d)
    return LinearProgram(np.concatenate([x_star, -v_star]), np.hstack([F.A, -F.E]), F.d)


def m_function(F: SetValuedMap, x_star, v_star) -> float:
    x_star, v_star = _vec(F, x_star, "x_star"), _vec(F, v_star, "v_star")
    sol = solve_lp(_graph_program(F, x_star, v_star))
    if sol.status == OPTIMAL:
        return sol.value
    if sol.status == UNBOUNDED:
        return -INF
    if sol.status == INFEASIBLE:
        return INF
    raise RuntimeError(f"M_F LP ended with status {sol.status}")


def m_function_closed_form(F: LinearControlMap, x_star, v_star, tol=None) -> float:
    """-W_U(Bᵀv*) when x* = Aᵀv*, else -inf"""
    tol = config.MEMBERSHIP_TOL if tol is None else tol
    x_star, v_star = _vec(F, x_star, "x_star"), _vec(F, v_star, "v_star")
    if np.max(np.abs(x_star - F.A.T @ v_star)) > tol:
        return -INF
    return -support(F.U, F.B.T @ v_star)


def lam_linear(F: LinearControlMap, v_star, x_tilde, v_tilde, tol=None) -> Optional[np.ndarray]:
    """Aᵀv* if ṽ - Ax̃ maximizes <Bu, v*> over U, otherwise None"""
    tol = config.MEMBERSHIP_TOL if tol is None else tol
    x_tilde, v_tilde = _vec(F, x_tilde, "x_tilde"), _vec(F, v_tilde, "v_tilde")
    v_star = _vec(F, v_star, "v_star")
    recover_control(F, x_tilde, v_tilde)
    if _max_principle_gap(F, v_star, x_tilde, v_tilde) > tol:
        return None
    return F.A.T @ v_star


def _max_principle_gap(F, v_star, x_tilde, v_tilde):
    return support(F.U, F.B.T @ v_star) - float((v_tilde - F.A @ x_tilde) @ v_star)


def lam_membership_via_hamiltonian(F: SetValuedMap, v_star, x_tilde, v_tilde, x_star, tol=None) -> bool:
    """H_F(x, v*) - H_F(x̃, v*) <= <x*, x - x̃> for all x, tested as one LP over gph F"""
    tol = config.MEMBERSHIP_TOL if tol is None else tol
    x_tilde, v_tilde = _vec(F, x_tilde, "x_tilde"), _vec(F, v_tilde, "v_tilde")
    v_star, x_star = _vec(F, v_star, "v_star"), _vec(F, x_star, "x_star")
    if argmax_residual(F, x_tilde, v_tilde, v_star) > tol:
        raise RejectedInput("ṽ is not an argmax point of <·, v*> over F(x̃)")
    best = ext_neg(m_function(F, x_star, v_star))
    at_tilde = float(v_tilde @ v_star) - float(x_tilde @ x_star)
    return best <= at_tilde + tol


@dataclass(frozen=True, eq=False)
class PolyhedralLAM:
    """F*(v*; (x̃, ṽ)) = {x* : x* = -A_Jᵀλ, -v* = E_Jᵀλ, λ >= 0} over active rows J"""

    v_star: np.ndarray
    cone: PolyhedralCone
    n: int

    def residual(self, x_star) -> float:
        x_star = as_vector(x_star, self.n, "x_star")
        return dual_cone_residual(self.cone, np.concatenate([x_star, -self.v_star]))

    def contains(self, x_star, tol=None) -> bool:
        tol = config.MEMBERSHIP_TOL if tol is None else tol
        return self.residual(x_star) <= tol

    def __contains__(self, x_star):
        return self.contains(x_star)


def lam_polyhedral_members(F: PolyhedralMap, v_star, x_tilde, v_tilde, tol=None,
                           active_tol=None) -> PolyhedralLAM:
    active_tol = config.ACTIVE_TOL if active_tol is None else active_tol
    x_tilde, v_tilde = _vec(F, x_tilde, "x_tilde"), _vec(F, v_tilde, "v_tilde")
    _require_member(F, x_tilde, v_tilde, tol)
    slack = F.d - F.A @ x_tilde + F.E @ v_tilde
    active = np.flatnonzero(slack <= active_tol)
    cone = PolyhedralCone(np.hstack([F.A[active], -F.E[active]]).reshape(len(active), 2 * F.n))
    return PolyhedralLAM(_vec(F, v_star, "v_star"), cone, F.n)


def lam_residual(F: SetValuedMap, v_star, x_tilde, v_tilde, x_star, tol=None) -> float:
    """Distance-like residual of x* in F*(v*; (x̃, ṽ)); zero on members"""
    if isinstance(F, LinearControlMap):
        x_tilde, v_tilde = _vec(F, x_tilde, "x_tilde"), _vec(F, v_tilde, "v_tilde")
        v_star, x_star = _vec(F, v_star, "v_star"), _vec(F, x_star, "x_star")
        recover_control(F, x_tilde, v_tilde, tol)
        mismatch = float(np.max(np.abs(x_star - F.A.T @ v_star)))
        return max(mismatch, _max_principle_gap(F, v_star, x_tilde, v_tilde), 0.0)
    return lam_polyhedral_members(F, v_star, x_tilde, v_tilde, tol).residual(x_star)
