"""
Convex Geometry
===============
Polytopes {x : Ax <= d} and polyhedral cones {w : Cw <= 0}:
- support functions W_Q (extended-real valued)
- membership, active sets, tangent cones at a point
- dual-cone membership via the Farkas system w* = -Cᵀλ, λ >= 0

Dual-cone convention: K* = {w* : <w, w*> >= 0 for all w in K}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

import config
from lp_core import (INF, OPTIMAL, INFEASIBLE, UNBOUNDED, LinearProgram, RejectedInput,
                     DimensionError, as_matrix, as_vector, solve_lp)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Polytope:
    """{x in R^n : A x <= d}; zero rows means the whole space"""

    A: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2:
            raise DimensionError(f"Polytope matrix must be 2-d, got shape {A.shape}")
        d = as_vector(self.d, A.shape[0], "d") if A.shape[0] else np.zeros(0)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(d))):
            raise RejectedInput("Polytope data must be finite")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'd', d)

    @classmethod
    def whole_space(cls, n):
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def box(cls, lo, hi):
        lo, hi = as_vector(lo, name="lo"), as_vector(hi, name="hi")
        if lo.shape != hi.shape:
            raise DimensionError("Box bounds differ in length")
        n = lo.shape[0]
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    @classmethod
    def from_equalities(cls, C, e):
        """{x : Cx = e} written as two inequality blocks"""
        C = as_matrix(C, name="C")
        e = as_vector(e, C.shape[0], "e")
        return cls(np.vstack([C, -C]), np.concatenate([e, -e]))

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def intersect(self, other):
        if other.dim != self.dim:
            raise DimensionError(f"Cannot intersect polytopes in R^{self.dim} and R^{other.dim}")
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.d, other.d]))

    @cached_property
    def is_empty(self):
        if self.m == 0:
            return False
        sol = solve_lp(LinearProgram(np.zeros(self.dim), self.A, self.d))
        return sol.status == INFEASIBLE

    @cached_property
    def is_bounded(self):
        if self.is_empty:
            return True
        return all(np.isfinite(support(self, s * e))
                   for e in np.eye(self.dim) for s in (1.0, -1.0))

    def as_dict(self):
        return {'A': self.A.tolist(), 'd': self.d.tolist()}


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    """{w : C w <= 0}"""

    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2:
            raise DimensionError(f"Cone matrix must be 2-d, got shape {C.shape}")
        object.__setattr__(self, 'C', C)

    @classmethod
    def whole_space(cls, q):
        return cls(np.zeros((0, q)))

    @property
    def dim(self):
        return self.C.shape[1]


@dataclass(frozen=True, eq=False)
class ActiveSet:
    indices: Tuple[int, ...]
    slack: np.ndarray


# ============================================================================
# OPERATIONS
# ============================================================================

def _check_dim(Q, x, name="x"):
    return as_vector(x, Q.dim, name)


def support(Q: Polytope, x_star) -> float:
    """W_Q(x*) = sup <x, x*> over Q; +inf if unbounded, -inf if Q is empty"""
    x_star = _check_dim(Q, x_star, "x_star")
    sol = solve_lp(LinearProgram(-x_star, Q.A, Q.d))
    if sol.status == OPTIMAL:
        return -sol.value
    if sol.status == UNBOUNDED:
        return INF
    if sol.status == INFEASIBLE:
        return -INF
    raise RuntimeError(f"Support LP ended with status {sol.status}")


def support_point(Q: Polytope, x_star):
    """A maximizer of <x, x*> over Q, or None when the sup is not attained"""
    x_star = _check_dim(Q, x_star, "x_star")
    sol = solve_lp(LinearProgram(-x_star, Q.A, Q.d))
    return sol.z if sol.status == OPTIMAL else None


def contains(Q: Polytope, x, tol=None) -> bool:
    tol = config.ACTIVE_TOL if tol is None else tol
    x = _check_dim(Q, x)
    if Q.m == 0:
        return True
    return bool(np.max(Q.A @ x - Q.d) <= tol)


def violation(Q: Polytope, x) -> float:
    """max_i (A_i x - d_i), floored at zero"""
    x = _check_dim(Q, x)
    return float(np.max(Q.A @ x - Q.d, initial=0.0))


def active_set(Q: Polytope, x, active_tol=None) -> ActiveSet:
    active_tol = config.ACTIVE_TOL if active_tol is None else active_tol
    x = _check_dim(Q, x)
    slack = Q.d - Q.A @ x
    indices = tuple(int(i) for i in np.flatnonzero(np.abs(slack) <= active_tol))
    return ActiveSet(indices, slack)


def tangent_cone(Q: Polytope, x_tilde, active_tol=None) -> PolyhedralCone:
    """{x̄ : A_i x̄ <= 0 for active rows i}; weakly active rows are included"""
    active_tol = config.ACTIVE_TOL if active_tol is None else active_tol
    x_tilde = _check_dim(Q, x_tilde, "x_tilde")
    if not contains(Q, x_tilde, active_tol):
        raise RejectedInput(f"Point lies outside the polytope (violation {violation(Q, x_tilde):.3e})")
    active = active_set(Q, x_tilde, active_tol)
    return PolyhedralCone(Q.A[list(active.indices)] if active.indices else np.zeros((0, Q.dim)))


def dual_cone_residual(K: PolyhedralCone, w_star) -> float:
    """min over λ >= 0 of ||w* + Cᵀλ||_inf (zero iff w* is in K*)"""
    w_star = as_vector(w_star, K.dim, "w_star")
    p, q = K.C.shape
    if p == 0:
        return float(np.max(np.abs(w_star), initial=0.0))
    # variables (λ, t): min t s.t. -t <= w* + Cᵀλ <= t
    ones = np.ones((q, 1))
    A_ub = np.vstack([np.hstack([K.C.T, -ones]), np.hstack([-K.C.T, -ones])])
    b_ub = np.concatenate([-w_star, w_star])
    c = np.zeros(p + 1)
    c[-1] = 1.0
    sol = solve_lp(LinearProgram(c, A_ub, b_ub, bounds=[(0.0, None)] * (p + 1)))
    if sol.status != OPTIMAL:
        raise RuntimeError(f"Farkas LP ended with status {sol.status}")
    return max(sol.value, 0.0)


def dual_cone_membership(K: PolyhedralCone, w_star, tol=None) -> bool:
    tol = config.MEMBERSHIP_TOL if tol is None else tol
    return dual_cone_residual(K, w_star) <= tol


def normal_residual(Q: Polytope, x_tilde, w_star, active_tol=None) -> float:
    """Residual of w* in K*_Q(x̃), the dual of the tangent cone at x̃"""
    return dual_cone_residual(tangent_cone(Q, x_tilde, active_tol), w_star)
