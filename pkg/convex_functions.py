"""
Convex Functions
================
Piecewise-affine convex functions g(x) = max_l (<a_l, x> + b_l):
- evaluation and conjugates g* (as LPs over the gradient simplex)
- subdifferential membership and its residual
- Young-Fenchel residual g(x) + g*(x*) - <x, x*>
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

import config
from lp_core import (INF, OPTIMAL, INFEASIBLE, LinearProgram, RejectedInput, DimensionError,
                     as_matrix, as_vector, ext_add, solve_lp)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MaxAffine:
    """max over rows of <G[l], x> + b[l]"""

    G: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim == 1:
            G = G.reshape(1, -1)
        if G.ndim != 2 or G.shape[0] == 0:
            raise RejectedInput("MaxAffine needs at least one affine row")
        b = as_vector(self.b, G.shape[0], "b")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(b))):
            raise RejectedInput("MaxAffine data must be finite")
        object.__setattr__(self, 'G', G)
        object.__setattr__(self, 'b', b)

    @classmethod
    def from_rows(cls, rows):
        """rows: iterable of (gradient, offset) pairs"""
        rows = list(rows)
        if not rows:
            raise RejectedInput("MaxAffine needs at least one affine row")
        return cls(np.array([np.asarray(a, dtype=float) for a, _ in rows]),
                   np.array([float(b) for _, b in rows]))

    @classmethod
    def linear(cls, c, offset=0.0):
        return cls(as_vector(c, name="c").reshape(1, -1), np.array([float(offset)]))

    @property
    def dim(self):
        return self.G.shape[1]

    @property
    def rows(self):
        return [(self.G[l].copy(), float(self.b[l])) for l in range(self.G.shape[0])]

    def split(self, n):
        """Gradient blocks (G0, GT) for a function of (x(0), x(T)) in R^{2n}"""
        if self.dim != 2 * n:
            raise DimensionError(f"Function lives in R^{self.dim}, expected R^{2 * n}")
        return self.G[:, :n], self.G[:, n:]

    def as_dict(self):
        return {'rows': [{'a': a.tolist(), 'b': b} for a, b in self.rows]}


def _point(g, x, name="x"):
    return as_vector(x, g.dim, name)


def evaluate(g: MaxAffine, x) -> float:
    x = _point(g, x)
    return float(np.max(g.G @ x + g.b))


def conjugate_eval(g: MaxAffine, x_star) -> float:
    """g*(x*) = min{-b·μ : Gᵀμ = x*, Σμ = 1, μ >= 0}; +inf outside conv(gradients)"""
    x_star = _point(g, x_star, "x_star")
    L = g.G.shape[0]
    A_eq = np.vstack([g.G.T, np.ones((1, L))])
    b_eq = np.concatenate([x_star, [1.0]])
    sol = solve_lp(LinearProgram(-g.b, A_eq=A_eq, b_eq=b_eq, bounds=[(0.0, None)] * L))
    if sol.status == INFEASIBLE:
        return INF
    if sol.status != OPTIMAL:
        raise RuntimeError(f"Conjugate LP ended with status {sol.status}")
    return sol.value


def biconjugate_eval(g: MaxAffine, x) -> float:
    """g**(x) = sup_{x*} <x, x*> - g*(x*), solved jointly over (x*, μ)"""
    x = _point(g, x)
    L, q = g.G.shape
    # variables (x*, μ): maximize <x, x*> + b·μ with x* = Gᵀμ
    c = -np.concatenate([x, g.b])
    A_eq = np.vstack([
        np.hstack([np.eye(q), -g.G.T]),
        np.hstack([np.zeros((1, q)), np.ones((1, L))]),
    ])
    b_eq = np.concatenate([np.zeros(q), [1.0]])
    bounds = [(None, None)] * q + [(0.0, None)] * L
    sol = solve_lp(LinearProgram(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds))
    if sol.status != OPTIMAL:
        raise RuntimeError(f"Biconjugate LP ended with status {sol.status}")
    return -sol.value


def active_rows(g: MaxAffine, x, active_tol=None):
    active_tol = config.ACTIVE_TOL if active_tol is None else active_tol
    values = g.G @ _point(g, x) + g.b
    return np.flatnonzero(values >= values.max() - active_tol)


def subdiff_residual(g: MaxAffine, x, y, active_tol=None) -> float:
    """Distance (inf-norm) from y to the hull of the active gradients at x"""
    y = _point(g, y, "y")
    G_act = g.G[active_rows(g, x, active_tol)]
    p, q = G_act.shape
    # variables (μ, t): min t s.t. |G_actᵀμ - y| <= t, Σμ = 1
    ones = np.ones((q, 1))
    A_ub = np.vstack([np.hstack([G_act.T, -ones]), np.hstack([-G_act.T, -ones])])
    b_ub = np.concatenate([y, -y])
    A_eq = np.concatenate([np.ones(p), [0.0]]).reshape(1, -1)
    c = np.zeros(p + 1)
    c[-1] = 1.0
    sol = solve_lp(LinearProgram(c, A_ub, b_ub, A_eq, [1.0], bounds=[(0.0, None)] * (p + 1)))
    if sol.status != OPTIMAL:
        raise RuntimeError(f"Subdifferential LP ended with status {sol.status}")
    return max(sol.value, 0.0)


def subdiff_contains(g: MaxAffine, x, y, tol=None) -> bool:
    tol = config.MEMBERSHIP_TOL if tol is None else tol
    return subdiff_residual(g, x, y) <= tol


def young_fenchel_residual(g: MaxAffine, x, x_star) -> float:
    """g(x) + g*(x*) - <x, x*>; nonnegative, zero iff x* is in ∂g(x)"""
    x = _point(g, x)
    x_star = _point(g, x_star, "x_star")
    return ext_add(evaluate(g, x), conjugate_eval(g, x_star), -float(x @ x_star))
