"""
Linear Programming Core
=======================
Dense two-phase simplex with Bland's anti-cycling rule:
- minimize c·z subject to A_ub z <= b_ub, A_eq z = b_eq and per-variable bounds
- status classification (optimal / infeasible / unbounded / iteration_limit)
- dual multipliers and reduced costs for every solve
- KKT residual reports
- extended-real helpers for the +inf / -inf values produced by callers

Multiplier convention: the Lagrangian is c·z + y_ub·(A_ub z - b_ub) +
y_eq·(A_eq z - b_eq) with y_ub >= 0, so at an optimum
c + A_ubᵀ y_ub + A_eqᵀ y_eq = reduced costs (zero on free variables).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

import config

logger = logging.getLogger(__name__)

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'
ITERATION_LIMIT = 'iteration_limit'

INF = math.inf

_PIVOT_TOL = 1e-11


class RejectedInput(ValueError):
    """Input violates an operation's precondition"""


class DimensionError(RejectedInput):
    """Array shapes do not agree"""


class IndeterminateForm(ArithmeticError):
    """(+inf) + (-inf) was requested"""


# ============================================================================
# EXTENDED REALS
# ============================================================================

def ext_add(*terms):
    """Sum of extended reals; +inf and -inf together is rejected"""
    has_pos = any(t == INF for t in terms)
    has_neg = any(t == -INF for t in terms)
    if has_pos and has_neg:
        raise IndeterminateForm("(+inf) + (-inf) is undefined")
    if has_pos:
        return INF
    if has_neg:
        return -INF
    return float(sum(terms))


def ext_scale(alpha, value):
    """alpha * value for alpha >= 0, with 0 * (+-inf) = 0"""
    if alpha < 0:
        raise RejectedInput(f"Scale factor must be nonnegative, got {alpha}")
    if alpha == 0:
        return 0.0
    return float(alpha * value)


def ext_neg(value):
    return -float(value)


def is_finite(value):
    return not math.isinf(value)


def as_vector(values, size=None, name="vector"):
    """Coerce to a 1-d float array, checking length when size is given"""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {size}")
    return arr


def as_matrix(values, cols=None, name="matrix"):
    """Coerce to a 2-d float array; an empty input becomes a (0, cols) array"""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return np.zeros((0, cols if cols is not None else 0))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    return arr


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class LinearProgram:
    """minimize c·z s.t. A_ub z <= b_ub, A_eq z = b_eq, lo <= z <= hi"""

    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None

    def __post_init__(self):
        c = as_vector(self.c, name="c")
        n = c.shape[0]
        A_ub = as_matrix(self.A_ub if self.A_ub is not None else [], n, "A_ub")
        b_ub = as_vector(self.b_ub if self.b_ub is not None else [], A_ub.shape[0], "b_ub")
        A_eq = as_matrix(self.A_eq if self.A_eq is not None else [], n, "A_eq")
        b_eq = as_vector(self.b_eq if self.b_eq is not None else [], A_eq.shape[0], "b_eq")
        for name, arr in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq), ("b_eq", b_eq)):
            if not np.all(np.isfinite(arr)):
                raise RejectedInput(f"{name} contains non-finite entries")

        if self.bounds is None:
            bounds = tuple((None, None) for _ in range(n))
        else:
            if len(self.bounds) != n:
                raise DimensionError(f"bounds has {len(self.bounds)} entries, expected {n}")
            bounds = tuple((_finite_or_none(lo), _finite_or_none(hi)) for lo, hi in self.bounds)

        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'A_ub', A_ub)
        object.__setattr__(self, 'b_ub', b_ub)
        object.__setattr__(self, 'A_eq', A_eq)
        object.__setattr__(self, 'b_eq', b_eq)
        object.__setattr__(self, 'bounds', bounds)

    @property
    def n(self):
        return self.c.shape[0]

    @property
    def lower(self):
        return np.array([-INF if lo is None else lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([INF if hi is None else hi for _, hi in self.bounds])


def _finite_or_none(value):
    if value is None or math.isinf(value):
        return None
    return float(value)


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: str
    z: Optional[np.ndarray]
    value: float
    y_ub: Optional[np.ndarray] = None
    y_eq: Optional[np.ndarray] = None
    reduced: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


@dataclass(frozen=True)
class KKTReport:
    primal_feasibility: float
    dual_feasibility: float
    stationarity: float
    complementarity: float
    gap: float
    tol: float

    @property
    def passed(self):
        return max(self.primal_feasibility, self.dual_feasibility, self.stationarity,
                   self.complementarity, self.gap) <= self.tol

    def as_dict(self):
        return {
            'primal_feasibility': self.primal_feasibility,
            'dual_feasibility': self.dual_feasibility,
            'stationarity': self.stationarity,
            'complementarity': self.complementarity,
            'gap': self.gap,
            'passed': self.passed,
        }


# ============================================================================
# STANDARD FORM
# ============================================================================

class _StandardForm:
    """min ĉ·w s.t. M w = r, w >= 0, with z = z0 + T w"""

    def __init__(self, lp):
        n = lp.n
        z0 = np.zeros(n)
        columns = []
        upper_rows = []
        for j, (lo, hi) in enumerate(lp.bounds):
            if lo is not None:
                z0[j] = lo
                columns.append((j, 1.0))
                if hi is not None:
                    upper_rows.append((len(columns) - 1, hi - lo))
            elif hi is not None:
                z0[j] = hi
                columns.append((j, -1.0))
            else:
                columns.append((j, 1.0))
                columns.append((j, -1.0))

        nw = len(columns)
        T = np.zeros((n, nw))
        for col, (j, sign) in enumerate(columns):
            T[j, col] = sign

        m_ub, m_bd, m_eq = lp.A_ub.shape[0], len(upper_rows), lp.A_eq.shape[0]
        n_slack = m_ub + m_bd
        m = n_slack + m_eq

        M = np.zeros((m, nw + n_slack))
        r = np.zeros(m)
        M[:m_ub, :nw] = lp.A_ub @ T
        r[:m_ub] = lp.b_ub - lp.A_ub @ z0
        for k, (col, width) in enumerate(upper_rows):
            M[m_ub + k, col] = 1.0
            r[m_ub + k] = width
        M[n_slack:, :nw] = lp.A_eq @ T
        r[n_slack:] = lp.b_eq - lp.A_eq @ z0
        M[:n_slack, nw:] = np.eye(n_slack)

        sign = np.where(r < 0, -1.0, 1.0)
        self.M = M * sign[:, None]
        self.r = r * sign
        self.sign = sign
        self.cost = np.concatenate([T.T @ lp.c, np.zeros(n_slack)])
        self.offset = float(lp.c @ z0)
        self.T = T
        self.z0 = z0
        self.nw = nw
        self.m_ub = m_ub
        self.n_slack = n_slack
        self.m = m


# ============================================================================
# SIMPLEX
# ============================================================================

def _pivot(tab, row, col):
    tab[row] /= tab[row, col]
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])


def _iterate(tab, basis, n_cols, opt_tol, budget):
    """Bland's rule iterations on a tableau whose last row holds reduced costs.

    Returns (status, pivots).
    """
    m = len(basis)
    pivots = 0
    while True:
        candidates = np.flatnonzero(tab[-1, :n_cols] < -opt_tol)
        if candidates.size == 0:
            return OPTIMAL, pivots
        if pivots >= budget:
            return ITERATION_LIMIT, pivots
        entering = int(candidates[0])
        column = tab[:m, entering]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            return UNBOUNDED, pivots
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        leaving = int(min(tied, key=lambda i: basis[i]))
        _pivot(tab, leaving, entering)
        basis[leaving] = entering
        pivots += 1


def _basic_solution(B, rhs, cost_basic):
    try:
        return np.linalg.solve(B, rhs), np.linalg.solve(B.T, cost_basic)
    except np.linalg.LinAlgError:
        return (np.linalg.lstsq(B, rhs, rcond=None)[0],
                np.linalg.lstsq(B.T, cost_basic, rcond=None)[0])


def solve_lp(lp: LinearProgram, tol: Optional[float] = None, max_iter: Optional[int] = None) -> LPSolution:
    """Solve lp; infeasible/unbounded are reported through the status field"""
    tol = config.LP_TOL if tol is None else tol
    max_iter = config.MAX_ITER if max_iter is None else max_iter
    sf = _StandardForm(lp)
    m, n_cols = sf.m, sf.M.shape[1]
    opt_tol = 0.1 * tol

    # Phase 1: slack columns start basic where the row was not negated
    basis = []
    art_rows = []
    for i in range(m):
        if i < sf.n_slack and sf.sign[i] > 0:
            basis.append(sf.nw + i)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    tab = np.zeros((m + 1, n_cols + n_art + 1))
    tab[:m, :n_cols] = sf.M
    tab[:m, -1] = sf.r
    for k, i in enumerate(art_rows):
        tab[i, n_cols + k] = 1.0
        basis[i] = n_cols + k
        tab[-1] -= tab[i]
    tab[-1, n_cols:n_cols + n_art] = 0.0

    status, pivots = _iterate(tab, basis, n_cols + n_art, opt_tol, max_iter)
    if status == ITERATION_LIMIT:
        logger.warning(f"Simplex phase 1 hit the pivot limit ({max_iter})")
        return LPSolution(ITERATION_LIMIT, None, math.nan, iterations=pivots)
    infeasibility = -tab[-1, -1]
    if infeasibility > tol * (1.0 + float(np.abs(sf.r).max(initial=0.0))):
        logger.debug(f"LP infeasible (phase 1 value {infeasibility:.3e})")
        return LPSolution(INFEASIBLE, None, INF, iterations=pivots)

    # Drive artificials out of the basis; rows where that fails are redundant
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n_cols:
            entries = np.abs(tab[i, :n_cols])
            col = int(np.argmax(entries)) if n_cols else 0
            if n_cols and entries[col] > 1e-9:
                _pivot(tab, i, col)
                basis[i] = col
            else:
                keep[i] = False
    rows_kept = np.flatnonzero(keep)
    basis = [basis[i] for i in rows_kept]
    tab = np.vstack([tab[rows_kept][:, list(range(n_cols)) + [-1]], np.zeros((1, n_cols + 1))])

    # Phase 2
    tab[-1, :n_cols] = sf.cost
    for i, b in enumerate(basis):
        tab[-1] -= sf.cost[b] * tab[i]
    status, more = _iterate(tab, basis, n_cols, opt_tol, max_iter - pivots)
    pivots += more
    if status == ITERATION_LIMIT:
        logger.warning(f"Simplex phase 2 hit the pivot limit ({max_iter})")
        return LPSolution(ITERATION_LIMIT, None, math.nan, iterations=pivots)
    if status == UNBOUNDED:
        logger.debug(f"LP unbounded after {pivots} pivots")
        return LPSolution(UNBOUNDED, None, -INF, iterations=pivots)

    # Recompute basic values and duals from the original data
    B = sf.M[rows_kept][:, basis]
    if not basis:
        w_basic, pi_kept = np.zeros(0), np.zeros(0)
    else:
        w_basic, pi_kept = _basic_solution(B, sf.r[rows_kept], sf.cost[basis])
    w = np.zeros(n_cols)
    w[basis] = np.maximum(w_basic, 0.0)
    pi = np.zeros(m)
    pi[rows_kept] = pi_kept
    pi *= sf.sign

    z = sf.z0 + sf.T @ w[:sf.nw]
    y_ub = np.maximum(-pi[:sf.m_ub], 0.0)
    y_eq = -pi[sf.n_slack:]
    reduced = lp.c + lp.A_ub.T @ y_ub + lp.A_eq.T @ y_eq
    value = float(lp.c @ z)
    logger.debug(f"LP optimal: value={value:.10g}, pivots={pivots}, size={m}x{n_cols}")
    return LPSolution(OPTIMAL, z, value, y_ub, y_eq, reduced, pivots)


# ============================================================================
# CERTIFICATES
# ============================================================================

def dual_objective(lp: LinearProgram, sol: LPSolution) -> float:
    """Dual value certified by the multipliers of an optimal solution"""
    if not sol.optimal:
        raise RejectedInput(f"Dual objective needs an optimal solution, status is {sol.status}")
    value = -float(lp.b_ub @ sol.y_ub) - float(lp.b_eq @ sol.y_eq)
    for j, (lo, hi) in enumerate(lp.bounds):
        r = sol.reduced[j]
        if r > 0 and lo is not None:
            value += lo * r
        elif r < 0 and hi is not None:
            value += hi * r
    return value


def check_kkt(lp: LinearProgram, sol: LPSolution, tol: Optional[float] = None) -> KKTReport:
    """Max residual per KKT block of (lp, sol); pass iff every block <= tol"""
    tol = config.LP_TOL if tol is None else tol
    if not sol.optimal:
        raise RejectedInput(f"KKT check needs an optimal solution, status is {sol.status}")
    z = as_vector(sol.z, lp.n, "z")
    lo, hi = lp.lower, lp.upper

    slack_ub = lp.A_ub @ z - lp.b_ub
    primal = max(
        float(np.max(slack_ub, initial=0.0)),
        float(np.max(np.abs(lp.A_eq @ z - lp.b_eq), initial=0.0)),
        float(np.max(lo - z, initial=0.0)),
        float(np.max(z - hi, initial=0.0)),
    )
    dual = float(np.max(-sol.y_ub, initial=0.0))

    reduced = lp.c + lp.A_ub.T @ sol.y_ub + lp.A_eq.T @ sol.y_eq
    stationarity = 0.0
    complementarity = float(np.max(np.abs(sol.y_ub * slack_ub), initial=0.0))
    for j in range(lp.n):
        r = reduced[j]
        if r > 0:
            if np.isfinite(lo[j]):
                complementarity = max(complementarity, abs(r * (z[j] - lo[j])))
            else:
                stationarity = max(stationarity, r)
        elif r < 0:
            if np.isfinite(hi[j]):
                complementarity = max(complementarity, abs(r * (hi[j] - z[j])))
            else:
                stationarity = max(stationarity, -r)

    primal_value = float(lp.c @ z)
    dual_value = -float(lp.b_ub @ sol.y_ub) - float(lp.b_eq @ sol.y_eq)
    for j in range(lp.n):
        r = reduced[j]
        if r > 0 and np.isfinite(lo[j]):
            dual_value += lo[j] * r
        elif r < 0 and np.isfinite(hi[j]):
            dual_value += hi[j] * r
    gap = abs(primal_value - dual_value)

    return KKTReport(primal, dual, stationarity, complementarity, gap, tol)
