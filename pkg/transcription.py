"""
Transcription
=============
Uniform-grid discretization of the k-th order Mayer problem

    minimize f(x(0), x(T))  s.t.  x^(k) ∈ F(x),  (x^(j)(0), x^(j)(T)) ∈ S,  x(t) ∈ X(t)

into one LinearProgram, plus the discrete dual functional J*:
- assemble_primal_lp / solve_primal
- extract_dual_certificate (LP multipliers -> x*, v*, μ*, λ)
- evaluate_dual_functional (scores any candidate certificate)
- specialize_dual for the third-order linear-control and fourth-order
  polyhedral problems

Grid conventions:
- v_i = (Δᵏx)_i / hᵏ for i in I = {0, ..., N-k}
- the adjoint value paired with v_i is x*_{i+k}; the adjoint k-th derivative
  at node i is the forward stencil (-1)ᵏ(Δᵏx*)_i / hᵏ
- x*_0 .. x*_{k-1} extend the adjoint grid so the Euler-Lagrange relation
  also holds at nodes 0 .. k-1
- endpoint derivatives: forward differences at t=0, mirrored backward
  differences at t=T
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from convex_functions import MaxAffine, conjugate_eval, evaluate
from convex_geometry import Polytope, support
from lp_core import (INF, LinearProgram, LPSolution, RejectedInput, DimensionError,
                     as_vector, ext_add, ext_neg, solve_lp)
from setvalued_maps import (LinearControlMap, PolyhedralMap, SetValuedMap, inclusion_residual,
                            m_function)

logger = logging.getLogger(__name__)


class PrimalNotOptimal(RuntimeError):
    """The transcribed LP did not reach an optimum"""

    def __init__(self, status, message=None):
        self.status = status
        super().__init__(message or f"Primal LP status: {status}")


# ============================================================================
# DIFFERENCE OPERATORS
# ============================================================================

def _stencil(j):
    """Coefficients (-1)^(j-s) C(j, s), s = 0..j"""
    return np.array([(-1) ** (j - s) * math.comb(j, s) for s in range(j + 1)], dtype=float)


@dataclass(frozen=True)
class DifferenceOperator:
    """Dense forward-difference matrix of order j on a grid of `size` nodes, scaled by h^-j"""

    order: int
    size: int
    h: float

    def __post_init__(self):
        if self.order < 0:
            raise RejectedInput(f"Difference order must be nonnegative, got {self.order}")
        if self.size <= self.order:
            raise RejectedInput(f"Grid of {self.size} nodes is too short for order {self.order}")
        if not self.h > 0:
            raise RejectedInput(f"Step must be positive, got {self.h}")

    @property
    def matrix(self):
        rows = self.size - self.order
        D = np.zeros((rows, self.size))
        coeffs = _stencil(self.order) / self.h ** self.order
        for i in range(rows):
            D[i, i:i + self.order + 1] = coeffs
        return D

    def apply(self, grid):
        return self.matrix @ np.asarray(grid, dtype=float)


def _grid(x_grid, name="grid"):
    arr = np.asarray(x_grid, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a list of vectors, got shape {arr.shape}")
    return arr


def forward_diff(x_grid, j, h):
    """Entry i is Σ_s (-1)^(j-s) C(j,s) x_{i+s} / hʲ"""
    arr = np.asarray(x_grid, dtype=float)
    out = DifferenceOperator(j, arr.shape[0], h).apply(arr)
    return out


def endpoint_stencils(N, k, h):
    """Scalar rows (P0[j], PT[j]) with δ₀ʲ = P0[j] @ x and δ_Tʲ = PT[j] @ x"""
    P0 = np.zeros((k, N + 1))
    PT = np.zeros((k, N + 1))
    for j in range(k):
        coeffs = _stencil(j) / h ** j
        P0[j, :j + 1] = coeffs
        # backward difference at N: Σ_s (-1)^s C(j,s) x_{N-s}
        for s in range(j + 1):
            PT[j, N - s] = (-1) ** s * math.comb(j, s) / h ** j
    return P0, PT


def endpoint_derivatives(x_grid, k, h) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Pairs (δ₀ʲ, δ_Tʲ) for j = 0..k-1"""
    arr = _grid(x_grid)
    if arr.shape[0] < k + 1:
        raise RejectedInput(f"Grid of {arr.shape[0]} nodes is too short for order {k}")
    P0, PT = endpoint_stencils(arr.shape[0] - 1, k, h)
    return [(P0[j] @ arr, PT[j] @ arr) for j in range(k)]


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class ProblemSpec:
    k: int
    T: float
    N: int
    F: SetValuedMap
    f: MaxAffine
    S: Polytope
    X: Sequence[Polytope]

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise RejectedInput(f"Derivative order k must be a natural number, got {self.k}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise RejectedInput(f"Horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < self.k:
            raise RejectedInput(f"Grid intervals N must satisfy N >= k = {self.k}, got {self.N}")
        n = self.F.n
        X = [self.X] if isinstance(self.X, Polytope) else list(self.X)
        if len(X) == 1:
            X = X * (self.N + 1)
        if len(X) != self.N + 1:
            raise DimensionError(f"X has {len(X)} node sets, expected {self.N + 1}")
        if self.f.dim != 2 * n:
            raise DimensionError(f"f lives in R^{self.f.dim}, expected R^{2 * n}")
        if self.S.dim != 2 * n:
            raise DimensionError(f"S lives in R^{self.S.dim}, expected R^{2 * n}")
        for i, Xi in enumerate(X):
            if Xi.dim != n:
                raise DimensionError(f"X[{i}] lives in R^{Xi.dim}, expected R^{n}")
        if self.S.is_empty:
            raise RejectedInput("Endpoint set S is empty")
        for i, Xi in enumerate(X):
            if Xi.is_empty:
                raise RejectedInput(f"State set X[{i}] is empty")
        object.__setattr__(self, 'k', int(self.k))
        object.__setattr__(self, 'N', int(self.N))
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'X', tuple(X))
        if self.N < 2 * self.k - 1:
            logger.warning(f"N={self.N} < 2k-1={2 * self.k - 1}: endpoint adjoint derivatives are not "
                           f"unique, J* uses the representation with the largest boundary value")

    @property
    def h(self):
        return self.T / self.N

    @property
    def n(self):
        return self.F.n

    @property
    def n_velocities(self):
        return self.N - self.k + 1

    @property
    def polyhedral(self):
        return isinstance(self.F, PolyhedralMap)


@dataclass(frozen=True, eq=False)
class DiscreteTrajectory:
    x: np.ndarray
    v: np.ndarray
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, 'x', _grid(self.x, "x"))
        object.__setattr__(self, 'v', _grid(self.v, "v"))
        if self.u is not None:
            object.__setattr__(self, 'u', _grid(self.u, "u"))

    def check_shape(self, spec):
        if self.x.shape != (spec.N + 1, spec.n):
            raise DimensionError(f"x grid has shape {self.x.shape}, expected {(spec.N + 1, spec.n)}")
        if self.v.shape != (spec.n_velocities, spec.n):
            raise DimensionError(f"v grid has shape {self.v.shape}, expected {(spec.n_velocities, spec.n)}")

    @property
    def endpoints(self):
        return np.concatenate([self.x[0], self.x[-1]])


@dataclass(frozen=True, eq=False)
class DualCertificate:
    x_star: np.ndarray
    v_star: np.ndarray
    mu0: np.ndarray
    muT: np.ndarray
    lam: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, 'x_star', _grid(self.x_star, "x_star"))
        object.__setattr__(self, 'v_star', _grid(self.v_star, "v_star"))
        object.__setattr__(self, 'mu0', as_vector(self.mu0, name="mu0"))
        object.__setattr__(self, 'muT', as_vector(self.muT, name="muT"))
        if self.lam is not None:
            # sign is reported by the nonnegativity condition
            object.__setattr__(self, 'lam', _grid(self.lam, "lambda"))

    def check_shape(self, spec):
        shape = (spec.N + 1, spec.n)
        if self.x_star.shape != shape:
            raise DimensionError(f"x_star grid has shape {self.x_star.shape}, expected {shape}")
        if self.v_star.shape != shape:
            raise DimensionError(f"v_star grid has shape {self.v_star.shape}, expected {shape}")
        if self.mu0.shape != (spec.n,) or self.muT.shape != (spec.n,):
            raise DimensionError(f"mu0/muT must have length {spec.n}")
        if self.lam is not None and spec.polyhedral and self.lam.shape != (spec.n_velocities, spec.F.m):
            raise DimensionError(f"lambda grid has shape {self.lam.shape}, "
                                 f"expected {(spec.n_velocities, spec.F.m)}")

    @property
    def mu(self):
        return np.concatenate([self.mu0, self.muT])

    @classmethod
    def zeros(cls, spec):
        shape = (spec.N + 1, spec.n)
        lam = np.zeros((spec.n_velocities, spec.F.m)) if spec.polyhedral else None
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(spec.n), np.zeros(spec.n), lam)


# ============================================================================
# PRIMAL LP
# ============================================================================

@dataclass
class IndexMap:
    """Variable and row layout of the assembled LP"""

    n: int
    N: int
    k: int
    x: slice
    v: slice
    u: Optional[slice]
    tau: int
    n_vars: int
    # inequality row blocks
    f_rows: slice = None
    graph_rows: Optional[slice] = None
    control_rows: Optional[slice] = None
    s_rows: List[slice] = field(default_factory=list)
    x_rows: List[slice] = field(default_factory=list)
    # equality row blocks
    diff_rows: slice = None
    link_rows: Optional[slice] = None

    def x_col(self, m):
        return self.x.start + m * self.n

    def v_col(self, i):
        return self.v.start + i * self.n


def _layout(spec):
    n, N, k = spec.n, spec.N, spec.k
    nv = spec.n_velocities
    x = slice(0, (N + 1) * n)
    v = slice(x.stop, x.stop + nv * n)
    end = v.stop
    u = None
    if isinstance(spec.F, LinearControlMap):
        u = slice(end, end + nv * spec.F.r)
        end = u.stop
    return IndexMap(n=n, N=N, k=k, x=x, v=v, u=u, tau=end, n_vars=end + 1)


def assemble_primal_lp(spec: ProblemSpec) -> Tuple[LinearProgram, IndexMap]:
    """Variables (x, v, [u], τ); minimize τ"""
    n, N, k, h = spec.n, spec.N, spec.k, spec.h
    nv = spec.n_velocities
    idx = _layout(spec)
    nz = idx.n_vars
    ub_blocks, ub_rhs, eq_blocks, eq_rhs = [], [], [], []

    def ub(block, rhs):
        start = sum(b.shape[0] for b in ub_blocks)
        ub_blocks.append(block)
        ub_rhs.append(rhs)
        return slice(start, start + block.shape[0])

    def eq(block, rhs):
        start = sum(b.shape[0] for b in eq_blocks)
        eq_blocks.append(block)
        eq_rhs.append(rhs)
        return slice(start, start + block.shape[0])

    # (i) epigraph rows: <a0, x_0> + <aT, x_N> - τ <= -b
    G0, GT = spec.f.split(n)
    rows = np.zeros((G0.shape[0], nz))
    rows[:, idx.x_col(0):idx.x_col(0) + n] = G0
    rows[:, idx.x_col(N):idx.x_col(N) + n] = GT
    rows[:, idx.tau] = -1.0
    idx.f_rows = ub(rows, -spec.f.b)

    # (ii) derivative rows: (Δᵏx)_i - hᵏ v_i = 0
    stencil = _stencil(k)
    rows = np.zeros((nv * n, nz))
    for i in range(nv):
        for c in range(n):
            r = i * n + c
            for s in range(k + 1):
                rows[r, idx.x_col(i + s) + c] = stencil[s]
            rows[r, idx.v_col(i) + c] = -h ** k
    idx.diff_rows = eq(rows, np.zeros(nv * n))

    # (iii) graph rows
    F = spec.F
    if isinstance(F, PolyhedralMap):
        rows = np.zeros((nv * F.m, nz))
        for i in range(nv):
            r = slice(i * F.m, (i + 1) * F.m)
            rows[r, idx.x_col(i):idx.x_col(i) + n] = F.A
            rows[r, idx.v_col(i):idx.v_col(i) + n] = -F.E
        idx.graph_rows = ub(rows, np.tile(F.d, nv))
    else:
        r_dim = F.r
        link = np.zeros((nv * n, nz))
        control = np.zeros((nv * F.U.m, nz))
        for i in range(nv):
            r = slice(i * n, (i + 1) * n)
            u0 = idx.u.start + i * r_dim
            link[r, idx.v_col(i):idx.v_col(i) + n] = np.eye(n)
            link[r, idx.x_col(i):idx.x_col(i) + n] = -F.A
            link[r, u0:u0 + r_dim] = -F.B
            control[i * F.U.m:(i + 1) * F.U.m, u0:u0 + r_dim] = F.U.A
        idx.link_rows = eq(link, np.zeros(nv * n))
        idx.control_rows = ub(control, np.tile(F.U.d, nv))

    # (iv) endpoint rows, order j scaled by hʲ
    P0, PT = endpoint_stencils(N, k, h)
    S0, ST = spec.S.A[:, :n], spec.S.A[:, n:]
    for j in range(k):
        rows = np.zeros((spec.S.m, nz))
        rows[:, idx.x] = (np.kron(P0[j:j + 1], S0) + np.kron(PT[j:j + 1], ST)) * h ** j
        idx.s_rows.append(ub(rows, spec.S.d * h ** j))

    # (v) state rows on every node
    for m, Xm in enumerate(spec.X):
        rows = np.zeros((Xm.m, nz))
        rows[:, idx.x_col(m):idx.x_col(m) + n] = Xm.A
        idx.x_rows.append(ub(rows, Xm.d))

    c = np.zeros(nz)
    c[idx.tau] = 1.0
    A_ub = np.vstack(ub_blocks) if ub_blocks else np.zeros((0, nz))
    A_eq = np.vstack(eq_blocks)
    lp = LinearProgram(c, A_ub, np.concatenate(ub_rhs), A_eq, np.concatenate(eq_rhs))
    logger.debug(f"Assembled LP: {nz} variables, {A_ub.shape[0]} inequalities, {A_eq.shape[0]} equalities")
    return lp, idx


def solve_primal(spec: ProblemSpec) -> Tuple[DiscreteTrajectory, float, LPSolution]:
    lp, idx = assemble_primal_lp(spec)
    sol = solve_lp(lp)
    if not sol.optimal:
        logger.warning(f"Primal LP not optimal: {sol.status}")
        raise PrimalNotOptimal(sol.status)
    n, nv = spec.n, spec.n_velocities
    x = sol.z[idx.x].reshape(spec.N + 1, n)
    v = sol.z[idx.v].reshape(nv, n)
    u = sol.z[idx.u].reshape(nv, spec.F.r) if idx.u is not None else None
    traj = DiscreteTrajectory(x, v, u)
    value = evaluate(spec.f, traj.endpoints)
    logger.info(f"Primal solved: value={value:.10g} (k={spec.k}, N={spec.N}, {sol.iterations} pivots)")
    return traj, value, sol


def trajectory_residuals(spec: ProblemSpec, traj: DiscreteTrajectory) -> Dict[str, float]:
    """Feasibility residuals of a trajectory: inclusion, derivative, state and endpoint rows"""
    traj.check_shape(spec)
    k, h = spec.k, spec.h
    derivative = float(np.max(np.abs(forward_diff(traj.x, k, h) - traj.v), initial=0.0))
    inclusion = max((inclusion_residual(spec.F, traj.x[i], traj.v[i])
                     for i in range(spec.n_velocities)), default=0.0)
    state = max((float(np.max(Xm.A @ traj.x[m] - Xm.d, initial=0.0)) for m, Xm in enumerate(spec.X)),
                default=0.0)
    endpoint = max(float(np.max(spec.S.A @ np.concatenate(pair) - spec.S.d, initial=0.0))
                   for pair in endpoint_derivatives(traj.x, k, h))
    return {'derivative': derivative, 'inclusion': inclusion, 'state': state, 'endpoint': endpoint}


# ============================================================================
# DUAL CERTIFICATES
# ============================================================================

def adjoint_kth_derivative(spec: ProblemSpec, x_star):
    """(-1)ᵏ(Δᵏx*)_i / hᵏ for i in I"""
    return (-1) ** spec.k * forward_diff(x_star, spec.k, spec.h)


def adjoint_residual_terms(spec: ProblemSpec, cert: DualCertificate):
    """a_i = (-1)ᵏ(Δᵏx*)_i/hᵏ - v*_i, the first M_F argument at node i"""
    return adjoint_kth_derivative(spec, cert.x_star) - cert.v_star[:spec.n_velocities]


def _extend_adjoint(spec, x_star, v_star, targets):
    """Fill x*_0..x*_{k-1} backwards so that a_m equals targets[m]"""
    k, h = spec.k, spec.h
    stencil = _stencil(k)
    for m in range(k - 1, -1, -1):
        if m >= spec.n_velocities:
            x_star[m] = 0.0
            continue
        # (Δᵏx*)_m = Σ_s stencil[s] x*_{m+s}; stencil[0] = (-1)ᵏ
        wanted = (-1) ** k * h ** k * (targets[m] + v_star[m])
        rest = sum(stencil[s] * x_star[m + s] for s in range(1, k + 1))
        x_star[m] = (wanted - rest) / stencil[0]
    return x_star


def extract_dual_certificate(spec: ProblemSpec, lp_solution: LPSolution) -> DualCertificate:
    if not lp_solution.optimal:
        raise RejectedInput(f"Certificate extraction needs an optimal LP, status is {lp_solution.status}")
    _, idx = assemble_primal_lp(spec)
    n, N, k, h = spec.n, spec.N, spec.k, spec.h
    nv = spec.n_velocities
    y_ub, y_eq = lp_solution.y_ub, lp_solution.y_eq

    x_star = np.zeros((N + 1, n))
    x_star[k:] = (y_eq[idx.diff_rows] * h ** (k - 1)).reshape(nv, n)

    v_star = np.zeros((N + 1, n))
    for m, Xm in enumerate(spec.X):
        kappa = y_ub[idx.x_rows[m]] / h
        v_star[m] = -Xm.A.T @ kappa

    S_A = spec.S.A
    mu = -S_A.T @ y_ub[idx.s_rows[0]]

    lam = None
    F = spec.F
    if isinstance(F, PolyhedralMap):
        lam = np.maximum(y_ub[idx.graph_rows].reshape(nv, F.m) / h, 0.0)
        targets = -lam @ F.A
    else:
        targets = x_star[k:] @ F.A
    x_star = _extend_adjoint(spec, x_star, v_star, targets)

    cert = DualCertificate(x_star, v_star, mu[:n], mu[n:], lam)
    logger.debug(f"Extracted certificate: |x*|max={np.abs(x_star).max():.3e}, "
                 f"|mu|={np.abs(mu).max(initial=0.0):.3e}")
    return cert


def _boundary_coefficients(spec, cert):
    """Coefficients c_m with L(x) = Σ_m <x_m, c_m>"""
    k, h = spec.k, spec.h
    nv = spec.n_velocities
    D = DifferenceOperator(k, spec.N + 1, h).matrix
    a = adjoint_residual_terms(spec, cert)
    coeff = h * D.T @ cert.x_star[k:]
    coeff[:nv] -= h * a
    coeff -= h * cert.v_star
    return coeff


def _null_space(M, rtol=1e-10):
    _, s, Vt = np.linalg.svd(M)
    rank = int(np.sum(s > rtol * s.max(initial=0.0)))
    return Vt[rank:].T


def _best_representation(spec, cert, Z, null):
    """Shift Z along null(Pᵀ) to maximize -f*(μ - ζ_0) - Σ_{j>=1} W_S(-ζ_j)

    LP over (T, w, η_1..η_{k-1}) with ζ = Z + null @ T, Gᵀw = μ - ζ_0 on the
    simplex and S_Aᵀη_j = -ζ_j, η_j >= 0. Z is returned unchanged when no
    representation lies in every effective domain.
    """
    n, k = spec.n, spec.k
    G, b = spec.f.G, spec.f.b
    S_A, S_d = spec.S.A, spec.S.d
    q, L, mS = null.shape[1], G.shape[0], S_A.shape[0]
    n_t = q * n
    n_vars = n_t + L + (k - 1) * mS
    mu = cert.mu

    rows, rhs = [], []
    for j in range(k):
        for side in (0, 1):
            z_row = side * k + j
            for c in range(n):
                row = np.zeros(n_vars)
                row[c:n_t:n] = null[z_row]
                col = side * n + c
                if j == 0:
                    row[n_t:n_t + L] = G[:, col]
                    rhs.append(mu[col] - Z[z_row, c])
                else:
                    start = n_t + L + (j - 1) * mS
                    row[start:start + mS] = S_A[:, col]
                    rhs.append(-Z[z_row, c])
                rows.append(row)
    simplex = np.zeros(n_vars)
    simplex[n_t:n_t + L] = 1.0
    rows.append(simplex)
    rhs.append(1.0)

    cost = np.concatenate([np.zeros(n_t), -b, np.tile(S_d, k - 1)])
    bounds = [(None, None)] * n_t + [(0.0, None)] * (n_vars - n_t)
    sol = solve_lp(LinearProgram(cost, A_eq=np.array(rows), b_eq=np.array(rhs), bounds=bounds))
    if not sol.optimal:
        logger.debug(f"No boundary representation inside the conjugate domains ({sol.status})")
        return Z
    return Z + null @ sol.z[:n_t].reshape(q, n)


def _boundary_decomposition(spec, cert):
    """ζ_j (j = 0..k-1) with L(x) = Σ_j <(δ₀ʲ(x), δ_Tʲ(x)), ζ_j>

    Unique when N >= 2k-1; on shorter grids the representation with the
    largest boundary part of J* is used.
    """
    k = spec.k
    P0, PT = endpoint_stencils(spec.N, k, spec.h)
    P = np.vstack([P0, PT])
    Z = np.linalg.lstsq(P.T, _boundary_coefficients(spec, cert), rcond=None)[0]
    null = _null_space(P.T)
    if null.shape[1]:
        Z = _best_representation(spec, cert, Z, null)
    return [(Z[j], Z[k + j]) for j in range(k)]


def adjoint_endpoint_derivatives(spec: ProblemSpec, cert: DualCertificate) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Pairs (δ*₀ʲ, δ*_Tʲ), j = 0..k-1, from ζ_{k-1-j} = ((-1)^(j+1) δ*₀ʲ, (-1)ʲ δ*_Tʲ)"""
    cert.check_shape(spec)
    zeta = _boundary_decomposition(spec, cert)
    k = spec.k
    out = []
    for j in range(k):
        z0, zT = zeta[k - 1 - j]
        out.append(((-1) ** (j + 1) * z0, (-1) ** j * zT))
    return out


def dual_identity_residual(spec: ProblemSpec, cert: DualCertificate, traj: DiscreteTrajectory) -> float:
    """|L(x) - Σ_j <P_j x, ζ_j>| for the trajectory's x grid"""
    cert.check_shape(spec)
    coeff = _boundary_coefficients(spec, cert)
    lhs = float(np.sum(coeff * traj.x))
    zeta = _boundary_decomposition(spec, cert)
    pairs = endpoint_derivatives(traj.x, spec.k, spec.h)
    rhs = sum(float(d0 @ z0 + dT @ zT) for (d0, dT), (z0, zT) in zip(pairs, zeta))
    return abs(lhs - rhs)


def transversality_point(spec: ProblemSpec, cert: DualCertificate, deltas=None):
    """ξ = ((-1)^(k-1) δ*₀^(k-1) + μ*0, μ*T + (-1)ᵏ δ*_T^(k-1)), the argument of f*"""
    k = spec.k
    deltas = adjoint_endpoint_derivatives(spec, cert) if deltas is None else deltas
    d0, dT = deltas[k - 1]
    return np.concatenate([(-1) ** (k - 1) * d0 + cert.mu0, cert.muT + (-1) ** k * dT])


def higher_endpoint_multipliers(spec: ProblemSpec, cert: DualCertificate, deltas=None):
    """((-1)ʲ δ*₀ʲ, (-1)^(j+1) δ*_Tʲ) for j = 0..k-2"""
    deltas = adjoint_endpoint_derivatives(spec, cert) if deltas is None else deltas
    return [np.concatenate([(-1) ** j * d0, (-1) ** (j + 1) * dT])
            for j, (d0, dT) in enumerate(deltas[:spec.k - 1])]


def map_nodes(fn, items):
    """fn over items, on a thread pool when DFI_WORKERS > 1"""
    if config.WORKERS > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.WORKERS) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def dual_terms(spec: ProblemSpec, cert: DualCertificate) -> Dict[str, float]:
    """The five J* terms, each with the sign it enters J* with"""
    cert.check_shape(spec)
    h, k = spec.h, spec.k
    deltas = adjoint_endpoint_derivatives(spec, cert)
    a = adjoint_residual_terms(spec, cert)

    m_values = map_nodes(lambda i: m_function(spec.F, a[i], cert.x_star[i + k]),
                          list(range(spec.n_velocities)))
    w_values = map_nodes(lambda m: support(spec.X[m], -cert.v_star[m]), list(range(spec.N + 1)))

    return {
        'conjugate': ext_neg(conjugate_eval(spec.f, transversality_point(spec, cert, deltas))),
        'hamiltonian': h * ext_add(*m_values),
        'state': -h * ext_add(*w_values),
        'endpoint': ext_neg(support(spec.S, -cert.mu)),
        'higher_endpoint': -ext_add(*(support(spec.S, w)
                                      for w in higher_endpoint_multipliers(spec, cert, deltas))),
    }


def _sum_terms(terms):
    # an infinite bad term makes J* = -inf
    values = list(terms.values())
    if any(t == -INF for t in values):
        return -INF
    return ext_add(*values)


def evaluate_dual_functional(spec: ProblemSpec, cert: DualCertificate) -> float:
    """Discrete J*(x*, v*, μ*); -inf for certificates outside every effective domain"""
    return _sum_terms(dual_terms(spec, cert))


# ============================================================================
# SPECIALIZED DUALS
# ============================================================================

@dataclass(frozen=True, eq=False)
class DualSpecialization:
    """Closed-form dual for one problem family"""

    name: str
    spec: ProblemSpec
    constraints: Tuple[str, ...]
    terms: Tuple[str, ...]

    def constraint_residual(self, cert: DualCertificate) -> float:
        spec = self.spec
        cert.check_shape(spec)
        k = spec.k
        a = adjoint_residual_terms(spec, cert)
        if isinstance(spec.F, LinearControlMap):
            return float(np.max(np.abs(a - cert.x_star[k:] @ spec.F.A)))
        if cert.lam is None:
            raise RejectedInput("Polyhedral dual needs lambda multipliers")
        F = spec.F
        adjoint = np.max(np.abs(cert.x_star[k:] + cert.lam @ F.E))
        euler = np.max(np.abs(a + cert.lam @ F.A))
        sign = np.max(-cert.lam, initial=0.0)
        return float(max(adjoint, euler, sign))

    def objective(self, cert: DualCertificate) -> float:
        spec = self.spec
        cert.check_shape(spec)
        k, h = spec.k, spec.h
        deltas = adjoint_endpoint_derivatives(spec, cert)
        if isinstance(spec.F, LinearControlMap):
            F = spec.F
            running = -h * sum(support(F.U, F.B.T @ cert.x_star[i + k]) for i in range(spec.n_velocities))
        else:
            running = -h * float(np.sum(cert.lam @ spec.F.d))
        terms = {
            'conjugate': ext_neg(conjugate_eval(spec.f, transversality_point(spec, cert, deltas))),
            'running': running,
            'state': -h * ext_add(*(support(spec.X[m], -cert.v_star[m]) for m in range(spec.N + 1))),
            'endpoint': ext_neg(support(spec.S, -cert.mu)),
            'higher_endpoint': -ext_add(*(support(spec.S, w)
                                          for w in higher_endpoint_multipliers(spec, cert, deltas))),
        }
        return _sum_terms(terms)

    def as_dict(self):
        return {'name': self.name, 'constraints': list(self.constraints), 'terms': list(self.terms)}


def specialize_dual(spec: ProblemSpec) -> DualSpecialization:
    if spec.k == 3 and isinstance(spec.F, LinearControlMap):
        return DualSpecialization(
            name="third-order linear-control dual",
            spec=spec,
            constraints=(
                "-(Δ³x*)_i/h³ - v*_i = Aᵀ x*_{i+3}",
            ),
            terms=(
                "-f*(δ*₀² + μ*0, μ*T - δ*_T²)",
                "-h Σ_i W_U(Bᵀ x*_{i+3})",
                "-h Σ_m W_X(-v*_m)",
                "-W_S(-μ*0, -μ*T)",
                "-Σ_{j=0,1} W_S((-1)ʲ δ*₀ʲ, (-1)^(j+1) δ*_Tʲ)",
            ),
        )
    if spec.k == 4 and isinstance(spec.F, PolyhedralMap):
        return DualSpecialization(
            name="fourth-order polyhedral dual",
            spec=spec,
            constraints=(
                "x*_{i+4} = -Eᵀ λ_i",
                "(Δ⁴x*)_i/h⁴ - v*_i = -Aᵀ λ_i",
                "λ_i >= 0",
            ),
            terms=(
                "-f*(-δ*₀³ + μ*0, μ*T + δ*_T³)",
                "-h Σ_i <d, λ_i>",
                "-h Σ_m W_X(-v*_m)",
                "-W_S(-μ*0, -μ*T)",
                "-Σ_{j=0,1,2} W_S((-1)ʲ δ*₀ʲ, (-1)^(j+1) δ*_Tʲ)",
            ),
        )
    raise RejectedInput(f"No specialized dual for k={spec.k} with {type(spec.F).__name__}")
