import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir)))

import demos  # noqa: E402
from cli import parse_problem  # noqa: E402
from convex_functions import MaxAffine  # noqa: E402
from convex_geometry import Polytope  # noqa: E402
from setvalued_maps import LinearControlMap, PolyhedralMap  # noqa: E402
from transcription import (DiscreteTrajectory, DualCertificate, ProblemSpec,  # noqa: E402
                           extract_dual_certificate, solve_primal, transversality_point)


class Solved:
    """A demo instance together with its optimal trajectory and extracted certificate"""

    def __init__(self, doc):
        self.doc = doc
        self.spec = parse_problem(doc)
        self.traj, self.value, self.lp_solution = solve_primal(self.spec)
        self.cert = extract_dual_certificate(self.spec, self.lp_solution)


@pytest.fixture(scope="session")
def decay():
    return Solved(demos.decay())


@pytest.fixture(scope="session")
def ptl():
    return Solved(demos.ptl())


@pytest.fixture(scope="session")
def ptl_small():
    return Solved(demos.ptl(N=16))


@pytest.fixture(scope="session")
def pfc():
    return Solved(demos.pfc())


# ============================================================================
# RANDOM INSTANCES
# ============================================================================

def stencil(k):
    return np.array([(-1) ** (k - s) * math.comb(k, s) for s in range(k + 1)], dtype=float)


def random_instance(rng, kind, k, n, N, state_radius=20.0, endpoint_radius=10.0):
    """Spec with F(x) = Ãx + B·[-1,1]^r (linear) or Ãx + [-1,1]^n (polyhedral)"""
    A_tilde = 0.5 * rng.standard_normal((n, n))
    if kind == "linear":
        r = int(rng.integers(1, 3))
        F = LinearControlMap(A_tilde, rng.standard_normal((n, r)), Polytope.box(-np.ones(r), np.ones(r)))
    else:
        F = PolyhedralMap(np.vstack([-A_tilde, A_tilde]), np.vstack([-np.eye(n), np.eye(n)]), np.ones(2 * n))
    f = MaxAffine(rng.standard_normal((2, 2 * n)), rng.standard_normal(2))
    S = Polytope.box(np.concatenate([-np.ones(n), -endpoint_radius * np.ones(n)]),
                     np.concatenate([np.ones(n), endpoint_radius * np.ones(n)]))
    X = Polytope.box(-state_radius * np.ones(n), state_radius * np.ones(n))
    return ProblemSpec(k, 1.0, N, F, f, S, [X]), A_tilde


def random_trajectory(rng, spec, A_tilde):
    """Feasible trajectory from zero initial data with random admissible velocities"""
    n, k, h = spec.n, spec.k, spec.h
    nv = spec.n_velocities
    c = stencil(k)
    x = np.zeros((spec.N + 1, n))
    v = np.zeros((nv, n))
    u = None
    if isinstance(spec.F, LinearControlMap):
        u = rng.uniform(-1.0, 1.0, (nv, spec.F.r))
    for i in range(nv):
        if u is not None:
            v[i] = spec.F.A @ x[i] + spec.F.B @ u[i]
        else:
            v[i] = A_tilde @ x[i] + rng.uniform(-1.0, 1.0, n)
        x[i + k] = h ** k * v[i] - sum(c[s] * x[i + s] for s in range(k))
    return DiscreteTrajectory(x, v, u)


def random_certificate(rng, spec, A_tilde, scale=1.0):
    """Adjoint satisfying (-1)ᵏ(Δᵏx*)_i/hᵏ - v*_i = Ãᵀx*_{i+k}, built backwards from a constant terminal block"""
    n, k, h, N = spec.n, spec.k, spec.h, spec.N
    c = stencil(k)
    x_star = np.zeros((N + 1, n))
    x_star[N - k + 1:] = scale * rng.standard_normal(n)
    v_star = 0.1 * scale * rng.standard_normal((N + 1, n))
    for i in range(N - k, -1, -1):
        wanted = (-1) ** k * h ** k * (A_tilde.T @ x_star[i + k] + v_star[i])
        x_star[i] = (wanted - sum(c[s] * x_star[i + s] for s in range(1, k + 1))) / c[0]
    lam = None
    if isinstance(spec.F, PolyhedralMap):
        y = x_star[k:]
        slack = rng.uniform(0.0, 0.1, y.shape)
        lam = np.hstack([np.maximum(y, 0.0) + slack, np.maximum(-y, 0.0) + slack])
    # ξ = μ + base must be a convex combination of the gradients of f
    base = transversality_point(spec, DualCertificate(x_star, v_star, np.zeros(n), np.zeros(n), lam))
    weights = rng.dirichlet(np.ones(spec.f.G.shape[0]))
    mu = spec.f.G.T @ weights - base
    return DualCertificate(x_star, v_star, mu[:n], mu[n:], lam)
