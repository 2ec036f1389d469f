"""Moment propagation, Chebyshev confidence ellipsoids and invariant sets.

The probabilistic positively invariant (PPI) set is the polytope with a fixed
fan of normals ``p_i`` and offsets ``q* = d* + c*``:

* ``d*_i`` is the support of the one-step confidence ellipsoid
  ``E(Sigma_w, mu_w, n/eps)`` in direction ``p_i``;
* ``c*`` solves an LP whose optimum is the support of ``A_K R(q*)`` in each
  ``p_i``, so that ``A_K R(q*) ⊕ E ⊆ R(q*)`` holds facet by facet.

The terminal set is the maximal positively invariant set computed by the
Gilbert-Tan constraint-stacking iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import InvalidArgumentError, InvalidModelError, NonTerminationError, SynthesisError
from .geometry import (
    REDUNDANCY_TOL,
    Certificate,
    Ellipsoid,
    Polytope,
    ellipsoid_support,
    inclusion_certificate,
    polytope_support,
    remove_redundancy,
)
from .optim import LinearProgram, Status, solve_lp

CERTIFICATE_TOL = 1e-8


def _spd(S, name="Sigma_w"):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1] or not np.all(np.isfinite(S)):
        raise InvalidModelError(f"{name} must be a finite square matrix")
    if np.max(np.abs(S - S.T)) > 1e-10 or np.linalg.eigvalsh(S).min() <= 0:
        raise InvalidModelError(f"{name} must be symmetric positive definite")
    return S


@dataclass(frozen=True)
class MomentTrajectory:
    means: np.ndarray        # (horizon + 1, n)
    covariances: np.ndarray  # (horizon + 1, n, n)

    @property
    def horizon(self) -> int:
        return self.means.shape[0] - 1


@dataclass(frozen=True)
class PpiSet:
    polytope: Polytope
    dstar: np.ndarray
    cstar: np.ndarray
    epsilon: float
    certificate_slack: np.ndarray

    @property
    def qstar(self) -> np.ndarray:
        return self.polytope.offsets


def propagate_moments(A_K, mu_w, Sigma_w, s0, horizon: int) -> MomentTrajectory:
    """Mean and covariance of ``s_{k+1} = A_K s_k + w_k`` started at ``s0``."""
    A_K = np.atleast_2d(np.asarray(A_K, dtype=float))
    Sigma_w = _spd(Sigma_w)
    mu_w = np.atleast_1d(np.asarray(mu_w, dtype=float))
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    if horizon < 1:
        raise InvalidArgumentError("horizon must be at least 1")
    n = s0.shape[0]
    means = np.empty((horizon + 1, n))
    covs = np.empty((horizon + 1, n, n))
    means[0] = s0
    covs[0] = 0.0
    for k in range(horizon):
        means[k + 1] = A_K @ means[k] + mu_w
        covs[k + 1] = A_K @ covs[k] @ A_K.T + Sigma_w
    return MomentTrajectory(means, covs)


def confidence_ellipsoid(mu, Sigma, n: int, epsilon: float) -> Ellipsoid:
    """Chebyshev region ``E(Sigma, mu, n/epsilon)``, which holds any random
    vector with these moments with probability at least ``1 - epsilon``."""
    if not 0 < epsilon <= 1:
        raise InvalidArgumentError(f"epsilon must lie in (0, 1], got {epsilon}")
    return Ellipsoid(Sigma, mu, n / epsilon)


def compute_dstar(directions, mu_w, Sigma_w, n: int, epsilon: float) -> np.ndarray:
    E = confidence_ellipsoid(mu_w, _spd(Sigma_w), n, epsilon)
    return np.array([ellipsoid_support(E, p) for p in np.atleast_2d(directions)])


def compute_cstar(directions, A_K, dstar) -> np.ndarray:
    """Solve the fixed-direction minimal-RPI LP.

    Variables are ``c`` (one per direction) and ``xi_i`` (one point per
    direction)::

        max  sum_i c_i
        s.t. c_i <= p_i^T A_K xi_i                 for all i
             p_j^T xi_i <= c_j + d*_j             for all i, j

    i.e. each ``xi_i`` ranges over ``R(c + d*)`` and ``c_i`` is the support
    of ``A_K R(c + d*)`` along ``p_i`` at the optimum.
    """
    P = np.atleast_2d(np.asarray(directions, dtype=float))
    A_K = np.atleast_2d(np.asarray(A_K, dtype=float))
    d = np.asarray(dstar, dtype=float)
    r, n = P.shape
    nv = r + r * n
    PA = P @ A_K

    top = np.zeros((r, nv))
    top[:, :r] = np.eye(r)
    for i in range(r):
        top[i, r + i * n: r + (i + 1) * n] = -PA[i]
    # block i of the coupling rows: P xi_i - c <= d
    coupling = np.zeros((r * r, nv))
    for i in range(r):
        rows = slice(i * r, (i + 1) * r)
        coupling[rows, :r] = -np.eye(r)
        coupling[rows, r + i * n: r + (i + 1) * n] = P
    lhs = np.vstack([top, coupling])
    rhs = np.concatenate([np.zeros(r), np.tile(d, r)])
    obj = np.concatenate([np.ones(r), np.zeros(r * n)])

    res = solve_lp(LinearProgram(obj, lhs, rhs))
    if res.kind is not Status.OPTIMAL:
        raise SynthesisError(f"c* LP ended with status {res.kind.value}; check the direction fan and stability of A_K")
    return res.primal[:r]


def ppi_certificate(polytope: Polytope, A_K, E: Ellipsoid, tol: float = CERTIFICATE_TOL) -> Certificate:
    """Facet-wise check of ``A_K R ⊕ E ⊆ R`` via ``h_R(A_K^T p) + h_E(p) <= q``."""
    A_K = np.atleast_2d(np.asarray(A_K, dtype=float))
    return inclusion_certificate(
        lambda p: polytope_support(polytope, A_K.T @ p) + ellipsoid_support(E, p), polytope, tol)


def build_ppi(directions, A_K, mu_w, Sigma_w, n: int, epsilon: float) -> PpiSet:
    """Assemble and certify the polytopic PPI set at risk level ``epsilon``."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    E = confidence_ellipsoid(mu_w, _spd(Sigma_w), n, epsilon)
    dstar = compute_dstar(directions, mu_w, Sigma_w, n, epsilon)
    cstar = compute_cstar(directions, A_K, dstar)
    poly = Polytope(directions, dstar + cstar)
    cert = ppi_certificate(poly, A_K, E)
    if not cert.passed:
        worst = -cert.min_slack
        raise SynthesisError(f"PPI inclusion certificate failed, max violation {worst:.3e}", max_violation=worst)
    return PpiSet(poly, dstar, cstar, float(epsilon), cert.slack)


def reach_support(A_K, mu_w, Sigma_w, s0, n: int, epsilon: float, k: int, y) -> float:
    """Support of the k-step reach set ``R_k`` started from ``{s0}``:
    ``y^T A_K^k s0 + sum_{j<k} h_E((A_K^j)^T y)``."""
    if k < 0:
        raise InvalidArgumentError("k must be nonnegative")
    A_K = np.atleast_2d(np.asarray(A_K, dtype=float))
    y = np.asarray(y, dtype=float)
    E = confidence_ellipsoid(mu_w, _spd(Sigma_w), n, epsilon)
    total = 0.0
    yj = y.copy()
    for _ in range(k):
        total += ellipsoid_support(E, yj)
        yj = A_K.T @ yj
    return float(yj @ np.asarray(s0, dtype=float) + total)


def max_pi_set(A_cl, Z: Polytope, V: Polytope, K_f, max_iter: int = 200, full_output: bool = False):
    """Maximal positively invariant set of ``z+ = A_cl z`` under ``z ∈ Z`` and
    ``K_f z ∈ V`` (Gilbert-Tan).

    Rows ``F A_cl^k z <= h`` are stacked for ``k = 0, 1, ...`` until every row
    of the next block is implied by the current set (LP maximum within
    ``REDUNDANCY_TOL`` of its offset).  With ``full_output`` the
    determinedness index ``k*`` is returned alongside the polytope.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    K_f = np.atleast_2d(np.asarray(K_f, dtype=float))
    F = np.vstack([Z.directions, V.directions @ K_f])
    h = np.concatenate([Z.offsets, V.offsets])
    if np.any(h <= 0):
        raise InvalidArgumentError("Z and V must contain the origin in their interior")

    H, hh = F.copy(), h.copy()
    M = A_cl.copy()
    for k in range(max_iter):
        G = F @ M
        new = []
        for i in range(G.shape[0]):
            res = solve_lp(LinearProgram(G[i], H, hh))
            if res.kind is Status.UNBOUNDED:
                new.append(i)
                continue
            if res.kind is not Status.OPTIMAL:
                raise SynthesisError(f"terminal-set LP ended with status {res.kind.value}")
            if res.value > h[i] + REDUNDANCY_TOL:
                new.append(i)
        if not new:
            omega = remove_redundancy(Polytope(H, hh))
            return (omega, k) if full_output else omega
        H = np.vstack([H, G[new]])
        hh = np.concatenate([hh, h[new]])
        M = A_cl @ M
    raise NonTerminationError(f"Gilbert-Tan iteration did not terminate within {max_iter} steps")


def _halton(index: int, base: int) -> float:
    f, out = 1.0, 0.0
    while index > 0:
        f /= base
        out += f * (index % base)
        index //= base
    return out


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def direction_fan(r: int, n: int = 2) -> np.ndarray:
    """Unit normals for the PPI polytope.

    In the plane these are ``[sin(2π(i-1)/r), cos(2π(i-1)/r)]``, starting at
    ``[0, 1]``.  For ``n > 2`` the ``±`` coordinate axes come first, followed by
    Halton points pushed onto the sphere through the Gaussian quantile map.
    """
    if r < n + 1:
        raise InvalidArgumentError(f"a fan in R^{n} needs at least {n + 1} directions, got {r}")
    if n == 1:
        if r != 2:
            raise InvalidArgumentError("in R^1 the only useful fan is {+1, -1}")
        return np.array([[1.0], [-1.0]])
    if n == 2:
        theta = 2 * math.pi * np.arange(r) / r
        return np.column_stack([np.sin(theta), np.cos(theta)])
    if n > len(_PRIMES):
        raise InvalidArgumentError(f"direction fans supported up to n={len(_PRIMES)}")
    if r < 2 * n:
        raise InvalidArgumentError(f"a fan in R^{n} needs at least {2 * n} directions (the ± axes)")
    eye = np.eye(n)
    rows = [v for i in range(n) for v in (eye[i], -eye[i])]
    gauss = NormalDist()
    idx = 1
    while len(rows) < r:
        u = np.array([_halton(idx, _PRIMES[j]) for j in range(n)])
        idx += 1
        v = np.array([gauss.inv_cdf(min(max(ui, 1e-12), 1 - 1e-12)) for ui in u])
        nrm = np.linalg.norm(v)
        if nrm > 1e-9:
            rows.append(v / nrm)
    return np.array(rows)
