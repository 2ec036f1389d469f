"""Offline controller construction.

``synthesize`` runs the whole offline pipeline: LQR terminal ingredients from
the DARE, PPI sets at the state and input risk levels, tightened constraint
sets ``Z = X ⊖ R_x`` and ``V = U ⊖ K R_u``, and the terminal set ``Z_f``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidModelError, NumericFailureError, SynthesisError, TighteningInfeasibleError
from .geometry import Polytope, inclusion_certificate, linear_map_support, polytope_support, pontryagin_diff
from .invariance import CERTIFICATE_TOL, PpiSet, build_ppi, confidence_ellipsoid, direction_fan, max_pi_set

log = logging.getLogger(__name__)

DECREASE_TOL = 1e-8


def _mat(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise InvalidModelError(f"{name} contains non-finite entries")
    return M


def _is_spd(M, tol=1e-10):
    return M.shape[0] == M.shape[1] and np.max(np.abs(M - M.T), initial=0.0) <= tol \
        and np.linalg.eigvalsh((M + M.T) / 2).min() > 0


@dataclass(frozen=True)
class SystemModel:
    """``x+ = A x + B u + w`` with ``E[w] = mu_w``, ``Cov[w] = Sigma_w``,
    chance constraints ``P(x ∈ X) >= 1 - eps_x`` and ``P(u ∈ U) >= 1 - eps_u``.

    ``X`` and ``U`` must be given with offsets normalized to 1 (use
    ``Polytope.normalized``).
    """

    A: np.ndarray
    B: np.ndarray
    mu_w: np.ndarray
    Sigma_w: np.ndarray
    X: Polytope
    U: Polytope
    eps_x: float
    eps_u: float

    def __post_init__(self):
        A = _mat(self.A, "A")
        B = _mat(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidModelError("A must be square")
        if B.shape[0] != n:
            if B.shape == (1, n):
                B = B.T
            else:
                raise InvalidModelError(f"B must have {n} rows")
        mu = np.atleast_1d(np.asarray(self.mu_w, dtype=float)).ravel()
        S = _mat(self.Sigma_w, "Sigma_w")
        if mu.shape != (n,) or S.shape != (n, n):
            raise InvalidModelError("disturbance moments have the wrong dimension")
        if not _is_spd(S):
            raise InvalidModelError("Sigma_w must be symmetric positive definite")
        for name, eps in (("eps_x", self.eps_x), ("eps_u", self.eps_u)):
            if not 0 < eps < 1:
                raise InvalidModelError(f"{name} must lie in (0, 1), got {eps}")
        if self.X.dim != n or self.U.dim != B.shape[1]:
            raise InvalidModelError("constraint sets have the wrong dimension")
        for name, P in (("X", self.X), ("U", self.U)):
            if not np.allclose(P.offsets, 1.0, rtol=0, atol=1e-12):
                raise InvalidModelError(f"{name} must be normalized (all offsets equal to 1)")
        if not is_stabilizable(A, B):
            raise InvalidModelError("(A, B) is not stabilizable")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "mu_w", mu)
        object.__setattr__(self, "Sigma_w", S)
        object.__setattr__(self, "eps_x", float(self.eps_x))
        object.__setattr__(self, "eps_u", float(self.eps_u))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class TerminalIngredients:
    K: np.ndarray
    K_f: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class SynthesisResult:
    model: SystemModel
    terminal: TerminalIngredients
    R_x: PpiSet
    R_u: PpiSet
    Z: Polytope
    V: Polytope
    Z_f: Polytope
    N: int

    @property
    def A_K(self) -> np.ndarray:
        return self.model.A + self.model.B @ self.terminal.K

    @property
    def A_Kf(self) -> np.ndarray:
        return self.model.A + self.model.B @ self.terminal.K_f


def is_stabilizable(A, B, tol=1e-9) -> bool:
    """PBH test on every eigenvalue with modulus >= 1."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1 - tol:
            M = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) < n:
                return False
    return True


def check_strict_stability(M) -> bool:
    """True iff ``M^T S M - S = -I`` has a symmetric positive definite solution."""
    M = _mat(M, "M")
    n = M.shape[0]
    if M.shape != (n, n):
        raise InvalidModelError("M must be square")
    # vec(M^T S M) = (M^T ⊗ M^T) vec(S)
    lhs = np.kron(M.T, M.T) - np.eye(n * n)
    if np.linalg.cond(lhs) > 1e12:
        return False
    S = np.linalg.solve(lhs, -np.eye(n).ravel()).reshape(n, n)
    S = (S + S.T) / 2
    return bool(np.all(np.isfinite(S)) and np.linalg.eigvalsh(S).min() > 0)


def solve_dare(A, B, Q, R, max_iter: int = 10_000, rtol: float = 1e-12):
    """Stabilizing DARE solution by Riccati fixed-point iteration from ``P = Q``.

    Returns ``(P, K_f)`` with ``K_f = -(R + B^T P B)^{-1} B^T P A`` so that the
    LQR law is ``u = K_f x``.
    """
    A, B, Q, R = (_mat(M, name) for M, name in ((A, "A"), (B, "B"), (Q, "Q"), (R, "R")))
    if not (_is_spd(Q) and _is_spd(R)):
        raise InvalidModelError("Q and R must be symmetric positive definite")
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        Pn = A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A) + Q
        Pn = (Pn + Pn.T) / 2
        if not np.all(np.isfinite(Pn)):
            raise NumericFailureError("Riccati iteration diverged")
        if np.max(np.abs(Pn - P)) <= rtol * max(1.0, np.max(np.abs(Pn))):
            P = Pn
            break
        P = Pn
    else:
        raise NumericFailureError(f"Riccati iteration did not converge in {max_iter} steps")
    K_f = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    resid = dare_residual(A, B, Q, R, P)
    if resid > 1e-9 * max(1.0, np.abs(P).max()):
        raise NumericFailureError(f"DARE residual {resid:.2e} too large")
    if not check_strict_stability(A + B @ K_f):
        raise NumericFailureError("DARE gain does not stabilize (A, B)")
    return P, K_f


def dare_residual(A, B, Q, R, P) -> float:
    BtP = B.T @ P
    rhs = A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A) + Q
    return float(np.max(np.abs(rhs - P)))


def terminal_decrease_gap(A, B, K_f, P, Q, R) -> float:
    """Largest eigenvalue of ``A_f^T P A_f + Q + K_f^T R K_f - P``; <= 0 means
    ``V_f`` decreases by at least the stage cost under the terminal law."""
    Af = A + B @ K_f
    M = Af.T @ P @ Af + Q + K_f.T @ R @ K_f - P
    return float(np.linalg.eigvalsh((M + M.T) / 2).max())


def tighten_state_constraints(X: Polytope, R_x: Polytope) -> Polytope:
    try:
        return pontryagin_diff(X, lambda f: polytope_support(R_x, f))
    except TighteningInfeasibleError as exc:
        exc.constraint = "X"
        exc.args = (f"state constraint row {exc.row}: {exc.args[0]}",)
        raise


def tighten_input_constraints(U: Polytope, R_u: Polytope, K) -> Polytope:
    hK = linear_map_support(lambda y: polytope_support(R_u, y), K)
    try:
        return pontryagin_diff(U, hK)
    except TighteningInfeasibleError as exc:
        exc.constraint = "U"
        exc.args = (f"input constraint row {exc.row}: {exc.args[0]}",)
        raise


def synthesize(model: SystemModel, K=None, Q=None, R=None, N: int = 10, r: int = 66,
               directions=None) -> SynthesisResult:
    """Build every offline ingredient of the controller.

    ``K`` defaults to the LQR gain ``K_f``.  ``directions`` overrides the
    default fan of ``r`` normals.
    """
    if N < 1:
        raise InvalidModelError("horizon N must be at least 1")
    n, m = model.n, model.m
    Q = np.eye(n) if Q is None else _mat(Q, "Q")
    R = np.eye(m) if R is None else _mat(R, "R")

    P, K_f = solve_dare(model.A, model.B, Q, R)
    K = K_f.copy() if K is None else _mat(K, "K").reshape(m, n)
    A_K = model.A + model.B @ K
    if not check_strict_stability(A_K):
        raise InvalidModelError("A + B K is not strictly stable")

    for eps in {model.eps_x, model.eps_u}:
        E = confidence_ellipsoid(model.mu_w, model.Sigma_w, n, eps)
        if model.mu_w @ np.linalg.solve(E.shape, model.mu_w) >= E.radius_sq:
            raise InvalidModelError(f"confidence ellipsoid at eps={eps} does not contain the origin in its interior")

    fan = direction_fan(r, n) if directions is None else np.atleast_2d(np.asarray(directions, dtype=float))
    log.debug("building PPI sets with %d directions", fan.shape[0])
    R_x = build_ppi(fan, A_K, model.mu_w, model.Sigma_w, n, model.eps_x)
    R_u = R_x if model.eps_u == model.eps_x else build_ppi(fan, A_K, model.mu_w, model.Sigma_w, n, model.eps_u)

    Z = tighten_state_constraints(model.X, R_x.polytope)
    V = tighten_input_constraints(model.U, R_u.polytope, K)
    A_Kf = model.A + model.B @ K_f
    Z_f = max_pi_set(A_Kf, Z, V, K_f)

    res = SynthesisResult(model, TerminalIngredients(K, K_f, P, Q, R), R_x, R_u, Z, V, Z_f, int(N))
    problems = [name for name, ok in validate(res).items() if not ok]
    if problems:
        raise SynthesisError(f"synthesized controller fails checks: {', '.join(problems)}")
    return res


def terminal_set_certificates(res: SynthesisResult, tol: float = CERTIFICATE_TOL):
    """Invariance ``A_Kf Z_f ⊆ Z_f``, ``Z_f ⊆ Z`` and ``K_f Z_f ⊆ V``."""
    hZf = lambda y: polytope_support(res.Z_f, y)  # noqa: E731
    return {
        "zf_invariant": inclusion_certificate(linear_map_support(hZf, res.A_Kf), res.Z_f, tol),
        "zf_in_z": inclusion_certificate(hZf, res.Z, tol),
        "kf_zf_in_v": inclusion_certificate(linear_map_support(hZf, res.terminal.K_f), res.V, tol),
    }


def validate(res: SynthesisResult) -> dict:
    """Boolean outcome of every structural check on a synthesis result."""
    t = res.terminal
    mdl = res.model
    out = {
        "A_K_stable": check_strict_stability(res.A_K),
        "A_Kf_stable": check_strict_stability(res.A_Kf),
        "terminal_decrease": terminal_decrease_gap(mdl.A, mdl.B, t.K_f, t.P, t.Q, t.R) <= DECREASE_TOL,
        "P_spd": _is_spd(t.P, tol=1e-8),
        "Z_origin_interior": res.Z.origin_interior,
        "V_origin_interior": res.V.origin_interior,
        "Z_inside_X": bool(np.all(res.Z.offsets <= 1.0)),
        "V_inside_U": bool(np.all(res.V.offsets <= 1.0)),
        "R_x_certified": bool(np.all(res.R_x.certificate_slack >= -CERTIFICATE_TOL)),
        "R_u_certified": bool(np.all(res.R_u.certificate_slack >= -CERTIFICATE_TOL)),
    }
    for name, cert in terminal_set_certificates(res).items():
        out[name] = cert.passed
    return out
