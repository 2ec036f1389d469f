"""Condensed tube-MPC optimal control problem and the feedback law.

The nominal states are eliminated through ``z_t = Phi_t z_0 + Gamma_t v``, so
the online problem is a QP in the stacked nominal inputs ``v`` only::

    min  1/2 v^T H v + (F z_k)^T v      s.t.  G v <= w + S z_k

Rows of ``G`` are ordered as ``v_t ∈ V`` for ``t = 0..N-1``, then
``z_t ∈ Z`` for ``t = 1..N-1``, then ``z_N ∈ Z_f``.  ``z_0`` is not
constrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ControllerFailureError, InvalidArgumentError, SolverError
from .geometry import Polytope
from .invariance import PpiSet
from .optim import QuadraticProgram, Status, solve_qp
from .synthesis import SynthesisResult


@dataclass(frozen=True)
class OcpTemplate:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    N: int
    Phi: np.ndarray            # ((N+1) n, n)
    Gamma: np.ndarray          # ((N+1) n, N m)
    hessian: np.ndarray        # (N m, N m)
    gradient_map: np.ndarray   # (N m, n): linear term is gradient_map @ z_k
    constant_map: np.ndarray   # (n, n): cost offset is z_k^T constant_map z_k
    ineq_lhs: np.ndarray
    ineq_rhs: np.ndarray
    ineq_state_map: np.ndarray
    blocks: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.ineq_lhs.shape[0]

    def predict(self, z0, v) -> np.ndarray:
        """Nominal states ``z_0..z_N`` as an (N+1, n) array."""
        return (self.Phi @ np.asarray(z0, float) + self.Gamma @ np.asarray(v, float).ravel()).reshape(self.N + 1, self.n)

    def cost(self, z0, v) -> float:
        z0 = np.asarray(z0, float)
        v = np.asarray(v, float).ravel()
        return float(0.5 * v @ self.hessian @ v + v @ (self.gradient_map @ z0) + z0 @ self.constant_map @ z0)

    def qp(self, z0) -> QuadraticProgram:
        z0 = np.asarray(z0, float)
        return QuadraticProgram(self.hessian, self.gradient_map @ z0, self.ineq_lhs,
                                self.ineq_rhs + self.ineq_state_map @ z0)


@dataclass
class ControlStepResult:
    v0: np.ndarray
    u: np.ndarray
    value: float
    predicted_states: np.ndarray
    predicted_inputs: np.ndarray
    feasible: bool
    active: tuple = ()
    next_nominal: np.ndarray = None


def stage_cost(z, v, Q, R) -> float:
    z = np.asarray(z, float)
    v = np.asarray(v, float)
    return float(z @ Q @ z + v @ R @ v)


def build_ocp(res: SynthesisResult) -> OcpTemplate:
    mdl, t = res.model, res.terminal
    A, B, N = mdl.A, mdl.B, res.N
    n, m = mdl.n, mdl.m

    Phi = np.zeros(((N + 1) * n, n))
    Gamma = np.zeros(((N + 1) * n, N * m))
    Ak = np.eye(n)
    for k in range(N + 1):
        Phi[k * n:(k + 1) * n] = Ak
        Ak = A @ Ak
    for k in range(1, N + 1):
        # z_k = A z_{k-1} + B v_{k-1}
        Gamma[k * n:(k + 1) * n] = A @ Gamma[(k - 1) * n:k * n]
        Gamma[k * n:(k + 1) * n, (k - 1) * m:k * m] = B

    Qbar = np.zeros(((N + 1) * n, (N + 1) * n))
    for k in range(N):
        Qbar[k * n:(k + 1) * n, k * n:(k + 1) * n] = t.Q
    Qbar[N * n:, N * n:] = t.P
    Rbar = np.kron(np.eye(N), t.R)
    H = 2 * (Gamma.T @ Qbar @ Gamma + Rbar)
    H = (H + H.T) / 2
    F = 2 * Gamma.T @ Qbar @ Phi
    C = Phi.T @ Qbar @ Phi

    G_rows, w_rows, S_rows, blocks = [], [], [], []
    row = 0

    def add(name, k, poly: Polytope, G, S):
        nonlocal row
        G_rows.append(G)
        w_rows.append(poly.offsets)
        S_rows.append(S)
        blocks.append((name, k, row, row + poly.n_rows))
        row += poly.n_rows

    for k in range(N):
        G = np.zeros((res.V.n_rows, N * m))
        G[:, k * m:(k + 1) * m] = res.V.directions
        add("V", k, res.V, G, np.zeros((res.V.n_rows, n)))
    for k in range(1, N):
        Gz = Gamma[k * n:(k + 1) * n]
        add("Z", k, res.Z, res.Z.directions @ Gz, -res.Z.directions @ Phi[k * n:(k + 1) * n])
    GN = Gamma[N * n:]
    add("Z_f", N, res.Z_f, res.Z_f.directions @ GN, -res.Z_f.directions @ Phi[N * n:])

    return OcpTemplate(A, B, t.Q, t.R, t.P, N, Phi, Gamma, H, F, C,
                       np.vstack(G_rows), np.concatenate(w_rows), np.vstack(S_rows), tuple(blocks))


def solve_ocp(tpl: OcpTemplate, z_k, active_hint=None) -> ControlStepResult:
    """Solve the OCP at nominal state ``z_k``.

    An infeasible QP (``z_k`` outside the feasible region) gives
    ``feasible=False``; a solver breakdown raises ``SolverError``.
    """
    z_k = np.atleast_1d(np.asarray(z_k, dtype=float))
    if z_k.shape != (tpl.n,) or not np.all(np.isfinite(z_k)):
        raise InvalidArgumentError("z_k must be a finite vector of the state dimension")
    sol = solve_qp(tpl.qp(z_k), active_hint=active_hint)
    if sol.kind is Status.INFEASIBLE:
        nan = np.full(tpl.m, np.nan)
        return ControlStepResult(nan, nan, np.inf, np.full((tpl.N + 1, tpl.n), np.nan),
                                 np.full((tpl.N, tpl.m), np.nan), False)
    if sol.kind is not Status.OPTIMAL:
        raise SolverError(f"OCP solve ended with status {sol.kind.value}", status=sol)
    v = sol.primal
    value = float(sol.value + z_k @ tpl.constant_map @ z_k)
    v0 = v[:tpl.m].copy()
    return ControlStepResult(v0, v0.copy(), value, tpl.predict(z_k, v), v.reshape(tpl.N, tpl.m), True,
                             sol.active, tpl.A @ z_k + tpl.B @ v0)


def control_step(tpl: OcpTemplate, z_k, x_k, K, active_hint=None) -> ControlStepResult:
    """Tube feedback ``u = v*_0 + K (x_k - z_k)``."""
    step = solve_ocp(tpl, z_k, active_hint)
    if not step.feasible:
        raise ControllerFailureError(f"OCP infeasible at nominal state {np.asarray(z_k).tolist()}", z=np.asarray(z_k))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    step.u = step.v0 + K @ (np.asarray(x_k, float) - np.asarray(z_k, float))
    return step


def init_nominal(x0, R_x: PpiSet, mode: str = "same", P=None) -> np.ndarray:
    """Initial nominal state with ``x0 - z0`` inside the PPI set.

    ``same`` returns ``x0`` (valid because the PPI set contains the origin).
    ``project`` returns the ``z0`` of least ``z0^T P z0`` with ``x0 - z0`` in
    the PPI set.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if mode == "same":
        return x0.copy()
    if mode != "project":
        raise InvalidArgumentError(f"unknown init mode {mode!r}")
    n = x0.shape[0]
    P = np.eye(n) if P is None else np.atleast_2d(np.asarray(P, dtype=float))
    D, q = R_x.polytope.directions, R_x.polytope.offsets
    # D (x0 - z) <= q  <=>  -D z <= q - D x0
    sol = solve_qp(QuadraticProgram(2 * P, np.zeros(n), -D, q - D @ x0))
    if sol.kind is not Status.OPTIMAL:
        raise SolverError(f"nominal-state projection ended with status {sol.kind.value}", status=sol)
    return sol.primal
