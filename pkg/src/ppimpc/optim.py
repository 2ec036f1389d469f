"""Small dense LP and strictly convex QP solvers.

Both solvers are self-contained numpy code sized for problems with at most a
few hundred rows.  ``solve_lp`` runs a revised primal simplex on the dual of

    maximize    c^T x
    subject to  A x <= b,  E x = f,   x free,

so the (few) primal variables become rows of the working basis and the (many)
inequalities become columns.  The primal optimizer is read off as the simplex
multipliers of the dual.  ``solve_qp`` is the Goldfarb-Idnani dual active-set
method: it starts from the unconstrained minimizer and adds violated
constraints one at a time, which makes infeasibility detection exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Tolerances:
    """Every numerical threshold used by the solvers."""

    feasibility: float = 1e-8
    optimality: float = 1e-8
    complementarity: float = 1e-8
    stationarity: float = 1e-6
    multiplier: float = 1e-10
    kkt: float = 1e-6
    pivot: float = 1e-9
    reduced_cost: float = 1e-11
    max_iter: int = 100_000
    degenerate_switch: int = 50
    refactor_every: int = 64


DEFAULT_TOLERANCES = Tolerances()


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


@dataclass
class SolveStatus:
    kind: Status
    primal: np.ndarray
    dual: np.ndarray
    kkt_residual: float = np.inf
    eq_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value: float = np.nan
    iterations: int = 0
    active: tuple = ()

    @property
    def optimal(self) -> bool:
        return self.kind is Status.OPTIMAL


def _as_matrix(M, ncols, name):
    if M is None:
        return np.zeros((0, ncols))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, ncols))
    if M.shape[1] != ncols:
        raise InvalidArgumentError(f"{name} has {M.shape[1]} columns, expected {ncols}")
    return M


def _as_vector(v, length, name):
    if v is None:
        return np.zeros(0)
    v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if v.shape[0] != length:
        raise InvalidArgumentError(f"{name} has length {v.shape[0]}, expected {length}")
    return v


def _check_finite(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError(f"{name} contains non-finite entries")


@dataclass
class LinearProgram:
    """maximize objective @ x  s.t.  ineq_lhs @ x <= ineq_rhs, eq_lhs @ x == eq_rhs."""

    objective: np.ndarray
    ineq_lhs: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_lhs: np.ndarray = None
    eq_rhs: np.ndarray = None

    def __post_init__(self):
        self.objective = np.atleast_1d(np.asarray(self.objective, dtype=float)).ravel()
        n = self.objective.shape[0]
        self.ineq_lhs = _as_matrix(self.ineq_lhs, n, "ineq_lhs")
        self.ineq_rhs = _as_vector(self.ineq_rhs, self.ineq_lhs.shape[0], "ineq_rhs")
        self.eq_lhs = _as_matrix(self.eq_lhs, n, "eq_lhs")
        self.eq_rhs = _as_vector(self.eq_rhs, self.eq_lhs.shape[0], "eq_rhs")
        _check_finite(objective=self.objective, ineq_lhs=self.ineq_lhs, ineq_rhs=self.ineq_rhs,
                      eq_lhs=self.eq_lhs, eq_rhs=self.eq_rhs)


@dataclass
class QuadraticProgram:
    """minimize 1/2 x^T H x + g^T x  s.t.  ineq_lhs @ x <= ineq_rhs, eq_lhs @ x == eq_rhs."""

    hessian: np.ndarray
    linear: np.ndarray
    ineq_lhs: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_lhs: np.ndarray = None
    eq_rhs: np.ndarray = None

    def __post_init__(self):
        self.hessian = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        n = self.hessian.shape[0]
        if self.hessian.shape != (n, n):
            raise InvalidArgumentError("hessian must be square")
        self.linear = _as_vector(self.linear, n, "linear")
        self.ineq_lhs = _as_matrix(self.ineq_lhs, n, "ineq_lhs")
        self.ineq_rhs = _as_vector(self.ineq_rhs, self.ineq_lhs.shape[0], "ineq_rhs")
        self.eq_lhs = _as_matrix(self.eq_lhs, n, "eq_lhs")
        self.eq_rhs = _as_vector(self.eq_rhs, self.eq_lhs.shape[0], "eq_rhs")
        _check_finite(hessian=self.hessian, linear=self.linear, ineq_lhs=self.ineq_lhs,
                      ineq_rhs=self.ineq_rhs, eq_lhs=self.eq_lhs, eq_rhs=self.eq_rhs)
        if not np.allclose(self.hessian, self.hessian.T, rtol=0, atol=1e-10 * max(1.0, np.abs(self.hessian).max())):
            raise InvalidArgumentError("hessian is not symmetric")
        if n and np.linalg.eigvalsh(self.hessian).min() <= 0:
            raise InvalidArgumentError("hessian is not positive definite")


# --------------------------------------------------------------------------
# Linear programming
# --------------------------------------------------------------------------


class _Simplex:
    """Revised primal simplex for  min cost^T w  s.t.  M w = rhs,  w >= 0,  rhs >= 0."""

    def __init__(self, M, rhs, tol):
        self.m, self.ncols = M.shape
        self.M = np.hstack([M, np.eye(self.m)])
        self.rhs = rhs
        self.tol = tol
        self.basis = np.arange(self.ncols, self.ncols + self.m)
        self.Binv = np.eye(self.m)
        self.iterations = 0
        self._since_refactor = 0

    def _refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        self._since_refactor = 0

    def run(self, cost, n_enter, pin_artificials):
        """Iterate until optimal; returns 'optimal', 'unbounded' or 'iteration-limit'."""
        tol = self.tol
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= tol.max_iter:
                return Status.ITERATION_LIMIT
            if self._since_refactor >= tol.refactor_every:
                self._refactor()
            xB = self.Binv @ self.rhs
            np.maximum(xB, 0.0, out=xB)
            pi = cost[self.basis] @ self.Binv
            d = cost[:n_enter] - pi @ self.M[:, :n_enter]
            in_basis = self.basis[self.basis < n_enter]
            d[in_basis] = 0.0
            scale = 1.0 + np.abs(cost[:n_enter])
            candidates = np.flatnonzero(d < -tol.reduced_cost * scale)
            if candidates.size == 0:
                return Status.OPTIMAL
            q = candidates[0] if bland else candidates[np.argmin(d[candidates] / scale[candidates])]
            u = self.Binv @ self.M[:, q]

            rows = np.flatnonzero(u > tol.pivot)
            ratios = xB[rows] / u[rows]
            if pin_artificials:
                art = np.flatnonzero((self.basis >= self.ncols) & (np.abs(u) > tol.pivot))
                if art.size:
                    rows = np.concatenate([rows, art])
                    ratios = np.concatenate([ratios, np.zeros(art.size)])
            if rows.size == 0:
                return Status.UNBOUNDED
            theta = ratios.min()
            ties = rows[ratios <= theta + 1e-12]
            if bland:
                r = ties[np.argmin(self.basis[ties])]
            else:
                r = ties[np.argmax(np.abs(u[ties]))]

            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run > tol.degenerate_switch:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            piv = u[r]
            row_r = self.Binv[r] / piv
            self.Binv -= np.outer(u, row_r)
            self.Binv[r] = row_r
            self.basis[r] = q
            self.iterations += 1
            self._since_refactor += 1

    def solution(self, cost):
        self._refactor()
        B = self.M[:, self.basis]
        xB = np.linalg.solve(B, self.rhs)
        pi = np.linalg.solve(B.T, cost[self.basis])
        w = np.zeros(self.M.shape[1])
        w[self.basis] = np.maximum(xB, 0.0)
        return w[: self.ncols], pi


def _dual_standard_form(c, A, b, E, f, tol):
    """Run both simplex phases on the dual; returns (status, w, pi, sign, iterations)."""
    M = np.hstack([A.T, E.T, -E.T])
    cost = np.concatenate([b, f, -f])
    sign = np.where(c < 0, -1.0, 1.0)
    Ms = sign[:, None] * M
    rhs = np.abs(c)

    spx = _Simplex(Ms, rhs, tol)
    ncols = Ms.shape[1]
    phase1 = np.concatenate([np.zeros(ncols), np.ones(spx.m)])
    status = spx.run(phase1, ncols + spx.m, pin_artificials=False)
    if status is Status.ITERATION_LIMIT:
        return status, None, None, sign, spx.iterations
    w, _ = spx.solution(phase1)
    spx._refactor()
    infeas = (spx.Binv @ rhs)[spx.basis >= ncols].sum()
    if infeas > 1e-9 * max(1.0, np.abs(rhs).max()):
        return Status.INFEASIBLE, None, None, sign, spx.iterations

    phase2 = np.concatenate([cost, np.zeros(spx.m)])
    status = spx.run(phase2, ncols, pin_artificials=True)
    if status is not Status.OPTIMAL:
        return status, None, None, sign, spx.iterations
    w, pi = spx.solution(phase2)
    return Status.OPTIMAL, w, pi, sign, spx.iterations


def _lp_kkt(c, A, b, E, f, x, y, nu):
    residuals = [0.0]
    if A.shape[0]:
        slack = b - A @ x
        residuals += [np.max(-slack, initial=0.0), np.max(-y, initial=0.0), np.max(np.abs(y * slack), initial=0.0)]
    if E.shape[0]:
        residuals.append(np.max(np.abs(E @ x - f)))
    residuals.append(np.max(np.abs(A.T @ y + E.T @ nu - c), initial=0.0))
    return float(max(residuals))


def solve_lp(lp: LinearProgram, tol: Tolerances = DEFAULT_TOLERANCES) -> SolveStatus:
    """Maximize a linear objective over a polyhedron.

    Infeasible and unbounded problems are reported through ``kind``; they are
    never returned as optimal.  The iteration budget is ``tol.max_iter`` pivots
    summed over both simplex phases.
    """
    c, A, b, E, f = lp.objective, lp.ineq_lhs, lp.ineq_rhs, lp.eq_lhs, lp.eq_rhs
    n, m, p = c.shape[0], A.shape[0], E.shape[0]
    status, w, pi, sign, iters = _dual_standard_form(c, A, b, E, f, tol)

    if status is Status.OPTIMAL:
        x = sign * pi
        y = w[:m]
        nu = w[m:m + p] - w[m + p:]
        kkt = _lp_kkt(c, A, b, E, f, x, y, nu)
        active = tuple(int(i) for i in np.flatnonzero(y > 0))
        return SolveStatus(Status.OPTIMAL, x, y, kkt, nu, float(c @ x), iters, active)

    if status is Status.ITERATION_LIMIT:
        return SolveStatus(Status.ITERATION_LIMIT, np.full(n, np.nan), np.full(m, np.nan), iterations=iters)

    if status is Status.UNBOUNDED:
        # dual unbounded: the primal has no feasible point
        return SolveStatus(Status.INFEASIBLE, np.full(n, np.nan), np.full(m, np.nan), iterations=iters)

    # dual infeasible: primal is unbounded or infeasible; decide with a zero objective
    zstatus, _, zpi, zsign, ziters = _dual_standard_form(np.zeros(n), A, b, E, f, tol)
    iters += ziters
    if zstatus is Status.OPTIMAL:
        return SolveStatus(Status.UNBOUNDED, zsign * zpi, np.full(m, np.nan), value=np.inf, iterations=iters)
    if zstatus is Status.ITERATION_LIMIT:
        return SolveStatus(Status.ITERATION_LIMIT, np.full(n, np.nan), np.full(m, np.nan), iterations=iters)
    return SolveStatus(Status.INFEASIBLE, np.full(n, np.nan), np.full(m, np.nan), iterations=iters)


# --------------------------------------------------------------------------
# Quadratic programming
# --------------------------------------------------------------------------


def _independent_rows(E, tol=1e-10):
    keep = []
    basis = np.zeros((0, E.shape[1]))
    for i, row in enumerate(E):
        if basis.shape[0]:
            resid = row - basis.T @ (basis @ row)
        else:
            resid = row.copy()
        nrm = np.linalg.norm(resid)
        if nrm > tol * max(1.0, np.linalg.norm(row)):
            keep.append(i)
            basis = np.vstack([basis, resid / nrm])
    return keep


def _kkt_solve(H, N, rhs_x, rhs_c):
    """Solve [[H, N], [N^T, 0]] [x; r] = [rhs_x; rhs_c]."""
    n, k = N.shape
    if k == 0:
        return np.linalg.solve(H, rhs_x), np.zeros(0)
    K = np.block([[H, N], [N.T, np.zeros((k, k))]])
    sol = np.linalg.solve(K, np.concatenate([rhs_x, rhs_c]))
    return sol[:n], sol[n:]


class _GIState:
    """Working set of a Goldfarb-Idnani solve.

    Constraints are held in ``normal^T x >= bound`` form; an inequality
    ``C_i x <= d_i`` therefore has normal ``-C_i`` and bound ``-d_i``.
    Entries of ``work`` are ('e', j) for equalities and ('i', i) for
    inequalities; ``lam`` holds the matching multipliers.
    """

    def __init__(self, H, g, C, d, E, f):
        self.H, self.g, self.C, self.d, self.E, self.f = H, g, C, d, E, f
        self.work = []
        self.lam = np.zeros(0)

    def normal(self, item):
        kind, j = item
        return self.E[j] if kind == "e" else -self.C[j]

    def bound(self, item):
        kind, j = item
        return self.f[j] if kind == "e" else -self.d[j]

    def normals(self, work=None):
        work = self.work if work is None else work
        if not work:
            return np.zeros((self.H.shape[0], 0))
        return np.column_stack([self.normal(it) for it in work])

    def eqp(self, work):
        """Minimizer with every constraint in ``work`` held at equality."""
        N = self.normals(work)
        bounds = np.array([self.bound(it) for it in work])
        x, r = _kkt_solve(self.H, N, -self.g, bounds)
        return x, -r


def solve_qp(qp: QuadraticProgram, tol: Tolerances = DEFAULT_TOLERANCES, active_hint=None) -> SolveStatus:
    """Minimize a strictly convex quadratic subject to linear constraints.

    ``active_hint`` is an optional iterable of inequality indices believed to
    be active (for instance the previous MPC step's active set).  It is used
    only when it yields a dual-feasible starting point; the result does not
    depend on it beyond floating-point rounding.
    """
    H, g, C, d, E, f = qp.hessian, qp.linear, qp.ineq_lhs, qp.ineq_rhs, qp.eq_lhs, qp.eq_rhs
    n, m = H.shape[0], C.shape[0]
    st = _GIState(H, g, C, d, E, f)
    eq_items = [("e", j) for j in _independent_rows(E)]
    Hinv = np.linalg.inv(H)

    x = lam = None
    if active_hint is not None:
        hint = [("i", int(i)) for i in dict.fromkeys(active_hint) if 0 <= int(i) < m]
        work = list(eq_items)
        for item in hint:
            N = st.normals(work + [item])
            if np.linalg.matrix_rank(N) == N.shape[1]:
                work.append(item)
        try:
            xh, lh = st.eqp(work)
            ineq_mult = lh[len(eq_items):]
            if np.all(ineq_mult >= 0):
                st.work, x, lam = work, xh, lh
        except np.linalg.LinAlgError:
            pass
    if x is None:
        st.work = list(eq_items)
        x, lam = st.eqp(st.work)
    st.lam = lam

    if E.shape[0] and np.max(np.abs(E @ x - f)) > tol.feasibility * max(1.0, np.abs(f).max()):
        return SolveStatus(Status.INFEASIBLE, x, np.zeros(m), eq_dual=np.zeros(E.shape[0]))

    iters = 0
    viol_tol = 1e-2 * tol.feasibility
    while True:
        in_work = {j for k, j in st.work if k == "i"}
        viol = C @ x - d if m else np.zeros(0)
        if in_work:
            viol[list(in_work)] = -np.inf
        if m == 0 or viol.max() <= viol_tol * max(1.0, np.abs(d).max()):
            break
        p = int(np.argmax(viol))
        item_p = ("i", p)
        n_p = st.normal(item_p)
        b_p = st.bound(item_p)
        lam_p = 0.0
        while True:
            iters += 1
            if iters > tol.max_iter:
                return SolveStatus(Status.ITERATION_LIMIT, x, np.full(m, np.nan), iterations=iters)
            N = st.normals()
            # H z + N r = n_p, N^T z = 0: z is the primal step, r = N* n_p
            z, r = _kkt_solve(H, N, n_p, np.zeros(N.shape[1]))
            ineq_pos = [k for k, it in enumerate(st.work) if it[0] == "i" and r[k] > 1e-14]
            t1, k_drop = np.inf, None
            for k in ineq_pos:
                ratio = st.lam[k] / r[k]
                if ratio < t1:
                    t1, k_drop = ratio, k
            curvature = z @ n_p
            if curvature <= 1e-12 * (n_p @ Hinv @ n_p):
                if k_drop is None:
                    return SolveStatus(Status.INFEASIBLE, x, np.zeros(m), iterations=iters)
                st.lam = st.lam - t1 * r
                lam_p += t1
                del st.work[k_drop]
                st.lam = np.delete(st.lam, k_drop)
                continue
            t2 = -(n_p @ x - b_p) / curvature
            t = min(t1, t2)
            x = x + t * z
            st.lam = st.lam - t * r
            lam_p += t
            if t2 <= t1:
                st.work.append(item_p)
                st.lam = np.append(st.lam, lam_p)
                break
            del st.work[k_drop]
            st.lam = np.delete(st.lam, k_drop)

    # polish on the final working set
    x, lam = st.eqp(st.work)
    dual = np.zeros(m)
    eq_dual = np.zeros(E.shape[0])
    for it, l in zip(st.work, lam):
        if it[0] == "i":
            dual[it[1]] = l
        else:
            eq_dual[it[1]] = -l
    kkt = _qp_kkt(H, g, C, d, E, f, x, dual, eq_dual)
    active = tuple(sorted(j for k, j in st.work if k == "i"))
    value = float(0.5 * x @ H @ x + g @ x)
    return SolveStatus(Status.OPTIMAL, x, dual, kkt, eq_dual, value, iters, active)


def _qp_kkt(H, g, C, d, E, f, x, lam, nu):
    stationarity = H @ x + g + C.T @ lam + E.T @ nu
    res = [np.max(np.abs(stationarity), initial=0.0)]
    if C.shape[0]:
        slack = d - C @ x
        res += [np.max(-slack, initial=0.0), np.max(-lam, initial=0.0), np.max(np.abs(lam * slack), initial=0.0)]
    if E.shape[0]:
        res.append(np.max(np.abs(E @ x - f)))
    return float(max(res))
