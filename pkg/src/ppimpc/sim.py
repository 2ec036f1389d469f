"""Closed-loop simulation and Monte Carlo validation.

Each run draws its disturbances from its own Philox stream keyed by
``(seed, run index)``, so run ``i`` sees the same noise whatever the number of
runs or the order in which they are evaluated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ControllerFailureError, InvalidArgumentError
from .geometry import Polytope
from .invariance import confidence_ellipsoid, propagate_moments
from .mpc import OcpTemplate, control_step, init_nominal
from .synthesis import SynthesisResult

log = logging.getLogger(__name__)

KINDS = ("gaussian", "uniform-box", "scaled-t")


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str
    mean: np.ndarray
    covariance: np.ndarray
    seed: int = 0
    df: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown disturbance kind {self.kind!r}; expected one of {KINDS}")
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.shape[0],) * 2:
            raise InvalidArgumentError("covariance shape does not match mean")
        if np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.abs(cov).max()):
            raise InvalidArgumentError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvalidArgumentError("covariance must be positive definite") from None
        if self.kind == "scaled-t" and not (self.df is not None and self.df > 2):
            raise InvalidArgumentError("scaled-t needs df > 2")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def run_stream(seed: int, run: int) -> np.random.Generator:
    """Independent generator for run ``run`` of a study seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run),))
    return np.random.Generator(np.random.Philox(ss))


def sample_disturbance(spec: DisturbanceSpec, stream: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``size`` disturbances (or one, when ``size`` is None) with exactly
    the mean and covariance of ``spec``."""
    k = 1 if size is None else int(size)
    n = spec.dim
    if spec.kind == "gaussian":
        xi = stream.standard_normal((k, n))
    elif spec.kind == "uniform-box":
        # U(-sqrt 3, sqrt 3) has unit variance
        xi = stream.uniform(-np.sqrt(3.0), np.sqrt(3.0), (k, n))
    else:
        df = spec.df
        g = stream.standard_normal((k, n))
        chi2 = stream.chisquare(df, (k, 1))
        xi = g / np.sqrt(chi2 / df) * np.sqrt((df - 2) / df)
    w = spec.mean + xi @ spec._chol.T
    return w[0] if size is None else w


@dataclass
class TrajectoryLog:
    """Per-step record ``k = 0..T``.  Inputs at ``k = T`` are computed but not
    applied."""

    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    values: np.ndarray
    feasible: np.ndarray
    w: np.ndarray

    @property
    def T(self) -> int:
        return self.x.shape[0] - 1


def simulate_closed_loop(res: SynthesisResult, tpl: OcpTemplate, x0, T: int, spec: DisturbanceSpec,
                         init_mode: str = "same", stream: np.random.Generator | None = None,
                         disturbances=None) -> TrajectoryLog:
    """Run the real and nominal closed loops for ``T`` steps.

    ``disturbances`` (shape (T, n)) overrides sampling; otherwise they come
    from ``stream``, defaulting to run 0 of ``spec.seed``.
    """
    mdl = res.model
    K = res.terminal.K
    n, m = mdl.n, mdl.m
    if T < 0:
        raise InvalidArgumentError("T must be nonnegative")
    if disturbances is None:
        stream = run_stream(spec.seed, 0) if stream is None else stream
        W = sample_disturbance(spec, stream, T) if T else np.zeros((0, n))
    else:
        W = np.asarray(disturbances, dtype=float).reshape(T, n)

    x = np.empty((T + 1, n))
    z = np.empty((T + 1, n))
    s = np.empty((T + 1, n))
    u = np.full((T + 1, m), np.nan)
    v = np.full((T + 1, m), np.nan)
    values = np.full(T + 1, np.nan)
    feasible = np.zeros(T + 1, dtype=bool)

    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    z[0] = init_nominal(x0, res.R_x, init_mode, res.terminal.P)
    s[0] = x0 - z[0]
    x[0] = z[0] + s[0]
    hint = None
    for k in range(T + 1):
        try:
            step = control_step(tpl, z[k], x[k], K, hint)
        except ControllerFailureError as exc:
            err = ControllerFailureError(f"step {k}: {exc}", z=z[k], step=k)
            err.partial = TrajectoryLog(x[:k + 1], z[:k + 1], s[:k + 1], u[:k + 1], v[:k + 1],
                                        values[:k + 1], feasible[:k + 1], W[:k])
            raise err from exc
        hint = step.active
        v[k] = step.v0
        u[k] = v[k] + K @ s[k]
        values[k] = step.value
        feasible[k] = True
        if k == T:
            break
        z[k + 1] = step.next_nominal
        x_next = mdl.A @ x[k] + mdl.B @ u[k] + W[k]
        s[k + 1] = x_next - z[k + 1]
        x[k + 1] = z[k + 1] + s[k + 1]
    return TrajectoryLog(x, z, s, u, v, values, feasible, W)


@dataclass
class NominalRollout:
    z: np.ndarray
    v: np.ndarray
    values: np.ndarray


def nominal_rollout(tpl: OcpTemplate, z0, T: int) -> NominalRollout:
    """Disturbance-free receding-horizon trajectory ``z_0..z_T`` and ``v_0..v_T``."""
    n, m = tpl.n, tpl.m
    z = np.empty((T + 1, n))
    v = np.empty((T + 1, m))
    values = np.empty(T + 1)
    z[0] = z0
    hint = None
    for k in range(T + 1):
        step = control_step(tpl, z[k], z[k], np.zeros((m, n)), hint)
        hint = step.active
        v[k], values[k] = step.v0, step.value
        if k < T:
            z[k + 1] = step.next_nominal
    return NominalRollout(z, v, values)


@dataclass
class MonteCarloReport:
    runs: int
    horizon: int
    seed: int
    kind: str
    window: tuple
    state_violation: np.ndarray       # (T+1,) fraction of runs with x_k outside X
    input_violation: np.ndarray       # (T+1,) fraction of runs with u_k outside U
    window_state_violation: float
    window_input_violation: float
    trajectory_state_violation: float  # fraction of runs violating X at least once in the window
    max_input_violation: float
    chebyshev_coverage: np.ndarray    # (T+1,) fraction with s_k in E(Sigma_k, mu_k, n/eps_x); k=0 is NaN
    ppi_residence: np.ndarray         # (T+1,) fraction with s_k in R_x
    final_mean: np.ndarray
    final_cov: np.ndarray
    final_std_error: np.ndarray
    nominal: NominalRollout = field(repr=False, default=None)
    states: np.ndarray = field(repr=False, default=None)  # (T+1, M, n) when requested

    def summary(self) -> dict:
        return {
            "runs": self.runs,
            "horizon": self.horizon,
            "seed": self.seed,
            "kind": self.kind,
            "window": list(self.window),
            "window_state_violation": self.window_state_violation,
            "window_input_violation": self.window_input_violation,
            "trajectory_state_violation": self.trajectory_state_violation,
            "max_input_violation": self.max_input_violation,
            "min_chebyshev_coverage": float(np.nanmin(self.chebyshev_coverage)) if self.horizon else None,
            "min_ppi_residence": float(self.ppi_residence.min()),
            "final_mean": self.final_mean.tolist(),
            "final_cov": self.final_cov.tolist(),
            "final_std_error": self.final_std_error.tolist(),
        }


def _outside(P: Polytope, pts):
    return np.any(pts @ P.directions.T > P.offsets, axis=-1)


def monte_carlo(res: SynthesisResult, tpl: OcpTemplate, x0, T: int, M: int, spec: DisturbanceSpec,
                window=(1, 9), init_mode: str = "same", keep_states: bool = False) -> MonteCarloReport:
    """Violation and coverage statistics over ``M`` independent runs.

    The tube controller solves the OCP at the nominal state only, so the
    nominal trajectory is the same in every run; it is computed once and the
    runs differ only through the error ``s_k``, which is propagated for all
    runs together with the same recursion as ``simulate_closed_loop`` (the
    two agree to rounding; batched products may differ in the last bit).
    """
    if M < 1:
        raise InvalidArgumentError("M must be at least 1")
    lo, hi = window
    if not 0 <= lo <= hi <= T:
        raise InvalidArgumentError(f"window {window} does not fit in 0..{T}")
    mdl = res.model
    K = res.terminal.K
    n = mdl.n
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    z0 = init_nominal(x0, res.R_x, init_mode, res.terminal.P)
    nom = nominal_rollout(tpl, z0, T)

    W = np.empty((M, T, n))
    for i in range(M):
        W[i] = sample_disturbance(spec, run_stream(spec.seed, i), T) if T else np.zeros((0, n))

    x = np.empty((T + 1, M, n))
    s = np.empty((T + 1, M, n))
    u = np.empty((T + 1, M, mdl.m))
    s[0] = x0 - z0
    x[0] = nom.z[0] + s[0]
    for k in range(T + 1):
        u[k] = nom.v[k] + s[k] @ K.T
        if k == T:
            break
        x_next = x[k] @ mdl.A.T + u[k] @ mdl.B.T + W[:, k]
        s[k + 1] = x_next - nom.z[k + 1]
        x[k + 1] = nom.z[k + 1] + s[k + 1]

    state_out = _outside(mdl.X, x)
    input_out = _outside(mdl.U, u)
    state_rate = state_out.mean(axis=1)
    input_rate = input_out.mean(axis=1)

    moments = propagate_moments(res.A_K, mdl.mu_w, mdl.Sigma_w, x0 - z0, max(T, 1))
    coverage = np.full(T + 1, np.nan)
    for k in range(1, T + 1):
        E = confidence_ellipsoid(moments.means[k], moments.covariances[k], n, mdl.eps_x)
        coverage[k] = np.mean(E.contains(s[k]))
    residence = np.array([np.mean(res.R_x.polytope.contains(s[k])) for k in range(T + 1)])

    xT = x[T]
    cov = np.cov(xT, rowvar=False, ddof=1) if M > 1 else np.zeros((n, n))
    se = np.sqrt(np.diag(cov) / M) if M > 1 else np.full(n, np.inf)
    return MonteCarloReport(
        runs=M, horizon=T, seed=spec.seed, kind=spec.kind, window=(lo, hi),
        state_violation=state_rate, input_violation=input_rate,
        window_state_violation=float(state_rate[lo:hi + 1].mean()),
        window_input_violation=float(input_rate[lo:hi + 1].mean()),
        trajectory_state_violation=float(state_out[lo:hi + 1].any(axis=0).mean()),
        max_input_violation=float(input_rate[:T].max()) if T else float(input_rate[0]),
        chebyshev_coverage=coverage, ppi_residence=residence,
        final_mean=xT.mean(axis=0), final_cov=np.atleast_2d(cov), final_std_error=se, nominal=nom,
        states=x if keep_states else None)
