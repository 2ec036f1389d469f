"""Run configuration: strict JSON parsing with validation up front.

Layout (every block except ``model`` may be omitted)::

    {
      "schema_version": 1,
      "model": {"A", "B", "mu_w", "Sigma_w", "X": {"directions", "offsets"},
                "U": {...}, "eps_x", "eps_u"},
      "controller": {"Q", "R", "K", "N", "r", "init_mode"},
      "simulation": {"x0", "T", "M", "disturbance", "df", "seed", "window"},
      "output": {"directory", "formats"}
    }

``X``/``U`` offsets must be positive; rows are rescaled to unit offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import casestudy
from .errors import InvalidArgumentError, InvalidModelError
from .geometry import Polytope
from .sim import KINDS, DisturbanceSpec
from .synthesis import SystemModel

SCHEMA_VERSION = 1

_TOP = {"schema_version", "model", "controller", "simulation", "output"}
_MODEL = {"A", "B", "mu_w", "Sigma_w", "X", "U", "eps_x", "eps_u"}
_CONTROLLER = {"Q", "R", "K", "N", "r", "init_mode"}
_SIMULATION = {"x0", "T", "M", "disturbance", "df", "seed", "window"}
_OUTPUT = {"directory", "formats"}
_POLY = {"directions", "offsets"}


@dataclass
class ControllerConfig:
    Q: np.ndarray
    R: np.ndarray
    K: np.ndarray | None = None
    N: int = casestudy.N
    r: int = casestudy.FAN_SIZE
    init_mode: str = "same"


@dataclass
class SimulationConfig:
    x0: np.ndarray
    T: int = casestudy.T
    M: int = casestudy.RUNS
    disturbance: str = "gaussian"
    df: float | None = None
    seed: int = 0
    window: tuple = (1, 9)


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("json", "csv")


@dataclass
class RunConfig:
    model: SystemModel
    controller: ControllerConfig
    simulation: SimulationConfig
    output: OutputConfig = field(default_factory=OutputConfig)

    def disturbance_spec(self, seed: int | None = None) -> DisturbanceSpec:
        s = self.simulation
        return DisturbanceSpec(s.disturbance, self.model.mu_w, self.model.Sigma_w,
                               s.seed if seed is None else seed, s.df)


def _block(doc, name, allowed, required=()):
    if not isinstance(doc, dict):
        raise InvalidArgumentError(f"{name} must be an object")
    unknown = set(doc) - allowed
    if unknown:
        raise InvalidArgumentError(f"unknown field(s) in {name}: {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise InvalidArgumentError(f"missing field(s) in {name}: {', '.join(missing)}")
    return doc


def _matrix(x, name):
    try:
        a = np.atleast_2d(np.asarray(x, dtype=float))
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a numeric matrix") from None
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


def _vector(x, name):
    return _matrix(x, name).ravel()


def _int(x, name, lo):
    if isinstance(x, bool) or not isinstance(x, int) or x < lo:
        raise InvalidArgumentError(f"{name} must be an integer >= {lo}")
    return x


def _constraint_set(d, name):
    _block(d, name, _POLY, _POLY)
    H = _matrix(d["directions"], f"{name}.directions")
    h = _vector(d["offsets"], f"{name}.offsets")
    if H.shape[0] != h.shape[0]:
        raise InvalidArgumentError(f"{name} has {H.shape[0]} directions but {h.shape[0]} offsets")
    if np.any(h <= 0):
        raise InvalidModelError(f"{name} must contain the origin in its interior (offsets > 0)")
    return Polytope.normalized(H, h)


def parse_config(doc: dict) -> RunConfig:
    _block(doc, "config", _TOP, ("model",))
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InvalidArgumentError(f"unsupported schema_version {doc['schema_version']!r}")

    md = _block(doc["model"], "model", _MODEL, tuple(sorted(_MODEL)))
    for key in ("eps_x", "eps_u"):
        eps = md[key]
        if isinstance(eps, bool) or not isinstance(eps, (int, float)) or not 0 < eps < 1:
            raise InvalidModelError(f"model.{key} must lie in (0, 1), got {eps!r}")
    model = SystemModel(_matrix(md["A"], "A"), _matrix(md["B"], "B"), _vector(md["mu_w"], "mu_w"),
                        _matrix(md["Sigma_w"], "Sigma_w"), _constraint_set(md["X"], "X"),
                        _constraint_set(md["U"], "U"), float(md["eps_x"]), float(md["eps_u"]))

    cd = _block(doc.get("controller", {}), "controller", _CONTROLLER)
    ctrl = ControllerConfig(
        Q=_matrix(cd["Q"], "Q") if "Q" in cd else np.eye(model.n),
        R=_matrix(cd["R"], "R") if "R" in cd else np.eye(model.m),
        K=_matrix(cd["K"], "K") if cd.get("K") is not None else None,
        N=_int(cd.get("N", casestudy.N), "controller.N", 1),
        r=_int(cd.get("r", casestudy.FAN_SIZE), "controller.r", model.n + 1),
        init_mode=cd.get("init_mode", "same"),
    )
    if ctrl.Q.shape != (model.n, model.n) or ctrl.R.shape != (model.m, model.m):
        raise InvalidModelError("Q or R has the wrong dimension")
    for name, M in (("Q", ctrl.Q), ("R", ctrl.R)):
        if np.max(np.abs(M - M.T)) > 1e-12 or np.linalg.eigvalsh(M).min() <= 0:
            raise InvalidModelError(f"{name} must be symmetric positive definite")
    if ctrl.K is not None and ctrl.K.shape != (model.m, model.n):
        raise InvalidModelError(f"K must be {model.m}x{model.n}")
    if ctrl.init_mode not in ("same", "project"):
        raise InvalidArgumentError("controller.init_mode must be 'same' or 'project'")

    sd = _block(doc.get("simulation", {}), "simulation", _SIMULATION)
    sim = SimulationConfig(
        x0=_vector(sd.get("x0", np.zeros(model.n)), "x0"),
        T=_int(sd.get("T", casestudy.T), "simulation.T", 0),
        M=_int(sd.get("M", casestudy.RUNS), "simulation.M", 1),
        disturbance=sd.get("disturbance", "gaussian"),
        df=sd.get("df"),
        seed=_int(sd.get("seed", 0), "simulation.seed", 0),
        window=tuple(sd.get("window", (1, 9))),
    )
    if sim.x0.shape != (model.n,):
        raise InvalidArgumentError(f"x0 must have length {model.n}")
    if sim.disturbance not in KINDS:
        raise InvalidArgumentError(f"simulation.disturbance must be one of {KINDS}")
    if len(sim.window) != 2 or not all(isinstance(w, int) for w in sim.window):
        raise InvalidArgumentError("simulation.window must be two integers")
    # validates df, seed range and covariance
    DisturbanceSpec(sim.disturbance, model.mu_w, model.Sigma_w, sim.seed, sim.df)

    od = _block(doc.get("output", {}), "output", _OUTPUT)
    out = OutputConfig(directory=str(od.get("directory", "out")), formats=tuple(od.get("formats", ("json", "csv"))))
    return RunConfig(model, ctrl, sim, out)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc)


def case_study_config() -> dict:
    """The DC-DC converter benchmark as a config document."""
    return {
        "schema_version": SCHEMA_VERSION,
        "model": {
            "A": casestudy.A.tolist(),
            "B": casestudy.B.tolist(),
            "mu_w": casestudy.MU_W.tolist(),
            "Sigma_w": casestudy.SIGMA_W.tolist(),
            "X": {"directions": [[1, 0], [-1, 0], [0, 1], [0, -1]], "offsets": [2, 2, 3, 3]},
            "U": {"directions": [[1], [-1]], "offsets": [0.4, 0.4]},
            "eps_x": casestudy.EPS,
            "eps_u": casestudy.EPS,
        },
        "controller": {"Q": casestudy.Q.tolist(), "R": casestudy.R.tolist(), "K": None, "N": casestudy.N,
                       "r": casestudy.FAN_SIZE, "init_mode": "same"},
        "simulation": {"x0": casestudy.X0.tolist(), "T": casestudy.T, "M": casestudy.RUNS,
                       "disturbance": "gaussian", "df": None, "seed": 0, "window": [1, 9]},
        "output": {"directory": "out", "formats": ["json", "csv"]},
    }
