"""Stochastic tube MPC with polytopic probabilistic positively invariant sets."""

from .errors import (
    ControllerFailureError,
    EmptySetError,
    InvalidArgumentError,
    InvalidModelError,
    NonTerminationError,
    NumericFailureError,
    PpiMpcError,
    SolverError,
    SynthesisError,
    TighteningInfeasibleError,
    UnboundedSupportError,
)
from .geometry import Ellipsoid, Polytope
from .invariance import PpiSet, build_ppi, direction_fan, max_pi_set, propagate_moments
from .mpc import OcpTemplate, build_ocp, control_step, solve_ocp
from .optim import LinearProgram, QuadraticProgram, Status, solve_lp, solve_qp
from .sim import DisturbanceSpec, monte_carlo, simulate_closed_loop
from .synthesis import SynthesisResult, SystemModel, solve_dare, synthesize

__version__ = "0.1.0"
