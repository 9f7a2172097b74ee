"""Learned minimum-effort guidance with prescribed impact time and impact angle.

Pipeline: sweep extremals of the canonical problem into (state, control)
pairs, fit a small network to them, and fly it in closed loop through the
time-scaling identity.
"""

from .extremal import (
    CostateParams,
    ExtremalTrajectory,
    PropagationDiverged,
    check_colinearity_free,
    check_disconjugacy,
    forward_simulate,
    propagate_extremal,
)
from .frames import (
    CanonicalScenario,
    DimensionalScenario,
    EngagementState,
    InvalidScenario,
    canonicalize,
    decanonicalize,
    load_scenario,
)
from .kernels import BACKEND
from .policy import PolicyNetwork, TrainConfig, feedback_control, load_weights, net_forward, train
from .shooting import ShootingProblem, multistart, solve
from .sim import SimResult, control_effort, run_closed_loop

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CanonicalScenario",
    "CostateParams",
    "DimensionalScenario",
    "EngagementState",
    "ExtremalTrajectory",
    "InvalidScenario",
    "PolicyNetwork",
    "PropagationDiverged",
    "ShootingProblem",
    "SimResult",
    "TrainConfig",
    "canonicalize",
    "check_colinearity_free",
    "check_disconjugacy",
    "control_effort",
    "decanonicalize",
    "feedback_control",
    "forward_simulate",
    "load_scenario",
    "load_weights",
    "multistart",
    "net_forward",
    "propagate_extremal",
    "run_closed_loop",
    "solve",
    "train",
]
