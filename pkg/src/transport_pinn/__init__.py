"""Physics-informed neural network for the 1D transport equation u_t + c u_x = 0.

Everything runs on a small recorded-graph autodiff engine over numpy arrays.
"""

from .autodiff import AutodiffError, Graph, NonFiniteError, forward_tangent, record_tangent_as_graph, reverse_gradient
from .config import PRESETS, ConfigError, TrainConfig
from .loss import LossBreakdown, LossWeights, build_loss, loss_gradient, pinn_loss
from .network import InitScheme, NetworkParams, forward, forward_with_input_derivs, init_network
from .optim import AdamState, OptimizerConfig, adam_step, sgd_step
from .sampling import CollocationSet, SpaceTimeDomain
from .trainer import (
    RunLog,
    TrainingError,
    evaluate_model,
    replicate_manual_table,
    run_training,
    train_forward,
    train_inverse,
)
from .transport import ConditionSpec, ResidualSpec, boundary_value, exact_solution, initial_condition, residual

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AutodiffError",
    "CollocationSet",
    "ConditionSpec",
    "ConfigError",
    "Graph",
    "InitScheme",
    "LossBreakdown",
    "LossWeights",
    "NetworkParams",
    "NonFiniteError",
    "OptimizerConfig",
    "PRESETS",
    "ResidualSpec",
    "RunLog",
    "SpaceTimeDomain",
    "TrainConfig",
    "TrainingError",
    "adam_step",
    "boundary_value",
    "build_loss",
    "evaluate_model",
    "exact_solution",
    "forward",
    "forward_tangent",
    "forward_with_input_derivs",
    "init_network",
    "initial_condition",
    "loss_gradient",
    "pinn_loss",
    "record_tangent_as_graph",
    "replicate_manual_table",
    "residual",
    "reverse_gradient",
    "run_training",
    "sgd_step",
    "train_forward",
    "train_inverse",
]
