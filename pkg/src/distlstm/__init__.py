"""Online training of an LSTM regressor across a network of nodes.

Four trainers share one augmented state-space model of the LSTM: SGD,
EKF/DEKF (diffusion extended Kalman filtering with Metropolis weights) and
PF/MCDPF (particle filtering with random-walk particle exchange).
"""

from .distributed import Graph, metropolis_weights
from .estimators import (
    DistributedLSTMRegressor,
    EKFLSTMRegressor,
    PFLSTMRegressor,
    SGDLSTMRegressor,
)
from .harness import ExperimentConfig, MetricsLog, emit_csv, run_experiment, sweep
from .lstm import CellState, LstmParams, Pooling, n_params, pack, predict, run_sequence, unpack
from .state_space import LstmStateSpace, NoiseSpec

__all__ = [
    "CellState",
    "DistributedLSTMRegressor",
    "EKFLSTMRegressor",
    "ExperimentConfig",
    "Graph",
    "LstmParams",
    "LstmStateSpace",
    "MetricsLog",
    "NoiseSpec",
    "PFLSTMRegressor",
    "Pooling",
    "SGDLSTMRegressor",
    "emit_csv",
    "metropolis_weights",
    "n_params",
    "pack",
    "predict",
    "run_experiment",
    "run_sequence",
    "sweep",
    "unpack",
]

__version__ = "0.1.0"
