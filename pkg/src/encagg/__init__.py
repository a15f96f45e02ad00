"""Two-round clustering aggregation for federated learning with a pseudo-gradient generator."""

__version__ = "0.1.0"

from .baselines import aggregate
from .clustering import NOISE, dbscan, select_radius
from .config import ExperimentConfig, dump_config, parse_config
from .errors import (
    ConfigError,
    DegenerateCovariance,
    EmptySelection,
    EncAggError,
    InconsistentLabels,
    InvalidInput,
    NonFiniteLoss,
    SearchFailed,
)
from .filtering import filter_round_one
from .pipeline import EnCAggConfig, RoundRecord, run_round
from .projection import GradientMatrix, project_gradients
from .simulation import run_experiment

__all__ = [
    "NOISE",
    "ConfigError",
    "DegenerateCovariance",
    "EmptySelection",
    "EnCAggConfig",
    "EncAggError",
    "ExperimentConfig",
    "GradientMatrix",
    "InconsistentLabels",
    "InvalidInput",
    "NonFiniteLoss",
    "RoundRecord",
    "SearchFailed",
    "aggregate",
    "dbscan",
    "dump_config",
    "filter_round_one",
    "parse_config",
    "project_gradients",
    "run_experiment",
    "run_round",
]
