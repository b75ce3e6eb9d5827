"""Synthetic benchmark: fit a distribution's parameters to fixed targets with each estimator."""
from .config import ESTIMATORS, ExperimentConfig, load_config
from .synthetic import (
    TrajectoryRecord,
    compare_estimators,
    cumulative_average,
    grid_search_optimum,
    run_synthetic,
)

__all__ = [
    "ESTIMATORS",
    "ExperimentConfig",
    "TrajectoryRecord",
    "compare_estimators",
    "cumulative_average",
    "grid_search_optimum",
    "load_config",
    "run_synthetic",
]
