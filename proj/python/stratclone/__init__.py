"""Stratified expert cloning: Python bindings to the C++ core."""

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    NumericalError,
    __version__,
    ablate,
    aer_loss_continuous,
    aer_loss_discrete,
    bc_loss_continuous,
    build_centroids,
    evaluate,
    gen_data,
    kmeans,
    mean_return_gap,
    nuclear_norm,
    nuclear_norm_grad,
    select_from_distances,
    singular_values,
    stratify_levels,
    sweep_lambda,
    train,
    validate_config,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "NumericalError",
    "__version__",
    "ablate",
    "aer_loss_continuous",
    "aer_loss_discrete",
    "bc_loss_continuous",
    "build_centroids",
    "evaluate",
    "gen_data",
    "kmeans",
    "mean_return_gap",
    "nuclear_norm",
    "nuclear_norm_grad",
    "select_from_distances",
    "singular_values",
    "stratify_levels",
    "sweep_lambda",
    "train",
    "validate_config",
]
