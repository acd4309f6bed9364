"""Federated low-rank adaptation simulator (native core)."""

from florg._core import (
    AdapterState,
    ConfigError,
    ContractViolation,
    DivergenceError,
    NotPsdError,
    aggregation_error,
    delta_w,
    effective_weight,
    grad_a,
    gram_aggregate,
    init_adapter,
    local_update,
    orthonormal_columns,
    run_experiment,
    server_realign,
    sym_eig,
    thin_svd,
)
from florg._core import __version__

__all__ = [
    "AdapterState",
    "ConfigError",
    "ContractViolation",
    "DivergenceError",
    "NotPsdError",
    "aggregation_error",
    "delta_w",
    "effective_weight",
    "grad_a",
    "gram_aggregate",
    "init_adapter",
    "local_update",
    "orthonormal_columns",
    "run_experiment",
    "server_realign",
    "sym_eig",
    "thin_svd",
    "__version__",
]
