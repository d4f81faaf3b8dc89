"""Learning-based one-bit ML detection for uplink multiuser MIMO."""

from onebit_ml.numerics import (
    DomainError,
    SaturationError,
    rng_stream,
    sample_gaussian,
    std_normal_cdf,
    std_normal_cdf_inv,
)
from onebit_ml.signal_model import (
    LinkParams,
    SymbolTable,
    build_symbol_table,
    gen_rayleigh_channel,
    lift_channel,
)
from onebit_ml.learning import LikelihoodTable, TrainConfig

__all__ = [
    "DomainError",
    "SaturationError",
    "rng_stream",
    "sample_gaussian",
    "std_normal_cdf",
    "std_normal_cdf_inv",
    "LinkParams",
    "SymbolTable",
    "build_symbol_table",
    "gen_rayleigh_channel",
    "lift_channel",
    "LikelihoodTable",
    "TrainConfig",
]
