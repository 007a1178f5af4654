"""Analytical iteration-time model for data-parallel training with and
without gradient compression."""

from gradsim.analysis import (
    CompressionRequirement,
    Crossover,
    SweepResult,
    SweepRow,
    required_compression,
    sweep_bandwidth,
    sweep_compute_speedup,
    sweep_encode_tradeoff,
    sweep_workers,
    tradeoff_scheme,
)
from gradsim.costmodel import Collective, NetworkProfile, Payload, comm_time
from gradsim.engine import IterationEstimate, estimate, linear_scaling_gap, speedup
from gradsim.errors import (
    ConfigurationError,
    GradsimError,
    ProfileParseError,
    UndefinedRatioError,
    ValidationError,
)
from gradsim.profiles import ProfileBundle, builtin_presets, dump_bundle, get_preset, load_bundle
from gradsim.schemes import (
    CompressionScheme,
    ModelProfile,
    MSTopK,
    PowerSGD,
    SignSGD,
    SyncSGD,
    bucketize,
    effective_compression_ratio,
)

__version__ = "0.1.0"
