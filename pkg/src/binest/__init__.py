"""Unbiased estimation of the binomial N with unknown p, reinforced by Pascal samples."""

from importlib.metadata import PackageNotFoundError, version

from binest.distributions import ModelParams, RngSeed, make_rng
from binest.errors import (
    DegeneratePilotError,
    DomainError,
    ReplicationError,
    RunawayStoppingError,
    ToleranceError,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "RngSeed",
    "make_rng",
    "DomainError",
    "DegeneratePilotError",
    "ToleranceError",
    "RunawayStoppingError",
    "ReplicationError",
]
