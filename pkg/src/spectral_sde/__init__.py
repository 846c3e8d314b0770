"""
Spectral-SDE - spectral disentanglement and enhancement for contrastive features.

This package splits feature matrices into strong, weak and noise subspaces,
perturbs them on a curriculum schedule, and trains paired encoders with a
dual-domain (feature plus spectral) contrastive objective.
"""

__version__ = "0.1.0"

from .errors import ErrorLevel, SDEError
from .spectral import SpectralDecomposition, SubspacePartition, partition, svd
from .enhance import DeltaSpec, ScheduleState, build_delta, enhance
from .losses import LossReport, total_loss

__all__ = [
    "DeltaSpec",
    "ErrorLevel",
    "LossReport",
    "SDEError",
    "ScheduleState",
    "SpectralDecomposition",
    "SubspacePartition",
    "build_delta",
    "enhance",
    "partition",
    "svd",
    "total_loss",
]
