"""Flow-edge guided video completion."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateAlignmentError,
    DimensionMismatchError,
    FlowFillError,
    IterationBudgetError,
)
from .fusion import FusionConfig
from .neighbors import ChainConfig
from .pipeline import PipelineConfig, PipelineResult, run
from .synth import synth_scene

__all__ = [
    "ChainConfig",
    "ConvergenceError",
    "DataError",
    "DegenerateAlignmentError",
    "DimensionMismatchError",
    "FlowFillError",
    "FusionConfig",
    "IterationBudgetError",
    "PipelineConfig",
    "PipelineResult",
    "run",
    "synth_scene",
]
