"""Contrastive time-series representation learning with adaptively selected
augmentations: a differentiable selection policy picks transforms by
information-aware criteria (variety + fidelity), and the learned
representations are evaluated on forecasting and classification."""

from .augment import TransformSpec, registry
from .data import Batch, Dataset, SplitSpec, TimeSeries, normalize_zscore
from .encoder import DilatedConvEncoder, EncoderConfig
from .evaluation import ForecastTask, classify_eval, forecast_eval, summarize
from .training import TrainConfig, TrainState, fit

__all__ = [
    "Batch",
    "Dataset",
    "DilatedConvEncoder",
    "EncoderConfig",
    "ForecastTask",
    "SplitSpec",
    "TimeSeries",
    "TrainConfig",
    "TrainState",
    "TransformSpec",
    "classify_eval",
    "fit",
    "forecast_eval",
    "normalize_zscore",
    "registry",
    "summarize",
]

__version__ = "0.1.0"
