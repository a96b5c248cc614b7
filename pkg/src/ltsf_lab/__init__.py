"""Configurable Transformer laboratory for long-term time series forecasting."""

from .config import DataConfig, ModelConfig, TrainConfig
from .model import ForecastModel, assemble, load_checkpoint, save_checkpoint
from .presets import preset

__all__ = [
    "DataConfig", "ModelConfig", "TrainConfig",
    "ForecastModel", "assemble", "load_checkpoint", "save_checkpoint",
    "preset",
]
__version__ = "0.1.0"
