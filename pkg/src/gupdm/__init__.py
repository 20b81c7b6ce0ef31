"""Underwater image enhancement with hypernetwork-conditioned convolutions on a small numpy autodiff engine."""

from .exceptions import (
    ConfigError,
    ContractError,
    DecodeError,
    DimensionError,
    DomainError,
    EstimationError,
    GupdmError,
    NumericError,
)
from .tensor import Tensor, no_grad
from .network import GupdmModel, ModelConfig, enhance_image
from .trainer import TrainConfig, train, train_step
from .estimator import GUPDMEnhancer, UDCPTransmission

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DecodeError",
    "DimensionError",
    "DomainError",
    "EstimationError",
    "GupdmError",
    "NumericError",
    "Tensor",
    "no_grad",
    "GupdmModel",
    "ModelConfig",
    "enhance_image",
    "TrainConfig",
    "train",
    "train_step",
    "GUPDMEnhancer",
    "UDCPTransmission",
]
