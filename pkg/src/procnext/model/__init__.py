"""Graph-convolutional recurrent model for next-activity prediction."""

from .core import DataDims, ModelConfig, NextActivityModel, parameter_shapes
from .layers import (
    attribute_forward,
    classify,
    gcn_forward,
    grnn_forward,
    grnn_step,
    nll_loss,
    readout,
    softmax,
)

__all__ = [
    "DataDims",
    "ModelConfig",
    "NextActivityModel",
    "parameter_shapes",
    "attribute_forward",
    "classify",
    "gcn_forward",
    "grnn_forward",
    "grnn_step",
    "nll_loss",
    "readout",
    "softmax",
]
