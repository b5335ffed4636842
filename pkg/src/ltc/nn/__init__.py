"""Minimal differentiable-layer kernel: hand-written passes plus Adam."""

from .layers import (
    Activation,
    AdditiveAttention,
    BiLSTM,
    CausalConv1D,
    Layer,
    MaxPool1D,
    Sequential,
    TimeDistributedDense,
    TransposedConv1D,
    Upsample1D,
)
from .params import ParamStore, adam_step, glorot_uniform, load_params, save_params

__all__ = [
    "Activation",
    "AdditiveAttention",
    "BiLSTM",
    "CausalConv1D",
    "Layer",
    "MaxPool1D",
    "ParamStore",
    "Sequential",
    "TimeDistributedDense",
    "TransposedConv1D",
    "Upsample1D",
    "adam_step",
    "glorot_uniform",
    "load_params",
    "save_params",
]
