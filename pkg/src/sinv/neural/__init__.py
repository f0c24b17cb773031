"""Minimal sequence-model stack with exact per-layer backprop."""

from .gradcheck import GradCheckReport, check_layer, check_model, grad_check
from .kernels import BACKEND
from .layers import (
    BatchNorm,
    BiGRU,
    Context,
    Dense,
    Dropout,
    GRU,
    LayerFusion,
    SelfAttention,
    Upsample2x,
)
from .optim import Adam

__all__ = [
    "Adam",
    "BACKEND",
    "BatchNorm",
    "BiGRU",
    "Context",
    "Dense",
    "Dropout",
    "GRU",
    "GradCheckReport",
    "LayerFusion",
    "SelfAttention",
    "Upsample2x",
    "check_layer",
    "check_model",
    "grad_check",
]
