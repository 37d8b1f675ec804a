"""A small reverse-mode differentiation framework with the layers SAIL needs."""

from . import functional
from .functional import bce_with_logits, cross_entropy, layer_norm, log_softmax, mse, softmax
from .layers import (
    LSTM,
    Activation,
    Dense,
    Dropout,
    LayerNorm,
    LSTMLayer,
    Module,
    Parameter,
    SelfAttention1D,
    Sequential,
)
from .optim import Adam, clip_grad_norm
from .serialize import load_into, module_state, read_state, save_module
from .tensor import Tensor, as_tensor, concat, stack

__all__ = [
    "Activation",
    "Adam",
    "Dense",
    "Dropout",
    "LSTM",
    "LSTMLayer",
    "LayerNorm",
    "Module",
    "Parameter",
    "SelfAttention1D",
    "Sequential",
    "Tensor",
    "as_tensor",
    "bce_with_logits",
    "clip_grad_norm",
    "concat",
    "cross_entropy",
    "functional",
    "layer_norm",
    "load_into",
    "log_softmax",
    "module_state",
    "mse",
    "read_state",
    "save_module",
    "softmax",
    "stack",
]
