from .tensor import Tensor, no_grad, grad_enabled, set_debug_checks
from .gradcheck import grad_check
from .layers import (
    Module,
    Linear,
    LayerNorm,
    MultiHeadAttention,
    FeedForward,
    EncoderBlock,
    MLPHead,
)

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "set_debug_checks",
    "grad_check",
    "Module",
    "Linear",
    "LayerNorm",
    "MultiHeadAttention",
    "FeedForward",
    "EncoderBlock",
    "MLPHead",
]
