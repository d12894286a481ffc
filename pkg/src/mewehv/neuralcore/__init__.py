from .tensor import (Tensor, as_tensor, backward, concat, finite_difference_check,
                     log_softmax, softmax)
from .layers import (BatchNorm1dLayer, Conv1dLayer, LinearLayer, LstmLayer,
                     SoftAttention, dropout)
from .optim import Adam
from . import checkpoint

__all__ = [
    "Tensor", "as_tensor", "backward", "concat", "finite_difference_check",
    "log_softmax", "softmax",
    "Conv1dLayer", "BatchNorm1dLayer", "LstmLayer", "SoftAttention",
    "LinearLayer", "dropout", "Adam", "checkpoint",
]
