"""Dense array autodiff, special functions and the optimizer used for training."""
from . import autodiff as ad
from .autodiff import Var, conv2d_maxpool, conv2d_maxpool_batch, matmul, softmax_rows
from .gradcheck import GradCheckReport, grad_check
from .optim import AdamState, adam_step
from .special import digamma, log_gamma, normal_cdf

__all__ = [
    "ad",
    "Var",
    "matmul",
    "softmax_rows",
    "conv2d_maxpool",
    "conv2d_maxpool_batch",
    "log_gamma",
    "digamma",
    "normal_cdf",
    "AdamState",
    "adam_step",
    "grad_check",
    "GradCheckReport",
]
