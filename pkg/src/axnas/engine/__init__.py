"""Minimal reverse-mode autodiff tensor engine with exact and
LUT-emulated 8-bit convolution arithmetic."""

from . import functional
from .modules import (
    NUM_OPS,
    AvgPool3,
    BatchNorm2d,
    Conv2d,
    DilConv,
    FactorizedReduce,
    Identity,
    Linear,
    MaxPool3,
    Module,
    ModuleList,
    OpKind,
    ReLUConvBN,
    SepConv,
    Zero,
    make_op,
)
from .optim import SGD, Adam, adam_step, cosine_lr, sgd_step
from .quant import FP32, ExecMode, LookupCounter, lut_conv2d, quant8
from .tensor import DTYPE, Tensor, as_tensor

__all__ = [
    "functional",
    "Tensor", "as_tensor", "DTYPE",
    "Module", "ModuleList",
    "Conv2d", "BatchNorm2d", "Linear", "Identity", "Zero",
    "MaxPool3", "AvgPool3", "SepConv", "DilConv", "FactorizedReduce",
    "ReLUConvBN", "OpKind", "NUM_OPS", "make_op",
    "SGD", "Adam", "sgd_step", "adam_step", "cosine_lr",
    "ExecMode", "FP32", "quant8", "LookupCounter", "lut_conv2d",
]
