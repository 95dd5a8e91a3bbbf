"""Layer modules and the candidate operation set.

A tiny parameter-container hierarchy: modules register parameters
(gradient-bearing tensors), buffers (plain arrays such as batchnorm
running statistics), and child modules by attribute assignment, and can
enumerate them by dotted name for optimizers and checkpoints.

The convolutional candidate ops (separable and dilated-separable blocks)
honor an ExecMode: under quant8 they build the exact fp32 graph, run a
graph-free LUT forward for the whole block, and splice the approximate
values in as their output (block-level straight-through estimator).
Pooling, skip, and zero always execute exactly.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import functional as F
from .functional import bn_forward_data
from .quant import FP32, ExecMode, lut_conv2d
from .tensor import DTYPE, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Named parameter/buffer arrays, for checkpointing."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: b for name, b in self.named_buffers()})
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        own = self.state_arrays()
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, arr in own.items():
            src = np.asarray(state[name], dtype=arr.dtype)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            np.copyto(arr, src)


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._list: list[Module] = []
        for m in mods:
            self.append(m)

    def append(self, mod: Module):
        setattr(self, str(len(self._list)), mod)
        self._list.append(mod)

    def __iter__(self):
        return iter(self._list)

    def __getitem__(self, i):
        return self._list[i]

    def __len__(self):
        return len(self._list)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def kaiming_conv(rng, out_ch, in_ch_per_group, kh, kw):
    fan_in = in_ch_per_group * kh * kw
    std = np.sqrt(2.0 / fan_in)
    return rng.standard_normal((out_ch, in_ch_per_group, kh, kw)) * std


# ---------------------------------------------------------------------------
# Basic layers
# ---------------------------------------------------------------------------

class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, *, stride=1, padding="same",
                 dilation=1, groups=1, bias=False, rng=None,
                 approximable=False):
        super().__init__()
        if in_ch % groups or out_ch % groups:
            raise ValueError(f"groups {groups} must divide channels {in_ch}->{out_ch}")
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.groups = groups
        self.approximable = approximable
        self.weight = Tensor(
            kaiming_conv(rng, out_ch, in_ch // groups, kernel, kernel),
            requires_grad=True,
        )
        self.bias = None
        if bias:
            self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def forward(self, x, mode: ExecMode = FP32):
        return F.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, dilation=self.dilation,
                        groups=self.groups, mode=mode,
                        approximable=self.approximable)

    def lut_forward_data(self, xd, multiplier):
        bd = self.bias.data if self.bias is not None else None
        return lut_conv2d(xd, self.weight.data, bd, self.stride, self.padding,
                          self.dilation, self.groups, multiplier)


class BatchNorm2d(Module):
    def __init__(self, ch, *, affine=True, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(ch), requires_grad=True) if affine else None
        self.beta = Tensor(np.zeros(ch), requires_grad=True) if affine else None
        self.register_buffer("running_mean", np.zeros(ch, dtype=DTYPE))
        self.register_buffer("running_var", np.ones(ch, dtype=DTYPE))

    def forward(self, x, update_running: bool | None = None):
        return F.batchnorm(x, self.gamma, self.beta, self.running_mean,
                           self.running_var, training=self.training,
                           momentum=self.momentum, eps=self.eps,
                           update_running=update_running)

    def forward_data(self, xd, update_running: bool):
        gd = self.gamma.data if self.gamma is not None else None
        bd = self.beta.data if self.beta is not None else None
        return bn_forward_data(xd, gd, bd, self.running_mean, self.running_var,
                               training=self.training, momentum=self.momentum,
                               eps=self.eps, update_running=update_running)


class Linear(Module):
    def __init__(self, in_features, out_features, *, rng=None):
        super().__init__()
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Tensor(rng.uniform(-bound, bound, (out_features, in_features)),
                             requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, out_features), requires_grad=True)

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Identity(Module):
    def forward(self, x):
        return x


class Zero(Module):
    def __init__(self, stride=1):
        super().__init__()
        self.stride = stride

    def forward(self, x):
        return F.subsample_zero(x, self.stride)


class MaxPool3(Module):
    def __init__(self, stride=1):
        super().__init__()
        self.stride = stride

    def forward(self, x):
        return F.max_pool3(x, self.stride)


class AvgPool3(Module):
    def __init__(self, stride=1):
        super().__init__()
        self.stride = stride

    def forward(self, x):
        return F.avg_pool3(x, self.stride)


# ---------------------------------------------------------------------------
# Composite conv blocks
# ---------------------------------------------------------------------------

class _QuantBlock(Module):
    """Shared quant-mode plumbing: exact graph + spliced LUT forward."""

    mode: ExecMode = FP32

    def forward(self, x):
        update = self.training and not self.mode.is_quant
        y = self.graph_forward(x, update_running=update)
        if self.mode.is_quant:
            a = self.approx_forward(x.data)
            y = F.ste_splice(y, a)
        return y


class ReLUConvBN(_QuantBlock):
    """relu -> conv -> batchnorm (the 1x1 cell-preprocessing block)."""

    def __init__(self, in_ch, out_ch, kernel=1, *, stride=1, affine=True,
                 rng=None, mode: ExecMode = FP32, approximable=False):
        super().__init__()
        self.mode = mode
        self.conv = Conv2d(in_ch, out_ch, kernel, stride=stride, rng=rng,
                           approximable=approximable)
        self.bn = BatchNorm2d(out_ch, affine=affine)

    def graph_forward(self, x, update_running=None):
        return self.bn(self.conv(F.relu(x)), update_running=update_running)

    def approx_forward(self, xd):
        a = np.maximum(xd, 0.0)
        a = self.conv.lut_forward_data(a, self.mode.multiplier)
        return self.bn.forward_data(a, update_running=self.training)


class SepConv(_QuantBlock):
    """Separable convolution block, applied twice: (relu -> depthwise ->
    pointwise 1x1 -> batchnorm) x 2, the second repetition at stride 1."""

    def __init__(self, ch, kernel, stride, *, affine=True, rng=None,
                 mode: ExecMode = FP32):
        super().__init__()
        self.mode = mode
        self.dw1 = Conv2d(ch, ch, kernel, stride=stride, groups=ch, rng=rng,
                          approximable=True)
        self.pw1 = Conv2d(ch, ch, 1, rng=rng, approximable=True)
        self.bn1 = BatchNorm2d(ch, affine=affine)
        self.dw2 = Conv2d(ch, ch, kernel, stride=1, groups=ch, rng=rng,
                          approximable=True)
        self.pw2 = Conv2d(ch, ch, 1, rng=rng, approximable=True)
        self.bn2 = BatchNorm2d(ch, affine=affine)

    def graph_forward(self, x, update_running=None):
        y = self.bn1(self.pw1(self.dw1(F.relu(x))), update_running=update_running)
        y = self.bn2(self.pw2(self.dw2(F.relu(y))), update_running=update_running)
        return y

    def approx_forward(self, xd):
        m = self.mode.multiplier
        a = np.maximum(xd, 0.0)
        a = self.dw1.lut_forward_data(a, m)
        a = self.pw1.lut_forward_data(a, m)
        a = self.bn1.forward_data(a, update_running=self.training)
        a = np.maximum(a, 0.0)
        a = self.dw2.lut_forward_data(a, m)
        a = self.pw2.lut_forward_data(a, m)
        return self.bn2.forward_data(a, update_running=self.training)


class DilConv(_QuantBlock):
    """Dilated separable block: relu -> depthwise (dilation 2) ->
    pointwise 1x1 -> batchnorm."""

    def __init__(self, ch, kernel, stride, *, dilation=2, affine=True,
                 rng=None, mode: ExecMode = FP32):
        super().__init__()
        self.mode = mode
        self.dw = Conv2d(ch, ch, kernel, stride=stride, dilation=dilation,
                         groups=ch, rng=rng, approximable=True)
        self.pw = Conv2d(ch, ch, 1, rng=rng, approximable=True)
        self.bn = BatchNorm2d(ch, affine=affine)

    def graph_forward(self, x, update_running=None):
        return self.bn(self.pw(self.dw(F.relu(x))), update_running=update_running)

    def approx_forward(self, xd):
        m = self.mode.multiplier
        a = np.maximum(xd, 0.0)
        a = self.dw.lut_forward_data(a, m)
        a = self.pw.lut_forward_data(a, m)
        return self.bn.forward_data(a, update_running=self.training)


class FactorizedReduce(_QuantBlock):
    """Stride-2 channel-preserving reduction: relu, then two offset 1x1
    stride-2 convs concatenated, then batchnorm."""

    def __init__(self, in_ch, out_ch, *, affine=True, rng=None,
                 mode: ExecMode = FP32, approximable=False):
        super().__init__()
        self.mode = mode
        half = out_ch // 2
        self.conv1 = Conv2d(in_ch, out_ch - half, 1, stride=2, padding=0,
                            rng=rng, approximable=approximable)
        self.conv2 = Conv2d(in_ch, half, 1, stride=2, padding=0, rng=rng,
                            approximable=approximable)
        self.bn = BatchNorm2d(out_ch, affine=affine)

    def graph_forward(self, x, update_running=None):
        x = F.relu(x)
        y = F.concat([self.conv1(x), self.conv2(F.shift11(x))], axis=1)
        return self.bn(y, update_running=update_running)

    def approx_forward(self, xd):
        m = self.mode.multiplier
        a = np.maximum(xd, 0.0)
        shifted = np.zeros_like(a)
        shifted[:, :, :-1, :-1] = a[:, :, 1:, 1:]
        y = np.concatenate(
            [self.conv1.lut_forward_data(a, m),
             self.conv2.lut_forward_data(shifted, m)], axis=1)
        return self.bn.forward_data(y, update_running=self.training)


# ---------------------------------------------------------------------------
# The candidate operation set
# ---------------------------------------------------------------------------

class OpKind(Enum):
    """The eight candidate operations, in stable declaration order; member
    index i is the i-th coordinate of every per-edge architecture vector."""

    sep_conv_3x3 = 0
    sep_conv_5x5 = 1
    dil_conv_3x3 = 2
    dil_conv_5x5 = 3
    max_pool_3x3 = 4
    avg_pool_3x3 = 5
    skip_connect = 6
    zero = 7


NUM_OPS = len(OpKind)


def make_op(kind: OpKind, ch: int, stride: int, *, affine: bool, rng,
            mode: ExecMode = FP32) -> Module:
    """Instantiate one candidate op.  Only the separable/dilated blocks
    honor quant mode; pooling, skip, and zero are always exact."""
    if kind is OpKind.sep_conv_3x3:
        return SepConv(ch, 3, stride, affine=affine, rng=rng, mode=mode)
    if kind is OpKind.sep_conv_5x5:
        return SepConv(ch, 5, stride, affine=affine, rng=rng, mode=mode)
    if kind is OpKind.dil_conv_3x3:
        return DilConv(ch, 3, stride, affine=affine, rng=rng, mode=mode)
    if kind is OpKind.dil_conv_5x5:
        return DilConv(ch, 5, stride, affine=affine, rng=rng, mode=mode)
    if kind is OpKind.max_pool_3x3:
        return MaxPool3(stride)
    if kind is OpKind.avg_pool_3x3:
        return AvgPool3(stride)
    if kind is OpKind.skip_connect:
        if stride == 1:
            return Identity()
        return FactorizedReduce(ch, ch, affine=affine, rng=rng)
    if kind is OpKind.zero:
        return Zero(stride)
    raise ValueError(f"unknown op kind {kind!r}")
