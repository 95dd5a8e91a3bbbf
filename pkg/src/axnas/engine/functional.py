"""Differentiable operations over :class:`~axnas.engine.tensor.Tensor`.

Every op builds the backward closure eagerly.  Convolution supports two
arithmetic backends selected by ExecMode: exact fp32, or the LUT-emulated
8-bit path.  In quant mode the forward values come from the LUT pipeline
while the backward pass is spliced onto the exact-arithmetic graph
(straight-through estimator), so gradients are bit-identical to the fp32
gradients for the same inputs, weights, and upstream gradient.
"""

from __future__ import annotations

import numpy as np

from . import kernels, recording
from .quant import FP32, ExecMode, lut_conv2d
from .tensor import DTYPE, Tensor, as_tensor, make_result


# ---------------------------------------------------------------------------
# Elementwise / structural ops
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    xd = x.data
    out = np.maximum(xd, 0.0)
    recording.record("act", f"relu {xd.shape}", xd.size)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (xd > 0))

    return make_result(out, (x,), backward)


def add_n(tensors: list[Tensor]) -> Tensor:
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ValueError(f"add_n shape mismatch: {t.shape} vs {shape}")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out += t.data
    recording.record("add", f"add_n x{len(tensors)} {shape}",
                     (len(tensors) - 1) * int(np.prod(shape)))

    def backward(g):
        for t in tensors:
            if t.requires_grad:
                t.accumulate(g)

    return make_result(out, tuple(tensors), backward)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x.accumulate(c * g)

    return make_result(c * x.data, (x,), backward)


def mul_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant (non-differentiated) mask, broadcastable."""
    def backward(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return make_result(x.data * mask, (x,), backward)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t.accumulate(p)

    return make_result(out, tuple(tensors), backward)


def weighted_sum(tensors: list[Tensor], weights: Tensor) -> Tensor:
    """sum_i weights[i] * tensors[i] with gradients to both factors."""
    if weights.data.shape != (len(tensors),):
        raise ValueError("weights must be a vector matching the tensor list")
    w = weights.data
    out = w[0] * tensors[0].data
    for i in range(1, len(tensors)):
        out += w[i] * tensors[i].data

    def backward(g):
        if weights.requires_grad:
            gw = np.array([np.sum(g * t.data) for t in tensors])
            weights.accumulate(gw)
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate(w[i] * g)

    return make_result(out, (*tensors, weights), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            x.accumulate(p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return make_result(p, (x,), backward)


def take_row(x: Tensor, i: int) -> Tensor:
    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[i] = g
            x.accumulate(full)

    return make_result(x.data[i], (x,), backward)


def shift11(x: Tensor) -> Tensor:
    """Shift the spatial grid up-left by one, zero-filling bottom/right.

    Output[h, w] = input[h+1, w+1]; used by factorized reduce to offset the
    second stride-2 path by (1, 1).
    """
    xd = x.data
    out = np.zeros_like(xd)
    out[:, :, :-1, :-1] = xd[:, :, 1:, 1:]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(xd)
            gx[:, :, 1:, 1:] = g[:, :, :-1, :-1]
            x.accumulate(gx)

    return make_result(out, (x,), backward)


def subsample_zero(x: Tensor, stride: int) -> Tensor:
    """The zero operation: all-zero output at the stride-adjusted shape.

    Input and parameter gradients are identically zero.
    """
    B, C, H, W = x.shape
    OH = -(-H // stride)
    OW = -(-W // stride)
    out = np.zeros((B, C, OH, OW), dtype=DTYPE)

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.zeros_like(x.data))

    return make_result(out, (x,), backward)


def ste_splice(exact: Tensor, approx_data: np.ndarray) -> Tensor:
    """Forward the approximate values; backpropagate into the exact graph."""
    if exact.data.shape != approx_data.shape:
        raise ValueError(
            f"splice shape mismatch: {exact.data.shape} vs {approx_data.shape}"
        )

    def backward(g):
        if exact.requires_grad:
            exact.accumulate(g)

    return make_result(np.asarray(approx_data, dtype=DTYPE), (exact,), backward)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, *,
           stride: int = 1, padding="same", dilation: int = 1, groups: int = 1,
           mode: ExecMode = FP32, approximable: bool = False) -> Tensor:
    """Grouped 2-D convolution (cross-correlation).

    fp32 mode is the exact real computation.  quant8 mode emulates the
    multiplier: per-tensor calibration of input and weights, LUT products
    with exact zero-point correction, bias added in real arithmetic; the
    backward pass is the exact-arithmetic gradient (straight-through).
    """
    xd, wd = x.data, weight.data
    bd = bias.data if bias is not None else None
    out, xp, geo = kernels.conv_forward(xd, wd, bd, stride, padding, dilation, groups)
    B = xd.shape[0]
    Cout, Cig, kh, kw = wd.shape
    OH, OW = geo[0], geo[1]
    recording.record(
        "conv",
        f"conv {Cout}x{Cig}x{kh}x{kw} g{groups} s{stride} d{dilation} -> {OH}x{OW}",
        B * Cout * OH * OW * Cig * kh * kw,
        approximable=approximable,
    )

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if weight.requires_grad:
            weight.accumulate(kernels.conv_grad_w(g, xp, wd.shape, stride, dilation, groups))
        if x.requires_grad:
            x.accumulate(kernels.conv_grad_x(g, xd.shape, xp.shape, wd, stride,
                                             dilation, groups, geo))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 2, 3)))

    exact = make_result(out, parents, backward)
    if not mode.is_quant:
        return exact
    approx = lut_conv2d(xd, wd, bd, stride, padding, dilation, groups, mode.multiplier)
    return ste_splice(exact, approx)


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def max_pool3(x: Tensor, stride: int = 1) -> Tensor:
    """3x3 max pooling, "same" padding; always exact arithmetic."""
    out, idx, geo, xpshape = kernels.maxpool_forward(x.data, stride)
    recording.record("pool", f"max_pool3 s{stride} {out.shape}", 9 * out.size)

    def backward(g):
        if x.requires_grad:
            x.accumulate(kernels.maxpool_grad(g, idx, x.data.shape, xpshape, stride, geo))

    return make_result(out, (x,), backward)


def avg_pool3(x: Tensor, stride: int = 1) -> Tensor:
    """3x3 average pooling, "same" padding, padding excluded from counts."""
    out, counts, geo, xpshape = kernels.avgpool_forward(x.data, stride)
    recording.record("pool", f"avg_pool3 s{stride} {out.shape}", 9 * out.size)

    def backward(g):
        if x.requires_grad:
            x.accumulate(kernels.avgpool_grad(g, counts, x.data.shape, xpshape, stride, geo))

    return make_result(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    out = x.data.mean(axis=(2, 3))
    recording.record("gap", f"global_avg_pool {x.shape}", x.size)

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g[:, :, None, None] / (H * W), x.data.shape))

    return make_result(out, (x,), backward)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def bn_stats_train(xd, eps):
    mean = xd.mean(axis=(0, 2, 3))
    var = xd.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[None, :, None, None]) * inv[None, :, None, None]
    return xhat, mean, var, inv


def bn_update_running(running_mean, running_var, mean, var, n, momentum):
    running_mean *= 1.0 - momentum
    running_mean += momentum * mean
    unbiased = var * (n / (n - 1)) if n > 1 else var
    running_var *= 1.0 - momentum
    running_var += momentum * unbiased


def batchnorm(x: Tensor, gamma: Tensor | None, beta: Tensor | None,
              running_mean: np.ndarray, running_var: np.ndarray, *,
              training: bool, momentum: float = 0.1, eps: float = 1e-5,
              update_running: bool | None = None) -> Tensor:
    """Per-channel batch normalization with running statistics.

    Training mode normalizes by batch statistics (and by default updates
    the running buffers in place); eval mode uses the running buffers.
    gamma/beta are optional (no learnable affine scaling when None).
    """
    xd = x.data
    B, C, H, W = xd.shape
    recording.record("bn", f"batchnorm {xd.shape}", 2 * xd.size)
    if update_running is None:
        update_running = training
    gd = gamma.data if gamma is not None else None
    bd = beta.data if beta is not None else None

    if training:
        xhat, mean, var, inv = bn_stats_train(xd, eps)
        if update_running:
            bn_update_running(running_mean, running_var, mean, var, B * H * W, momentum)
        out = xhat if gd is None else xhat * gd[None, :, None, None]
        if bd is not None:
            out = out + bd[None, :, None, None]
        n = B * H * W

        def backward(g):
            gy = g if gd is None else g * gd[None, :, None, None]
            if gamma is not None and gamma.requires_grad:
                gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
            if beta is not None and beta.requires_grad:
                beta.accumulate(g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                s1 = gy.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (gy * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (inv[None, :, None, None] / n) * (n * gy - s1 - xhat * s2)
                x.accumulate(gx)
    else:
        inv_r = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean[None, :, None, None]) * inv_r[None, :, None, None]
        out = xhat if gd is None else xhat * gd[None, :, None, None]
        if bd is not None:
            out = out + bd[None, :, None, None]

        def backward(g):
            gy = g if gd is None else g * gd[None, :, None, None]
            if gamma is not None and gamma.requires_grad:
                gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
            if beta is not None and beta.requires_grad:
                beta.accumulate(g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                x.accumulate(gy * inv_r[None, :, None, None])

    parents = tuple(t for t in (x, gamma, beta) if t is not None)
    return make_result(out, parents, backward)


def bn_forward_data(xd, gamma_d, beta_d, running_mean, running_var, *,
                    training: bool, momentum: float = 0.1, eps: float = 1e-5,
                    update_running: bool = False) -> np.ndarray:
    """Graph-free batchnorm on raw arrays (the quantized shadow pass)."""
    if training:
        xhat, mean, var, _ = bn_stats_train(xd, eps)
        if update_running:
            B, C, H, W = xd.shape
            bn_update_running(running_mean, running_var, mean, var, B * H * W, momentum)
    else:
        inv_r = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean[None, :, None, None]) * inv_r[None, :, None, None]
    out = xhat if gamma_d is None else xhat * gamma_d[None, :, None, None]
    if beta_d is not None:
        out = out + beta_d[None, :, None, None]
    return out


# ---------------------------------------------------------------------------
# Classifier head and losses
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias with weight of shape (out_features, in_features)."""
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data
    recording.record("linear", f"linear {wd.shape[1]}->{wd.shape[0]}",
                     xd.shape[0] * wd.shape[0] * wd.shape[1])

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ wd)
        if weight.requires_grad:
            weight.accumulate(g.T @ xd)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between logits (B, K) and integer labels (B,)."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    B = logits.data.shape[0]
    loss = -logp[np.arange(B), labels].mean()
    p = np.exp(logp)

    def backward(g):
        if logits.requires_grad:
            gz = p.copy()
            gz[np.arange(B), labels] -= 1.0
            logits.accumulate(gz * (float(g) / B))

    return make_result(np.asarray(loss), (logits,), backward)


def mse_loss(pred: Tensor, target) -> Tensor:
    td = as_tensor(target).data
    diff = pred.data - td
    loss = np.asarray((diff ** 2).mean())

    def backward(g):
        if pred.requires_grad:
            pred.accumulate((2.0 / diff.size) * diff * float(g))

    return make_result(loss, (pred,), backward)


def drop_path(x: Tensor, prob: float, rng: np.random.Generator | None,
              training: bool) -> Tensor:
    """Per-sample Bernoulli zeroing of a branch with survivor rescaling.

    Identity when not training or prob == 0.
    """
    if not training or prob <= 0.0:
        return x
    B = x.shape[0]
    keep = (rng.random(B) >= prob).astype(DTYPE) / (1.0 - prob)
    mask = keep.reshape(B, *([1] * (x.ndim - 1)))
    return mul_mask(x, mask)
