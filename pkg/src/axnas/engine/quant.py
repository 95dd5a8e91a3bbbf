"""LUT-emulated 8-bit quantized convolution (forward arithmetic only).

The emulation pipeline per forward pass: per-tensor min/max calibration of
the live input and weight tensors, quantization to unsigned 8-bit codes,
product lookup through the multiplier table addressed by the concatenated
operand pair, and exact integer zero-point correction so that only the
a_hat*b_hat products go through the (possibly approximate) table:

    real = s_a*s_w * sum_k[ LUT(a_k, w_k) - z_a*w_k - z_w*a_k + z_a*z_w ]

Accumulation is 64-bit signed.  Gradients never touch this path; the
straight-through estimator splices these values onto an exact-arithmetic
graph (see functional.ste_splice).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..multipliers import MultiplierSpec, QuantScheme, calibrate, quantize
from . import kernels

# Cap on the (positions x channels x taps) gather buffer, in elements.
_GATHER_CHUNK = 1 << 24


@dataclass(frozen=True)
class ExecMode:
    """Arithmetic backend selector: exact fp32, or 8-bit LUT emulation."""

    multiplier: MultiplierSpec | None = None

    @property
    def is_quant(self) -> bool:
        return self.multiplier is not None

    @property
    def name(self) -> str:
        return "fp32" if self.multiplier is None else f"quant8:{self.multiplier.name}"


FP32 = ExecMode()


def quant8(multiplier: MultiplierSpec) -> ExecMode:
    return ExecMode(multiplier)


class LookupCounter:
    """Counts table lookups performed while active (one per MAC)."""

    def __init__(self):
        self.count = 0

    def __enter__(self):
        _COUNTERS.append(self)
        return self

    def __exit__(self, *exc):
        _COUNTERS.pop()
        return False


_COUNTERS: list[LookupCounter] = []


def _count_lookups(n: int):
    for c in _COUNTERS:
        c.count += n


def lut_conv2d(xd, wd, bd, stride, padding, dilation, groups, m: MultiplierSpec,
               scheme=QuantScheme.asymmetric):
    """Quantized grouped convolution with table-based products.

    ``xd``/``wd`` are float arrays; output is float, bias (if any) added in
    real arithmetic after dequantization.
    """
    B, C, H, W = xd.shape
    Cout, Cig, kh, kw = wd.shape
    qa = calibrate(xd, scheme)
    qw = calibrate(wd, scheme)
    xq = quantize(xd, qa).astype(np.int64)
    wq = quantize(wd, qw).astype(np.int64)

    geo = kernels.conv_geometry(H, W, kh, kw, stride, dilation, padding)
    OH, OW, pt, pb, pl, pr = geo
    # Pad with the code of real zero so padding behaves like zero input.
    xqp = np.pad(xq, ((0, 0), (0, 0), (pt, pb), (pl, pr)),
                 constant_values=qa.zero_point)
    v = kernels.windows(xqp, kh, kw, stride, dilation)  # (B, C, OH, OW, kh, kw)

    K = Cig * kh * kw
    za, zw = qa.zero_point, qw.zero_point
    Cog = Cout // groups
    table = m.table.astype(np.int64)
    acc = np.empty((B, Cout, OH, OW), dtype=np.int64)
    for g in range(groups):
        vg = v[:, g * Cig:(g + 1) * Cig]
        # (B, OH, OW, K) operand columns for this group
        cols = vg.transpose(0, 2, 3, 1, 4, 5).reshape(B, OH, OW, K)
        cols2 = cols.reshape(-1, K)
        wrows = wq[g * Cog:(g + 1) * Cog].reshape(Cog, K)
        x_sums = cols2.sum(axis=1)            # (P,)
        w_sums = wrows.sum(axis=1)            # (Cog,)
        P = cols2.shape[0]
        lut_sum = np.empty((P, Cog), dtype=np.int64)
        step = max(1, _GATHER_CHUNK // max(1, Cog * K))
        for lo in range(0, P, step):
            hi = min(lo + step, P)
            addr = (cols2[lo:hi, None, :] << 8) | wrows[None, :, :]
            lut_sum[lo:hi] = table[addr].sum(axis=2)
        _count_lookups(P * Cog * K)
        g_acc = (lut_sum
                 - za * w_sums[None, :]
                 - zw * x_sums[:, None]
                 + K * za * zw)
        acc[:, g * Cog:(g + 1) * Cog] = (
            g_acc.reshape(B, OH, OW, Cog).transpose(0, 3, 1, 2)
        )

    out = acc.astype(np.float64) * (qa.scale * qw.scale)
    if bd is not None:
        out += bd[None, :, None, None]
    return out
