"""Pure-numpy convolution and pooling kernels (forward and gradients).

Shared by the autodiff layer and the LUT-emulated quantized path so both
agree on geometry.  Layout is NCHW; kernels are (out_c, in_c/groups, kh, kw).
"same" padding is ceil-mode: output spatial size is ceil(in/stride), with
any odd padding going to the bottom/right edge.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_geometry(H, W, kh, kw, stride, dilation, padding):
    """Resolve output size and per-edge padding.

    ``padding`` is either the string "same" or an integer applied to all
    four edges.  Returns (OH, OW, pt, pb, pl, pr).
    """
    if stride < 1 or dilation < 1:
        raise ValueError(f"stride and dilation must be >= 1, got {stride}, {dilation}")
    eh = (kh - 1) * dilation + 1
    ew = (kw - 1) * dilation + 1
    if padding == "same":
        OH = -(-H // stride)
        OW = -(-W // stride)
        ph = max((OH - 1) * stride + eh - H, 0)
        pw = max((OW - 1) * stride + ew - W, 0)
        pt, pb = ph // 2, ph - ph // 2
        pl, pr = pw // 2, pw - pw // 2
    else:
        p = int(padding)
        pt = pb = pl = pr = p
        OH = (H + 2 * p - eh) // stride + 1
        OW = (W + 2 * p - ew) // stride + 1
    if OH < 1 or OW < 1:
        raise ValueError(
            f"kernel ({kh}x{kw}, dilation {dilation}) does not fit input {H}x{W} "
            f"with padding {padding}"
        )
    return OH, OW, pt, pb, pl, pr


def pad_nchw(x, pt, pb, pl, pr, value=0.0):
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=value)


def windows(xp, kh, kw, stride, dilation):
    """Sliding view of all receptive fields: (B, C, OH, OW, kh, kw)."""
    eh = (kh - 1) * dilation + 1
    ew = (kw - 1) * dilation + 1
    v = sliding_window_view(xp, (eh, ew), axis=(2, 3))
    return v[:, :, ::stride, ::stride, ::dilation, ::dilation]


def conv_forward(xd, wd, bd, stride, padding, dilation, groups):
    """Grouped 2-D correlation.  Returns (out, padded_input, geometry)."""
    B, C, H, W = xd.shape
    Cout, Cig, kh, kw = wd.shape
    if C != Cig * groups:
        raise ValueError(f"input channels {C} do not match weight {Cig}x{groups} groups")
    if Cout % groups:
        raise ValueError(f"groups {groups} must divide output channels {Cout}")
    geo = conv_geometry(H, W, kh, kw, stride, dilation, padding)
    OH, OW, pt, pb, pl, pr = geo
    xp = pad_nchw(xd, pt, pb, pl, pr)
    v = windows(xp, kh, kw, stride, dilation)
    Cog = Cout // groups
    out = np.empty((B, Cout, OH, OW), dtype=xd.dtype)
    for g in range(groups):
        vg = v[:, g * Cig:(g + 1) * Cig]
        wg = wd[g * Cog:(g + 1) * Cog]
        og = np.tensordot(vg, wg, axes=([1, 4, 5], [1, 2, 3]))
        out[:, g * Cog:(g + 1) * Cog] = og.transpose(0, 3, 1, 2)
    if bd is not None:
        out += bd[None, :, None, None]
    return out, xp, geo


def conv_grad_w(g, xp, wshape, stride, dilation, groups):
    Cout, Cig, kh, kw = wshape
    v = windows(xp, kh, kw, stride, dilation)
    Cog = Cout // groups
    gw = np.empty(wshape, dtype=g.dtype)
    for gi in range(groups):
        vg = v[:, gi * Cig:(gi + 1) * Cig]
        gg = g[:, gi * Cog:(gi + 1) * Cog]
        gw[gi * Cog:(gi + 1) * Cog] = np.tensordot(gg, vg, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def conv_grad_x(g, xshape, xpshape, wd, stride, dilation, groups, geo):
    B, C, H, W = xshape
    Cout, Cig, kh, kw = wd.shape
    OH, OW, pt, pb, pl, pr = geo
    Cog = Cout // groups
    gxp = np.zeros(xpshape, dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            hs = slice(i * dilation, i * dilation + (OH - 1) * stride + 1, stride)
            ws = slice(j * dilation, j * dilation + (OW - 1) * stride + 1, stride)
            for gi in range(groups):
                gg = g[:, gi * Cog:(gi + 1) * Cog]
                wij = wd[gi * Cog:(gi + 1) * Cog, :, i, j]
                contrib = np.tensordot(gg, wij, axes=([1], [0]))
                gxp[:, gi * Cig:(gi + 1) * Cig, hs, ws] += contrib.transpose(0, 3, 1, 2)
    return gxp[:, :, pt:pt + H, pl:pl + W]


# ---------------------------------------------------------------------------
# 3x3 pooling, "same" padding
# ---------------------------------------------------------------------------

POOL_K = 3


def maxpool_forward(xd, stride):
    B, C, H, W = xd.shape
    geo = conv_geometry(H, W, POOL_K, POOL_K, stride, 1, "same")
    OH, OW, pt, pb, pl, pr = geo
    xp = pad_nchw(xd, pt, pb, pl, pr, value=-np.inf)
    v = windows(xp, POOL_K, POOL_K, stride, 1)
    flat = v.reshape(B, C, OH, OW, POOL_K * POOL_K)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx, geo, xp.shape


def maxpool_grad(g, idx, xshape, xpshape, stride, geo):
    B, C, H, W = xshape
    OH, OW, pt, pb, pl, pr = geo
    gxp = np.zeros(xpshape, dtype=g.dtype)
    for t in range(POOL_K * POOL_K):
        i, j = divmod(t, POOL_K)
        hs = slice(i, i + (OH - 1) * stride + 1, stride)
        ws = slice(j, j + (OW - 1) * stride + 1, stride)
        gxp[:, :, hs, ws] += g * (idx == t)
    return gxp[:, :, pt:pt + H, pl:pl + W]


def avgpool_counts(H, W, stride, geo):
    """Number of in-bounds cells per pooling window (padding excluded)."""
    OH, OW, pt, pb, pl, pr = geo
    ones = np.ones((1, 1, H, W))
    op = pad_nchw(ones, pt, pb, pl, pr)
    v = windows(op, POOL_K, POOL_K, stride, 1)
    return v.sum(axis=(-2, -1))  # (1, 1, OH, OW)


def avgpool_forward(xd, stride):
    B, C, H, W = xd.shape
    geo = conv_geometry(H, W, POOL_K, POOL_K, stride, 1, "same")
    OH, OW, pt, pb, pl, pr = geo
    xp = pad_nchw(xd, pt, pb, pl, pr)
    v = windows(xp, POOL_K, POOL_K, stride, 1)
    counts = avgpool_counts(H, W, stride, geo)
    out = v.sum(axis=(-2, -1)) / counts
    return out, counts, geo, xp.shape


def avgpool_grad(g, counts, xshape, xpshape, stride, geo):
    B, C, H, W = xshape
    OH, OW, pt, pb, pl, pr = geo
    gxp = np.zeros(xpshape, dtype=g.dtype)
    gc = g / counts
    for t in range(POOL_K * POOL_K):
        i, j = divmod(t, POOL_K)
        hs = slice(i, i + (OH - 1) * stride + 1, stride)
        ws = slice(j, j + (OW - 1) * stride + 1, stride)
        gxp[:, :, hs, ws] += gc
    return gxp[:, :, pt:pt + H, pl:pl + W]
