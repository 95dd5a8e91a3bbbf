"""Shared test utilities: finite-difference gradient checking, independent
loop-based reference convolutions, and the exhaustive multiplier oracle.

The reference implementations here deliberately avoid the library's
vectorized kernels so they can serve as independent oracles.
"""

import numpy as np
import pytest

from axnas import multipliers as M
from axnas.engine.tensor import Tensor


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def fd_gradcheck(build_fn, tensors, rng, h=1e-5, tol=1e-4):
    """Compare reverse-mode gradients of ``build_fn()`` (a fresh forward
    producing one output tensor) against central finite differences under
    a fixed random projection; asserts max relative error < tol."""
    out = build_fn()
    proj = rng.standard_normal(out.data.shape)
    out.backward(proj)
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
             for t in tensors]
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = float((build_fn().data * proj).sum())
            flat[i] = orig - h
            lm = float((build_fn().data * proj).sum())
            flat[i] = orig
            fd[i] = (lp - lm) / (2 * h)
        fd = fd.reshape(t.data.shape)
        scale = max(np.abs(fd).max(), np.abs(g).max(), 1e-8)
        rel = np.abs(g - fd).max() / scale
        assert rel < tol, f"gradient mismatch: rel err {rel:.2e}"


def lattice_array(rng, shape, step=0.1, offset=0.05):
    """Distinct values bounded away from zero: safe for finite differences
    through max-pool ties and relu kinks."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2) * step + offset
    return vals.reshape(shape)


def leaf(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# Reference convolutions (independent loop implementations)
# ---------------------------------------------------------------------------

def ref_conv2d(x, w, b=None, stride=1, pad=0, dilation=1, groups=1):
    """Plain-loop float convolution with integer both-sides padding."""
    B, C, H, W = x.shape
    Cout, Cig, kh, kw = w.shape
    eh, ew = (kh - 1) * dilation + 1, (kw - 1) * dilation + 1
    OH = (H + 2 * pad - eh) // stride + 1
    OW = (W + 2 * pad - ew) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((B, Cout, OH, OW))
    Cog = Cout // groups
    for bi in range(B):
        for co in range(Cout):
            g = co // Cog
            for oh in range(OH):
                for ow in range(OW):
                    acc = 0.0
                    for ci in range(Cig):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (xp[bi, g * Cig + ci,
                                           oh * stride + i * dilation,
                                           ow * stride + j * dilation]
                                        * w[co, ci, i, j])
                    out[bi, co, oh, ow] = acc
            if b is not None:
                out[bi, co] += b[co]
    return out


def ref_quant_conv2d(x, w, b=None, stride=1, padding="same", dilation=1, groups=1,
                     mult=None):
    """Direct integer quantized convolution: quantize, accumulate
    (a_hat - z_a)(w_hat - z_w) in int64 (no LUT), rescale, add bias.

    Padding geometry mirrors the library's "same" convention but is
    recomputed here from first principles.
    """
    B, C, H, W = x.shape
    Cout, Cig, kh, kw = w.shape
    qa = M.calibrate(x)
    qw = M.calibrate(w)
    xq = M.quantize(x, qa).astype(np.int64)
    wq = M.quantize(w, qw).astype(np.int64)
    eh, ew = (kh - 1) * dilation + 1, (kw - 1) * dilation + 1
    if padding == "same":
        OH, OW = -(-H // stride), -(-W // stride)
        ph = max((OH - 1) * stride + eh - H, 0)
        pw = max((OW - 1) * stride + ew - W, 0)
        pt, pl = ph // 2, pw // 2
        pb, pr = ph - pt, pw - pl
    else:
        pt = pb = pl = pr = int(padding)
        OH = (H + 2 * pt - eh) // stride + 1
        OW = (W + 2 * pl - ew) // stride + 1
    xqp = np.pad(xq, ((0, 0), (0, 0), (pt, pb), (pl, pr)),
                 constant_values=qa.zero_point)
    out = np.zeros((B, Cout, OH, OW), dtype=np.int64)
    Cog = Cout // groups
    for bi in range(B):
        for co in range(Cout):
            g = co // Cog
            for oh in range(OH):
                for ow in range(OW):
                    acc = 0
                    for ci in range(Cig):
                        for i in range(kh):
                            for j in range(kw):
                                av = int(xqp[bi, g * Cig + ci,
                                             oh * stride + i * dilation,
                                             ow * stride + j * dilation])
                                wv = int(wq[co, ci, i, j])
                                if mult is None:
                                    acc += (av - qa.zero_point) * (wv - qw.zero_point)
                                else:
                                    acc += (int(mult.table[(av << 8) | wv])
                                            - qa.zero_point * wv
                                            - qw.zero_point * av
                                            + qa.zero_point * qw.zero_point)
                    out[bi, co, oh, ow] = acc
    real = out.astype(np.float64) * (qa.scale * qw.scale)
    if b is not None:
        real += b[None, :, None, None]
    return real


def quant_error_bound(x, w, stride=1, padding="same", dilation=1, groups=1):
    """Analytic per-output bound on |fp32 conv - quantized conv|.

    With per-value quantization errors |dx| <= s_a/2 and |dw| <= s_w/2,
    each product contributes at most |x|*s_w/2 + |w|*s_a/2 + s_a*s_w/4.
    """
    from axnas.engine import kernels
    qa = M.calibrate(x)
    qw = M.calibrate(w)
    sa, sw = qa.scale, qw.scale
    absx, absw = np.abs(x), np.abs(w)
    ones_w = np.ones_like(w)
    t1, _, _ = kernels.conv_forward(absx, ones_w, None, stride, padding, dilation, groups)
    t2, _, _ = kernels.conv_forward(np.ones_like(x), absw, None, stride, padding,
                                    dilation, groups)
    K = w.shape[1] * w.shape[2] * w.shape[3]
    return t1 * (sw / 2) + t2 * (sa / 2) + K * sa * sw / 4 + 1e-9


# ---------------------------------------------------------------------------
# Exhaustive multiplier oracle (written before the module it checks)
# ---------------------------------------------------------------------------

def oracle_trunc_metrics(k):
    """Pure-python mask-then-multiply enumeration over all 65536 pairs."""
    mask = ~((1 << k) - 1) & 0xFF
    n_err = 0
    abs_sum = 0
    abs_max = 0
    rel_sum = 0.0
    n_rel = 0
    for a in range(256):
        for b in range(256):
            exact = a * b
            approx = (a & mask) * (b & mask)
            err = approx - exact
            if err != 0:
                n_err += 1
            ae = abs(err)
            abs_sum += ae
            if ae > abs_max:
                abs_max = ae
            if exact != 0:
                rel_sum += ae / exact
                n_rel += 1
    return (100.0 * rel_sum / n_rel,
            100.0 * n_err / 65536,
            100.0 * (abs_sum / 65536) / 65535,
            100.0 * abs_max / 65535)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
