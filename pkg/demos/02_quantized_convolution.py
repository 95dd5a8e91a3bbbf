"""Emulating approximate arithmetic inside a convolution.

Shows the full quant8 pipeline on one convolution: dynamic per-tensor
calibration, quantization to unsigned 8-bit codes, LUT products with
exact zero-point correction, and the straight-through gradient.
"""

import numpy as np

from axnas import multipliers as M
from axnas.engine import FP32, Tensor, functional as F, quant8

rng = np.random.default_rng(0)

x = Tensor(rng.standard_normal((1, 3, 8, 8)), requires_grad=True)
w = Tensor(0.2 * rng.standard_normal((4, 3, 3, 3)), requires_grad=True)

# The quantization step: per-tensor min/max calibration (range extended
# to include zero) and an affine map to u8 codes.
qa = M.calibrate(x.data)
qw = M.calibrate(w.data)
print(f"input scale {qa.scale:.5f}, zero point {qa.zero_point}")
print(f"weight scale {qw.scale:.5f}, zero point {qw.zero_point}")

# fp32 vs LUT-emulated convolution with the exact 8-bit multiplier: the
# difference is pure quantization noise, bounded by the step sizes.
out_fp32 = F.conv2d(x, w, mode=FP32)
out_exact8 = F.conv2d(x, w, mode=quant8(M.build_builtin_multiplier("exact")))
print(f"\nmax |fp32 - exact 8-bit| = {np.abs(out_fp32.data - out_exact8.data).max():.5f}")

# Swapping in an approximate multiplier changes only the products that go
# through the table; the zero-point correction terms stay exact.
out_trunc = F.conv2d(x, w, mode=quant8(M.build_builtin_multiplier("trunc_2")))
print(f"max |exact8 - trunc_2|  = {np.abs(out_exact8.data - out_trunc.data).max():.5f}")

# The straight-through estimator: gradients of the quantized convolution
# are computed along the exact real-arithmetic path, so training sees the
# approximate forward values but clean gradients.
g = rng.standard_normal(out_trunc.shape)
out_trunc.backward(g)
gx_q, gw_q = x.grad.copy(), w.grad.copy()

x.grad = w.grad = None
F.conv2d(x, w, mode=FP32).backward(g)
print("\nquant8 backward bit-equals fp32 backward:",
      bool(np.array_equal(gx_q, x.grad) and np.array_equal(gw_q, w.grad)))
