"""Approximate multipliers as product tables.

Walks through what an 8-bit LUT multiplier is, how the builtin
operand-truncating family trades accuracy for energy, and how the
exhaustive error metrics characterize any table.
"""

import numpy as np

from axnas import multipliers as M

# An 8x8-bit unsigned multiplier is nothing but a table of all 65536
# products, indexed by the concatenated operand pair (a << 8) | b.
exact = M.build_builtin_multiplier("exact")
print(f"exact: 13 x 11 = {M.approx_multiply(13, 11, exact)}")
print(f"exact: 255 x 255 = {M.approx_multiply(255, 255, exact)}")

# The builtin approximate family zeroes the low k bits of both operands
# before multiplying: cheap in hardware, increasingly wrong for small
# operands.
print("\noperand truncation (trunc_2 masks the low 2 bits):")
for a, b in [(7, 7), (100, 200), (3, 3)]:
    t2 = M.build_builtin_multiplier("trunc_2")
    print(f"  {a} x {b}: exact {a * b}, trunc_2 {M.approx_multiply(a, b, t2)}")

# Error metrics are computed exhaustively over every operand pair:
#   EP   fraction of pairs with any error
#   MAE  mean |error| as a percentage of the 16-bit full scale
#   WCE  worst |error| on the same scale
#   MRE  mean relative error over pairs with a nonzero exact product
print(f"\n{'multiplier':<10} {'MRE[%]':>8} {'EP[%]':>8} {'MAE[%]':>8} "
      f"{'WCE[%]':>8} {'energy':>8}")
for kind in M.BUILTIN_NAMES:
    m = M.build_builtin_multiplier(kind)
    em = M.compute_error_metrics(m)
    print(f"{m.name:<10} {em.mre_pct:>8.3f} {em.ep_pct:>8.2f} "
          f"{em.mae_pct:>8.4f} {em.wce_pct:>8.4f} {m.energy_per_op:>8.4f}")

# Published characterizations of the EvoApproxLib multipliers used as
# energy baselines throughout the library:
print("\npublished 8-bit multipliers (45 nm, 1 V):")
for name, row in M.PUBLISHED_MULTIPLIERS.items():
    print(f"  {name}: MRE {row['mre']}%, EP {row['ep']}%, "
          f"energy {row['energy']}")

# Tables round-trip through a simple binary format (magic + 65536 LE u16),
# so externally characterized multipliers can be imported bit-exactly.
import tempfile
from pathlib import Path

with tempfile.TemporaryDirectory() as td:
    path = Path(td) / "trunc_3.axm"
    M.save_multiplier(M.build_builtin_multiplier("trunc_3"), path)
    loaded = M.load_multiplier(path, energy_per_op=0.33)
    print(f"\nround-trip through {path.name}: tables equal ->",
          bool(np.array_equal(loaded.table,
                              M.build_builtin_multiplier('trunc_3').table)))
