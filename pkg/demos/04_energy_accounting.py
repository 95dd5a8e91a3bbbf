"""Counting operations and pricing inference energy.

Builds a discrete network from a genotype, counts its per-layer MACs and
FLOPs with the instrumented forward pass, and prices the approximable
share on different multipliers.
"""

import numpy as np

from axnas import multipliers as M
from axnas.cells import CellTopology, derive_genotype
from axnas.costs import aggregate_costs, count_macs, energy_report
from axnas.engine import NUM_OPS
from axnas.network import EvalNetwork

rng = np.random.default_rng(4)
topo = CellTopology(2)
genotype = derive_genotype(rng.standard_normal((topo.num_edges, NUM_OPS)),
                           rng.standard_normal((topo.num_edges, NUM_OPS)), topo)

net = EvalNetwork(genotype, num_classes=10, cells=4, init_channels=8,
                  rng=np.random.default_rng(0))

# One instrumented batch-1 forward pass yields per-layer costs; convs in
# the candidate blocks carry the `approximable` tag (a topology property,
# independent of the arithmetic backend).
costs = count_macs(net, (3, 16, 16))
approx_macs, exact_flops = aggregate_costs(costs)
print(f"{len(costs)} recorded layers")
print(f"approximable MACs: {approx_macs:,}")
print(f"exact FLOPs:       {exact_flops:,}")
print(f"approx fraction:   {100 * approx_macs / (approx_macs + exact_flops):.1f}%")

print("\nlargest layers:")
for e in sorted(costs, key=lambda e: -e.ops)[:5]:
    tag = "approx" if e.approximable else "exact"
    print(f"  {e.ops:>10,}  {tag:<7} {e.detail}")

# Energy model: approximable MACs run on the chosen multiplier, the
# remainder at the fp32 rate (18.5x the exact 8-bit multiplier energy).
exact8 = M.build_builtin_multiplier("exact")
print(f"\n{'multiplier':<12} {'energy/op':>10} {'total':>14} "
      f"{'vs fp32':>9} {'vs exact8':>10}")
for name in ("mul8u_1JFF", "mul8u_2AC", "mul8u_NGR", "mul8u_DM1"):
    m = M.MultiplierSpec(name, M.exact_table(),
                         M.PUBLISHED_MULTIPLIERS[name]["energy"])
    r = energy_report(approx_macs, exact_flops, m, exact8)
    print(f"{name:<12} {m.energy_per_op:>10.3f} {r.total:>14,.0f} "
          f"{r.savings_vs_fp32_pct:>8.2f}% {r.savings_vs_exact8_pct:>9.2f}%")
