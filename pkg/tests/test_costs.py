"""MAC/FLOP counting against analytic formulas and the instrumented
lookup counter, plus the energy accounting model."""

import json

import numpy as np
import pytest

from axnas.cells import CellTopology, derive_genotype
from axnas.costs import EnergyReport, aggregate_costs, count_macs, energy_report
from axnas.engine import (
    FP32,
    Conv2d,
    Linear,
    LookupCounter,
    NUM_OPS,
    Tensor,
    functional as F,
    quant8,
)
from axnas.engine.recording import CostRecorder
from axnas.multipliers import MultiplierSpec, build_builtin_multiplier, exact_table
from axnas.network import EvalNetwork

EXACT = build_builtin_multiplier("exact")
TRUNC2 = build_builtin_multiplier("trunc_2")


def multiplier_with_energy(name, energy):
    return MultiplierSpec(name, exact_table(), energy)


class TestMacFormulas:
    def test_conv_3_to_8(self, rng):
        conv = Conv2d(3, 8, 3, rng=rng, approximable=True)
        with CostRecorder() as rec:
            conv(Tensor(rng.standard_normal((1, 3, 16, 16))))
        conv_entries = [e for e in rec.entries if e.kind == "conv"]
        assert len(conv_entries) == 1
        assert conv_entries[0].ops == 55296
        assert conv_entries[0].approximable

    def test_depthwise(self, rng):
        conv = Conv2d(8, 8, 3, groups=8, rng=rng)
        with CostRecorder() as rec:
            conv(Tensor(rng.standard_normal((1, 8, 16, 16))))
        assert rec.entries[0].ops == 18432
        assert not rec.entries[0].approximable

    def test_linear(self, rng):
        lin = Linear(64, 10, rng=rng)
        with CostRecorder() as rec:
            lin(Tensor(rng.standard_normal((1, 64))))
        assert rec.entries[0].ops == 640

    def test_bn_pool_act_constants(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 4, 4)))
        with CostRecorder() as rec:
            F.relu(x)
            F.max_pool3(x, 1)
            F.global_avg_pool(x)
            F.batchnorm(x, None, None, np.zeros(2), np.ones(2), training=False)
        by_kind = {e.kind: e.ops for e in rec.entries}
        assert by_kind["act"] == 32        # 1 per element
        assert by_kind["pool"] == 9 * 32   # window size per output element
        assert by_kind["gap"] == 32        # 1 per input element
        assert by_kind["bn"] == 2 * 32     # 2 per element


def tiny_genotype(rng, nodes=2):
    topo = CellTopology(nodes)
    return derive_genotype(rng.standard_normal((topo.num_edges, NUM_OPS)),
                           rng.standard_normal((topo.num_edges, NUM_OPS)), topo)


class TestInstrumentedOracle:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_count_macs_equals_lookup_counter(self, seed):
        rng = np.random.default_rng(seed)
        g = tiny_genotype(rng)
        net = EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                          rng=rng, mode=quant8(TRUNC2))
        costs = count_macs(net, (3, 12, 12))
        approx_macs, _ = aggregate_costs(costs)
        net.eval()
        with LookupCounter() as c:
            net(Tensor(np.zeros((1, 3, 12, 12))))
        assert c.count == approx_macs

    def test_approx_fraction_mode_invariant(self, rng):
        g = tiny_genotype(rng)
        nets = [EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                            rng=np.random.default_rng(0), mode=m)
                for m in (FP32, quant8(TRUNC2))]
        totals = [aggregate_costs(count_macs(n, (3, 12, 12))) for n in nets]
        assert totals[0] == totals[1]

    def test_count_macs_restores_training_mode(self, rng):
        g = tiny_genotype(rng)
        net = EvalNetwork(g, num_classes=3, cells=3, init_channels=4, rng=rng)
        net.train()
        count_macs(net, (3, 12, 12))
        assert net.training


class TestEnergyReport:
    def test_published_energy_savings(self):
        # all-approximable workload: savings vs exact-8 multiplier are
        # 100*(1 - E/0.391)
        for name, energy, want in [("ngr", 0.276, 29.41),
                                   ("2ac", 0.311, 20.46),
                                   ("dm1", 0.195, 50.13)]:
            m = multiplier_with_energy(name, energy)
            r = energy_report(100, 0, m, EXACT)
            assert r.savings_vs_exact8_pct == pytest.approx(want, abs=0.01)

    def test_exact_vs_itself_saves_nothing(self):
        r = energy_report(100, 50, EXACT, EXACT)
        assert r.savings_vs_exact8_pct == pytest.approx(0.0)

    def test_no_approx_macs_no_fp32_savings(self):
        m = multiplier_with_energy("ngr", 0.276)
        r = energy_report(0, 100, m, EXACT)
        assert r.savings_vs_fp32_pct == pytest.approx(0.0)
        assert r.approx_fraction_pct == 0.0

    def test_zero_counts_no_division_error(self):
        r = energy_report(0, 0, EXACT, EXACT)
        assert r.total == 0.0
        assert r.savings_vs_fp32_pct == 0.0
        assert r.approx_fraction_pct == 0.0

    def test_monotone_in_multiplier_energy(self):
        lo = multiplier_with_energy("lo", 0.1)
        hi = multiplier_with_energy("hi", 0.3)
        r_lo = energy_report(100, 40, lo, EXACT)
        r_hi = energy_report(100, 40, hi, EXACT)
        assert r_lo.total < r_hi.total
        assert r_lo.savings_vs_exact8_pct > r_hi.savings_vs_exact8_pct
        assert r_lo.savings_vs_fp32_pct > r_hi.savings_vs_fp32_pct

    def test_fp32_factor_formula(self):
        m = multiplier_with_energy("m", 0.2)
        r = energy_report(10, 5, m, EXACT, fp32_factor=10.0)
        e_fp32 = 10.0 * 0.391
        want_total = 10 * 0.2 + 5 * e_fp32
        assert r.total == pytest.approx(want_total)
        want_savings = 100 * (1 - want_total / (15 * e_fp32))
        assert r.savings_vs_fp32_pct == pytest.approx(want_savings)

    def test_fraction(self):
        r = energy_report(60, 40, EXACT, EXACT)
        assert r.approx_fraction_pct == pytest.approx(60.0)

    def test_json_round_trip(self):
        r = energy_report(60, 40, TRUNC2, EXACT)
        d = json.loads(r.to_json())
        assert d == r.as_dict()
        assert EnergyReport(**d) == r
