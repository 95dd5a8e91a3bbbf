"""Discrete genotype-built networks: structure, auxiliary head, drop path,
and equivalence with a manually wired composition."""

import numpy as np

from axnas.cells import CellTopology, Genotype, derive_genotype
from axnas.engine import FP32, NUM_OPS, OpKind, Tensor, functional as F, quant8
from axnas.multipliers import build_builtin_multiplier
from axnas.network import AuxiliaryHead, EvalNetwork

TRUNC2 = build_builtin_multiplier("trunc_2")


def skip_skip_genotype():
    """Single intermediate node fed by both inputs through skip connects."""
    node = ((0, OpKind.skip_connect), (1, OpKind.skip_connect))
    return Genotype(normal=(node,), reduce=(node,), concat=(2,))


def conv_genotype(rng, nodes=2):
    topo = CellTopology(nodes)
    logits = rng.standard_normal((topo.num_edges, NUM_OPS))
    logits[:, OpKind.max_pool_3x3.value] = -5  # bias toward conv ops
    logits[:, OpKind.avg_pool_3x3.value] = -5
    logits[:, OpKind.skip_connect.value] = -5
    return derive_genotype(logits, logits, topo)


class TestEvalNetwork:
    def test_forward_shapes(self, rng):
        net = EvalNetwork(skip_skip_genotype(), num_classes=4, cells=4,
                          init_channels=8, rng=rng)
        logits, aux = net(Tensor(rng.standard_normal((2, 3, 16, 16))))
        assert logits.shape == (2, 4)
        assert aux is not None and aux.shape == (2, 4)  # training mode
        net.eval()
        logits, aux = net(Tensor(rng.standard_normal((2, 3, 16, 16))))
        assert aux is None

    def test_param_count_mode_independent(self, rng):
        g = conv_genotype(rng)
        n1 = EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                         rng=np.random.default_rng(0), mode=FP32)
        n2 = EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                         rng=np.random.default_rng(0), mode=quant8(TRUNC2))
        assert n1.parameter_count() == n2.parameter_count()
        assert n1.parameter_count(include_auxiliary=True) == \
            n2.parameter_count(include_auxiliary=True)

    def test_aux_head_placement(self, rng):
        net = EvalNetwork(skip_skip_genotype(), num_classes=3, cells=6,
                          init_channels=4, rng=rng)
        assert net.aux_index == 4  # floor(2*6/3)

    def test_aux_head_shapes_on_tiny_maps(self, rng):
        head = AuxiliaryHead(8, 5, rng=rng)
        out = head(Tensor(rng.standard_normal((2, 8, 4, 4))))
        assert out.shape == (2, 5)
        out = head(Tensor(rng.standard_normal((2, 8, 2, 2))))
        assert out.shape == (2, 5)

    def test_matches_manual_wiring(self, rng):
        """The skip+skip cell must equal its hand-built composition using
        the same parameter objects."""
        net = EvalNetwork(skip_skip_genotype(), num_classes=3, cells=3,
                          init_channels=4, rng=rng)
        net.eval()
        x = Tensor(rng.standard_normal((2, 3, 12, 12)))
        want, _ = net(x)

        s0 = s1 = net.stem_bn(net.stem_conv(x))
        for cell in net.cells:
            p0 = cell.preproc0(s0)
            p1 = cell.preproc1(s1)
            node = F.add_n([cell.node_ops[0](p0), cell.node_ops[1](p1)])
            s0, s1 = s1, node
        got = net.classifier(F.global_avg_pool(s1))
        assert np.array_equal(got.data, want.data)

    def test_deterministic_per_seed(self, rng):
        g = conv_genotype(rng)

        def build_and_run():
            net = EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                              rng=np.random.default_rng(42))
            net.eval()
            out, _ = net(Tensor(np.ones((1, 3, 12, 12))))
            return out.data

        assert np.array_equal(build_and_run(), build_and_run())

    def test_quant_mode_changes_values_not_shapes(self, rng):
        g = conv_genotype(rng)
        x = Tensor(rng.standard_normal((2, 3, 12, 12)))
        nets = [EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                            rng=np.random.default_rng(1), mode=m)
                for m in (FP32, quant8(TRUNC2))]
        for n in nets:
            n.eval()
        out_f, _ = nets[0](x)
        out_q, _ = nets[1](x)
        assert out_f.shape == out_q.shape
        assert not np.array_equal(out_f.data, out_q.data)

    def test_drop_path_only_in_training(self, rng):
        g = conv_genotype(rng)
        net = EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                          rng=np.random.default_rng(1))
        net.eval()
        x = Tensor(rng.standard_normal((2, 3, 12, 12)))
        a, _ = net(x, drop_path_prob=0.9, rng=np.random.default_rng(0))
        b, _ = net(x, drop_path_prob=0.0)
        assert np.array_equal(a.data, b.data)

    def test_gradients_reach_all_parameters(self, rng):
        g = conv_genotype(rng)
        net = EvalNetwork(g, num_classes=3, cells=3, init_channels=4,
                          rng=np.random.default_rng(1))
        x = Tensor(rng.standard_normal((2, 3, 12, 12)))
        logits, aux = net(x)
        labels = np.array([0, 2])
        loss = F.add_n([F.softmax_cross_entropy(logits, labels),
                        F.scalar_mul(F.softmax_cross_entropy(aux, labels), 0.4)])
        loss.backward()
        missing = [name for name, p in net.named_parameters() if p.grad is None]
        assert missing == []
