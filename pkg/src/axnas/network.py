"""Discrete networks built from a genotype (the final-training stage).

Same stem, reduction placement, and channel-doubling rules as the
supernet, but each node has exactly its two retained operations and there
are no mixing weights.  Drop-path regularization applies per retained op
output (identity/skip branches excluded), and an auxiliary classifier can
be attached to the cell at 2/3 depth.
"""

from __future__ import annotations

import numpy as np

from .cells import STEM_MULTIPLIER, Genotype
from .engine import functional as F
from .engine.modules import (
    AvgPool3,
    BatchNorm2d,
    Conv2d,
    FactorizedReduce,
    Identity,
    Linear,
    Module,
    ModuleList,
    ReLUConvBN,
    make_op,
)
from .engine.quant import FP32, ExecMode
from .engine.tensor import Tensor


class DiscreteCell(Module):
    def __init__(self, gene, concat, c_pp: int, c_p: int, ch: int, *,
                 reduction: bool, reduction_prev: bool, rng,
                 mode: ExecMode = FP32, approx_preproc: bool = False):
        super().__init__()
        self.reduction = reduction
        self.concat = tuple(concat)
        self.channels = ch
        pre_mode = mode if approx_preproc else FP32
        if reduction_prev:
            self.preproc0 = FactorizedReduce(c_pp, ch, rng=rng, mode=pre_mode,
                                             approximable=approx_preproc)
        else:
            self.preproc0 = ReLUConvBN(c_pp, ch, 1, rng=rng, mode=pre_mode,
                                       approximable=approx_preproc)
        self.preproc1 = ReLUConvBN(c_p, ch, 1, rng=rng, mode=pre_mode,
                                   approximable=approx_preproc)
        self.gene = tuple(tuple(node) for node in gene)
        ops = []
        for node in self.gene:
            for src, kind in node:
                stride = 2 if reduction and src < 2 else 1
                ops.append(make_op(kind, ch, stride, affine=True, rng=rng, mode=mode))
        self.node_ops = ModuleList(ops)

    def forward(self, s0: Tensor, s1: Tensor, *, drop_prob: float = 0.0,
                rng: np.random.Generator | None = None) -> Tensor:
        states = [self.preproc0(s0), self.preproc1(s1)]
        k = 0
        for node in self.gene:
            parts = []
            for src, _kind in node:
                op = self.node_ops[k]
                y = op(states[src])
                if self.training and drop_prob > 0 and not isinstance(op, Identity):
                    y = F.drop_path(y, drop_prob, rng, training=True)
                parts.append(y)
                k += 1
            states.append(F.add_n(parts))
        return F.concat([states[i] for i in self.concat], axis=1)


class AuxiliaryHead(Module):
    """Mid-network classifier: pool, two conv stages, then linear.

    Kernel sizes are 1x1 with a global average pool before the linear
    layer so the head is well-formed at any feature-map size.
    """

    def __init__(self, in_ch: int, num_classes: int, *, rng):
        super().__init__()
        self.pool = AvgPool3(stride=2)
        self.conv1 = Conv2d(in_ch, 128, 1, rng=rng)
        self.bn1 = BatchNorm2d(128)
        self.conv2 = Conv2d(128, 768, 1, rng=rng)
        self.bn2 = BatchNorm2d(768)
        self.classifier = Linear(768, num_classes, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        x = self.pool(F.relu(x))
        x = F.relu(self.bn1(self.conv1(x)))
        x = F.relu(self.bn2(self.conv2(x)))
        return self.classifier(F.global_avg_pool(x))


class EvalNetwork(Module):
    """Genotype-built network with optional auxiliary head."""

    def __init__(self, genotype: Genotype, *, num_classes: int, cells: int,
                 init_channels: int, in_channels: int = 3, rng,
                 mode: ExecMode = FP32, approx_preproc: bool = False,
                 auxiliary: bool = True):
        super().__init__()
        if cells < 3:
            raise ValueError(f"need at least 3 cells, got {cells}")
        self.genotype = genotype
        c_stem = STEM_MULTIPLIER * init_channels
        self.stem_conv = Conv2d(in_channels, c_stem, 3, rng=rng)
        self.stem_bn = BatchNorm2d(c_stem)
        reductions = {cells // 3, (2 * cells) // 3}
        self.aux_index = (2 * cells) // 3
        self.cells = ModuleList()
        c_pp, c_p, ch = c_stem, c_stem, init_channels
        reduction_prev = False
        for i in range(cells):
            reduction = i in reductions
            if reduction:
                ch *= 2
            gene = genotype.reduce if reduction else genotype.normal
            cell = DiscreteCell(gene, genotype.concat, c_pp, c_p, ch,
                                reduction=reduction, reduction_prev=reduction_prev,
                                rng=rng, mode=mode, approx_preproc=approx_preproc)
            self.cells.append(cell)
            reduction_prev = reduction
            c_pp, c_p = c_p, ch * len(genotype.concat)
            if i == self.aux_index:
                self.aux_channels = c_p
        self.auxiliary = None
        if auxiliary:
            self.auxiliary = AuxiliaryHead(self.aux_channels, num_classes, rng=rng)
        self.classifier = Linear(c_p, num_classes, rng=rng)

    def forward(self, x: Tensor, *, drop_path_prob: float = 0.0,
                rng: np.random.Generator | None = None):
        """Returns (logits, aux_logits); aux_logits is None unless training
        with an auxiliary head attached."""
        s0 = s1 = self.stem_bn(self.stem_conv(x))
        aux_logits = None
        for i, cell in enumerate(self.cells):
            s0, s1 = s1, cell(s0, s1, drop_prob=drop_path_prob, rng=rng)
            if i == self.aux_index and self.auxiliary is not None and self.training:
                aux_logits = self.auxiliary(s1)
        logits = self.classifier(F.global_avg_pool(s1))
        return logits, aux_logits

    def parameter_count(self, include_auxiliary: bool = False) -> int:
        """Trainable parameter count; the auxiliary head is excluded by
        default because it is not part of the inference network."""
        total = 0
        for name, p in self.named_parameters():
            if not include_auxiliary and name.startswith("auxiliary."):
                continue
            total += p.data.size
        return total
