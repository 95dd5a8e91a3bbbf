"""Cell DAG construction, softmax-relaxed mixed operations, the searchable
supernet, and genotype discretization.

A cell has two input states (the outputs of the two previous cells) and I
intermediate nodes; every intermediate node receives one mixed operation
from each earlier state, so the dense topology has sum_{j<I}(j+2) edges
(14 for I=4).  One architecture matrix of per-edge logits over the eight
candidate ops is shared by all cells of the same kind (normal/reduction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .engine import functional as F
from .engine.modules import (
    NUM_OPS,
    BatchNorm2d,
    Conv2d,
    FactorizedReduce,
    Linear,
    Module,
    ModuleList,
    OpKind,
    ReLUConvBN,
    make_op,
)
from .engine.quant import FP32, ExecMode
from .engine.tensor import Tensor

GENOTYPE_FORMAT = "axnas-genotype-v1"
STEM_MULTIPLIER = 3


@dataclass(frozen=True)
class CellTopology:
    """Dense cell wiring for a given intermediate-node count.

    States are indexed 0 (output of cell k-2), 1 (output of cell k-1),
    and 2..I+1 for the intermediate nodes; edges run from every earlier
    state to each intermediate node.
    """

    intermediate_nodes: int

    @property
    def num_edges(self) -> int:
        return sum(j + 2 for j in range(self.intermediate_nodes))

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for j in range(self.intermediate_nodes):
            for src in range(j + 2):
                out.append((src, j + 2))
        return out

    def node_edge_slices(self) -> list[slice]:
        """Edge-index range feeding each intermediate node."""
        out = []
        k = 0
        for j in range(self.intermediate_nodes):
            out.append(slice(k, k + j + 2))
            k += j + 2
        return out


class ArchParams:
    """Per-edge architecture logits, one (num_edges x 8) matrix per cell
    kind, shared across all cells of that kind."""

    def __init__(self, topology: CellTopology, rng: np.random.Generator,
                 init_std: float = 1e-3):
        self.topology = topology
        shape = (topology.num_edges, NUM_OPS)
        self.normal = Tensor(init_std * rng.standard_normal(shape), requires_grad=True)
        self.reduce = Tensor(init_std * rng.standard_normal(shape), requires_grad=True)

    def tensors(self) -> list[Tensor]:
        return [self.normal, self.reduce]

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        return self.normal.data.copy(), self.reduce.data.copy()

    def zero_grad(self):
        self.normal.grad = None
        self.reduce.grad = None


def mixed_op(x: Tensor, edge_alphas: Tensor, op_instances) -> Tensor:
    """Softmax-weighted sum of all candidate op outputs on one edge."""
    if edge_alphas.shape != (NUM_OPS,) or len(op_instances) != NUM_OPS:
        raise ValueError(f"expected {NUM_OPS} alphas and op instances")
    weights = F.softmax(edge_alphas)
    return F.weighted_sum([op(x) for op in op_instances], weights)


class MixedOp(Module):
    def __init__(self, ch: int, stride: int, *, rng, mode: ExecMode = FP32):
        super().__init__()
        # No learnable affine batchnorm scaling inside candidate blocks
        # during search, so mixing weights cannot be absorbed into BN.
        self.ops = ModuleList(
            [make_op(kind, ch, stride, affine=False, rng=rng, mode=mode)
             for kind in OpKind]
        )

    def forward(self, x: Tensor, weights: Tensor) -> Tensor:
        return F.weighted_sum([op(x) for op in self.ops], weights)


class SearchCell(Module):
    def __init__(self, topology: CellTopology, c_pp: int, c_p: int, ch: int,
                 *, reduction: bool, reduction_prev: bool, rng,
                 mode: ExecMode = FP32, approx_preproc: bool = False):
        super().__init__()
        self.topology = topology
        self.reduction = reduction
        self.channels = ch
        pre_mode = mode if approx_preproc else FP32
        if reduction_prev:
            self.preproc0 = FactorizedReduce(c_pp, ch, affine=False, rng=rng,
                                             mode=pre_mode, approximable=approx_preproc)
        else:
            self.preproc0 = ReLUConvBN(c_pp, ch, 1, affine=False, rng=rng,
                                       mode=pre_mode, approximable=approx_preproc)
        self.preproc1 = ReLUConvBN(c_p, ch, 1, affine=False, rng=rng,
                                   mode=pre_mode, approximable=approx_preproc)
        ops = []
        for src, _dst in topology.edges():
            stride = 2 if reduction and src < 2 else 1
            ops.append(MixedOp(ch, stride, rng=rng, mode=mode))
        self.edge_ops = ModuleList(ops)

    def forward(self, s0: Tensor, s1: Tensor, edge_weights: list[Tensor]) -> Tensor:
        states = [self.preproc0(s0), self.preproc1(s1)]
        k = 0
        for j in range(self.topology.intermediate_nodes):
            parts = []
            for src in range(j + 2):
                parts.append(self.edge_ops[k](states[src], edge_weights[k]))
                k += 1
            states.append(F.add_n(parts))
        return F.concat(states[2:], axis=1)


class Supernet(Module):
    """Over-parameterized search network: stem, L cells with reductions at
    floor(L/3) and floor(2L/3) (channels doubled at each reduction),
    global average pooling, and a linear classifier."""

    def __init__(self, *, num_classes: int, cells: int, intermediate_nodes: int,
                 init_channels: int, in_channels: int = 3, rng,
                 mode: ExecMode = FP32, approx_preproc: bool = False):
        super().__init__()
        if cells < 3:
            raise ValueError(f"need at least 3 cells, got {cells}")
        self.topology = CellTopology(intermediate_nodes)
        self.mode = mode
        c_stem = STEM_MULTIPLIER * init_channels
        self.stem_conv = Conv2d(in_channels, c_stem, 3, rng=rng)
        self.stem_bn = BatchNorm2d(c_stem)
        reductions = {cells // 3, (2 * cells) // 3}
        self.cells = ModuleList()
        self.cell_channels: list[int] = []
        c_pp, c_p, ch = c_stem, c_stem, init_channels
        reduction_prev = False
        for i in range(cells):
            reduction = i in reductions
            if reduction:
                ch *= 2
            cell = SearchCell(self.topology, c_pp, c_p, ch, reduction=reduction,
                              reduction_prev=reduction_prev, rng=rng, mode=mode,
                              approx_preproc=approx_preproc)
            self.cells.append(cell)
            self.cell_channels.append(ch)
            reduction_prev = reduction
            c_pp, c_p = c_p, ch * intermediate_nodes
        self.classifier = Linear(c_p, num_classes, rng=rng)

    def forward(self, x: Tensor, arch: ArchParams) -> Tensor:
        probs_normal = F.softmax(arch.normal)
        probs_reduce = F.softmax(arch.reduce)
        rows_normal = [F.take_row(probs_normal, e)
                       for e in range(self.topology.num_edges)]
        rows_reduce = [F.take_row(probs_reduce, e)
                       for e in range(self.topology.num_edges)]
        s0 = s1 = self.stem_bn(self.stem_conv(x))
        for cell in self.cells:
            rows = rows_reduce if cell.reduction else rows_normal
            s0, s1 = s1, cell(s0, s1, rows)
        return self.classifier(F.global_avg_pool(s1))

    def loss(self, x: Tensor, labels: np.ndarray, arch: ArchParams) -> Tensor:
        return F.softmax_cross_entropy(self.forward(x, arch), labels)


def build_supernet(cfg, *, num_classes: int, in_channels: int = 3,
                   rng: np.random.Generator) -> Supernet:
    """Construct a supernet from a search configuration object."""
    return Supernet(
        num_classes=num_classes,
        cells=cfg.cells,
        intermediate_nodes=cfg.intermediate_nodes,
        init_channels=cfg.init_channels,
        in_channels=in_channels,
        rng=rng,
        mode=cfg.mode,
        approx_preproc=cfg.approx_preproc,
    )


# ---------------------------------------------------------------------------
# Genotype
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Genotype:
    """Discretized cell description: per intermediate node, its retained
    (input_state, op) pairs, for the normal and reduction cells."""

    normal: tuple[tuple[tuple[int, OpKind], ...], ...]
    reduce: tuple[tuple[tuple[int, OpKind], ...], ...]
    concat: tuple[int, ...]

    def __post_init__(self):
        for gene in (self.normal, self.reduce):
            for j, node in enumerate(gene):
                if len(node) != 2:
                    raise ValueError(f"node {j} must retain exactly 2 inputs")
                srcs = [src for src, _ in node]
                if len(set(srcs)) != 2:
                    raise ValueError(f"node {j} inputs must be distinct, got {srcs}")
                for src, kind in node:
                    if kind is OpKind.zero:
                        raise ValueError("genotype cannot retain the zero op")
                    if not 0 <= src < j + 2:
                        raise ValueError(f"node {j} input {src} out of range")

    @property
    def intermediate_nodes(self) -> int:
        return len(self.normal)


def derive_genotype(normal_logits: np.ndarray, reduce_logits: np.ndarray,
                    topology: CellTopology) -> Genotype:
    """Discretize architecture logits.

    Per edge, the candidate strength is the maximum softmax weight over
    non-zero ops; each node retains its top-2 incoming edges by strength,
    each with that edge's strongest non-zero op.  Ties break toward the
    lower op index, then the lower source state.
    """
    def parse(logits):
        logits = np.asarray(logits, dtype=np.float64)
        if logits.shape != (topology.num_edges, NUM_OPS):
            raise ValueError(f"expected logits of shape ({topology.num_edges}, {NUM_OPS})")
        if not np.isfinite(logits).all():
            raise ValueError("architecture logits must be finite")
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        nonzero = [k.value for k in OpKind if k is not OpKind.zero]
        gene = []
        for sl in topology.node_edge_slices():
            edges = []
            for src, row in enumerate(probs[sl]):
                best_op = nonzero[int(np.argmax(row[nonzero]))]
                edges.append((float(row[best_op]), src, best_op))
            edges.sort(key=lambda t: (-t[0], t[1]))
            node = tuple((src, OpKind(op)) for _, src, op in edges[:2])
            gene.append(node)
        return tuple(gene)

    concat = tuple(range(2, topology.intermediate_nodes + 2))
    return Genotype(parse(normal_logits), parse(reduce_logits), concat)


def genotype_to_dict(g: Genotype, provenance: dict | None = None) -> dict:
    d = {
        "format": GENOTYPE_FORMAT,
        "normal": [[[src, kind.name] for src, kind in node] for node in g.normal],
        "reduce": [[[src, kind.name] for src, kind in node] for node in g.reduce],
        "concat": list(g.concat),
    }
    if provenance is not None:
        d["provenance"] = provenance
    return d


def genotype_from_dict(d: dict) -> Genotype:
    if d.get("format") != GENOTYPE_FORMAT:
        raise ValueError(f"unsupported genotype format {d.get('format')!r}")

    def parse(nodes):
        return tuple(
            tuple((int(src), OpKind[name]) for src, name in node) for node in nodes
        )

    return Genotype(parse(d["normal"]), parse(d["reduce"]), tuple(d["concat"]))


def save_genotype(path, g: Genotype, provenance: dict | None = None) -> None:
    with open(path, "w") as f:
        json.dump(genotype_to_dict(g, provenance), f, indent=2, sort_keys=True)
        f.write("\n")


def load_genotype(path) -> Genotype:
    with open(path) as f:
        return genotype_from_dict(json.load(f))
