"""Two-stage orchestration: architecture search, then final training.

The search stage splits the training data 50/50 into a weight-training
half and an architecture-validation half and alternates first-order
updates: per train batch, one Adam step on the architecture logits
against a validation batch (skipped during warmup epochs), then one SGD
step on the network weights.  The final stage trains the discretized
network from scratch with cutout, drop path, and an auxiliary head.

All randomness flows from the config seed through spawned generators, so
a run is reproducible bit-for-bit; batch order is fixed by the seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields

import numpy as np

from .cells import ArchParams, Genotype, Supernet, build_supernet, derive_genotype
from .datasets import Dataset, DatasetError
from .engine import functional as F
from .engine.optim import SGD, Adam, cosine_lr
from .engine.quant import FP32, ExecMode
from .engine.tensor import Tensor
from .network import EvalNetwork

LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc", "lr", "seconds")


class ConfigError(Exception):
    pass


@dataclass
class OptimConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 3e-4


@dataclass
class AdamConfig:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.999)
    weight_decay: float = 1e-3


def _config_from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} key(s): {', '.join(unknown)}")
    kwargs = dict(d)
    if "betas" in kwargs:
        kwargs["betas"] = tuple(kwargs["betas"])
    return cls(**kwargs)


@dataclass
class SearchConfig:
    cells: int = 8
    intermediate_nodes: int = 4
    init_channels: int = 16
    epochs: int = 50
    warmup_epochs: int = 15
    batch_size: int = 512
    w_opt: OptimConfig = field(default_factory=OptimConfig)
    a_opt: AdamConfig = field(default_factory=AdamConfig)
    mode: ExecMode = FP32
    seed: int = 0
    approx_preproc: bool = False

    def validate(self):
        if self.cells < 3:
            raise ConfigError(f"cells must be >= 3, got {self.cells}")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError(
                f"warmup_epochs must be in [0, epochs], got {self.warmup_epochs}"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")

    @classmethod
    def from_dict(cls, d: dict, mode: ExecMode = FP32, seed: int | None = None):
        d = dict(d)
        w_opt = _config_from_dict(OptimConfig, d.pop("w_opt", {}))
        a_opt = _config_from_dict(AdamConfig, d.pop("a_opt", {}))
        cfg = _config_from_dict(cls, d)
        cfg.w_opt = w_opt
        cfg.a_opt = a_opt
        cfg.mode = mode
        if seed is not None:
            cfg.seed = seed
        return cfg


@dataclass
class EvalConfig:
    cells: int = 20
    init_channels: int = 32
    epochs: int = 600
    batch_size: int = 256
    w_opt: OptimConfig = field(default_factory=lambda: OptimConfig(0.025, 0.9, 3e-3))
    drop_path_prob: float = 0.3
    cutout_size: int = 16
    aux_weight: float = 0.4
    mode: ExecMode = FP32
    seed: int = 0
    approx_preproc: bool = False

    def validate(self):
        if self.cells < 3:
            raise ConfigError(f"cells must be >= 3, got {self.cells}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 <= self.drop_path_prob < 1.0:
            raise ConfigError(f"drop_path_prob must be in [0, 1), got {self.drop_path_prob}")

    @classmethod
    def from_dict(cls, d: dict, mode: ExecMode = FP32, seed: int | None = None):
        d = dict(d)
        w_opt = _config_from_dict(OptimConfig, d.pop("w_opt", {}))
        cfg = _config_from_dict(cls, d)
        cfg.w_opt = w_opt
        cfg.mode = mode
        if seed is not None:
            cfg.seed = seed
        return cfg


# ---------------------------------------------------------------------------
# Batching and evaluation
# ---------------------------------------------------------------------------

class Batcher:
    """Seeded shuffling batch source; partial trailing batches dropped so
    every training batch has a full batch-statistics population."""

    def __init__(self, images, labels, batch_size, rng):
        if len(images) < batch_size:
            raise DatasetError(
                f"dataset of {len(images)} samples is too small for batch size {batch_size}"
            )
        self.images = images
        self.labels = labels
        self.batch_size = batch_size
        self.rng = rng

    def __len__(self):
        return len(self.images) // self.batch_size

    def epoch(self):
        perm = self.rng.permutation(len(self.images))
        for i in range(len(self)):
            idx = perm[i * self.batch_size:(i + 1) * self.batch_size]
            yield self.images[idx], self.labels[idx]

    def cycle(self):
        while True:
            yield from self.epoch()


def evaluate(forward_fn, images, labels, batch_size) -> tuple[float, float]:
    """(accuracy %, mean loss) of a logits-producing callable, eval data
    order, no shuffling."""
    correct = 0
    loss_sum = 0.0
    n = len(images)
    for i in range(0, n, batch_size):
        x = Tensor(images[i:i + batch_size])
        y = labels[i:i + batch_size]
        logits = forward_fn(x)
        loss = F.softmax_cross_entropy(logits, y)
        loss_sum += float(loss.data) * len(y)
        correct += int((logits.data.argmax(axis=1) == y).sum())
    return 100.0 * correct / n, loss_sum / n


def cutout(image: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Zero one randomly centered size x size square, clipped at borders."""
    if size <= 0:
        return image
    _, H, W = image.shape
    cy = int(rng.integers(H))
    cx = int(rng.integers(W))
    y0, y1 = max(0, cy - size // 2), min(H, cy - size // 2 + size)
    x0, x1 = max(0, cx - size // 2), min(W, cx - size // 2 + size)
    out = image.copy()
    out[:, y0:y1, x0:x1] = 0.0
    return out


# ---------------------------------------------------------------------------
# Search stage
# ---------------------------------------------------------------------------

def bilevel_epoch(supernet: Supernet, arch: ArchParams, train_batcher: Batcher,
                  val_cycle, w_opt: SGD, a_opt: Adam, epoch: int,
                  warmup_epochs: int) -> tuple[float, float]:
    """One epoch of paired-batch first-order alternation.

    Per train batch: one Adam step on the architecture logits against the
    next validation batch (only past warmup), then one SGD step on the
    weights.  Each step treats the other variable set as constant.
    Returns (mean train loss, mean val loss; nan during warmup).
    """
    train_losses = []
    val_losses = []
    for tx, ty in train_batcher.epoch():
        if epoch >= warmup_epochs:
            vx, vy = next(val_cycle)
            supernet.zero_grad()
            arch.zero_grad()
            val_loss = supernet.loss(Tensor(vx), vy, arch)
            val_loss.backward()
            a_opt.step()
            val_losses.append(float(val_loss.data))
        supernet.zero_grad()
        arch.zero_grad()
        train_loss = supernet.loss(Tensor(tx), ty, arch)
        train_loss.backward()
        w_opt.step()
        train_losses.append(float(train_loss.data))
    mean_val = float(np.mean(val_losses)) if val_losses else float("nan")
    return float(np.mean(train_losses)), mean_val


@dataclass
class SearchResult:
    genotype: Genotype
    log: list[dict]
    seconds: float
    arch_normal: np.ndarray
    arch_reduce: np.ndarray
    initial_normal: np.ndarray
    initial_reduce: np.ndarray


def run_search(cfg: SearchConfig, train_ds: Dataset) -> SearchResult:
    """Architecture search on an even 50/50 split of the training set."""
    cfg.validate()
    if len(train_ds) < 2 * cfg.batch_size:
        raise DatasetError(
            f"need at least {2 * cfg.batch_size} training samples for two "
            f"batch-{cfg.batch_size} splits, got {len(train_ds)}"
        )
    root = np.random.default_rng(cfg.seed)
    model_rng, arch_rng, train_rng, val_rng = root.spawn(4)

    half = len(train_ds) // 2
    perm = root.permutation(len(train_ds))
    t_idx, v_idx = perm[:half], perm[half:2 * half]

    supernet = build_supernet(cfg, num_classes=train_ds.num_classes,
                              in_channels=train_ds.channels, rng=model_rng)
    arch = ArchParams(supernet.topology, arch_rng)
    initial_normal, initial_reduce = arch.snapshot()

    w_opt = SGD(supernet.parameters(), lr=cfg.w_opt.lr0,
                momentum=cfg.w_opt.momentum, weight_decay=cfg.w_opt.weight_decay)
    a_opt = Adam(arch.tensors(), lr=cfg.a_opt.lr, betas=cfg.a_opt.betas,
                 weight_decay=cfg.a_opt.weight_decay)

    train_batcher = Batcher(train_ds.images[t_idx], train_ds.labels[t_idx],
                            cfg.batch_size, train_rng)
    val_batcher = Batcher(train_ds.images[v_idx], train_ds.labels[v_idx],
                          cfg.batch_size, val_rng)
    val_cycle = val_batcher.cycle()

    log = []
    t_start = time.perf_counter()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        w_opt.lr = cosine_lr(epoch, cfg.epochs, cfg.w_opt.lr0)
        supernet.train()
        train_loss, val_loss = bilevel_epoch(
            supernet, arch, train_batcher, val_cycle, w_opt, a_opt,
            epoch, cfg.warmup_epochs)
        supernet.eval()
        val_acc, _ = evaluate(lambda x: supernet(x, arch),
                              train_ds.images[v_idx], train_ds.labels[v_idx],
                              cfg.batch_size)
        log.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_acc": val_acc,
            "lr": w_opt.lr,
            "seconds": time.perf_counter() - t0,
        })
    genotype = derive_genotype(arch.normal.data, arch.reduce.data, supernet.topology)
    return SearchResult(
        genotype=genotype,
        log=log,
        seconds=time.perf_counter() - t_start,
        arch_normal=arch.normal.data.copy(),
        arch_reduce=arch.reduce.data.copy(),
        initial_normal=initial_normal,
        initial_reduce=initial_reduce,
    )


# ---------------------------------------------------------------------------
# Final-training stage
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    network: EvalNetwork
    test_accuracy: float
    param_count: int
    log: list[dict]
    seconds: float


def run_eval(genotype: Genotype, cfg: EvalConfig, train_ds: Dataset,
             test_ds: Dataset) -> EvalResult:
    """Train the discretized network from scratch and report test accuracy."""
    cfg.validate()
    root = np.random.default_rng(cfg.seed)
    model_rng, shuffle_rng, aug_rng = root.spawn(3)

    net = EvalNetwork(genotype, num_classes=train_ds.num_classes,
                      cells=cfg.cells, init_channels=cfg.init_channels,
                      in_channels=train_ds.channels, rng=model_rng,
                      mode=cfg.mode, approx_preproc=cfg.approx_preproc)
    opt = SGD(net.parameters(), lr=cfg.w_opt.lr0, momentum=cfg.w_opt.momentum,
              weight_decay=cfg.w_opt.weight_decay)
    batcher = Batcher(train_ds.images, train_ds.labels, cfg.batch_size, shuffle_rng)

    log = []
    t_start = time.perf_counter()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        opt.lr = cosine_lr(epoch, cfg.epochs, cfg.w_opt.lr0)
        net.train()
        losses = []
        for bx, by in batcher.epoch():
            if cfg.cutout_size > 0:
                bx = np.stack([cutout(img, cfg.cutout_size, aug_rng) for img in bx])
            net.zero_grad()
            logits, aux_logits = net(Tensor(bx), drop_path_prob=cfg.drop_path_prob,
                                     rng=aug_rng)
            loss = F.softmax_cross_entropy(logits, by)
            if aux_logits is not None and cfg.aux_weight > 0:
                aux = F.softmax_cross_entropy(aux_logits, by)
                loss = F.add_n([loss, F.scalar_mul(aux, cfg.aux_weight)])
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        net.eval()
        val_acc, val_loss = evaluate(lambda x: net(x)[0], test_ds.images,
                                     test_ds.labels, cfg.batch_size)
        log.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "val_acc": val_acc,
            "lr": opt.lr,
            "seconds": time.perf_counter() - t0,
        })
    net.eval()
    accuracy, _ = evaluate(lambda x: net(x)[0], test_ds.images, test_ds.labels,
                           cfg.batch_size)
    return EvalResult(
        network=net,
        test_accuracy=accuracy,
        param_count=net.parameter_count(),
        log=log,
        seconds=time.perf_counter() - t_start,
    )


def write_log_csv(path, rows: list[dict]) -> None:
    with open(path, "w") as f:
        f.write(",".join(LOG_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                             for c in LOG_COLUMNS) + "\n")
