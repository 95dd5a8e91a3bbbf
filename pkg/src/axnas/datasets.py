"""Dataset loading: CIFAR-10 binary batches, IDX images, and a seeded
synthetic generator for desk-scale tests (no downloads needed)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CIFAR_RECORD = 3073  # 1 label byte + 3 x 1024 channel-major pixel bytes
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILES = ["test_batch.bin"]
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(Exception):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64
    num_classes: int

    def __len__(self):
        return self.images.shape[0]

    @property
    def channels(self):
        return self.images.shape[1]

    @property
    def image_size(self):
        return self.images.shape[2]


# ---------------------------------------------------------------------------
# Synthetic blobs
# ---------------------------------------------------------------------------

def synthetic_blobs(*, num_classes: int = 3, image_size: int = 16,
                    train_size: int = 256, test_size: int = 128,
                    channels: int = 3, noise: float = 0.3,
                    blobs_per_class: int = 3,
                    seed: int = 0) -> tuple[Dataset, Dataset]:
    """Gaussian-blob class textures rendered to small images.

    Each class is a fixed template of a few Gaussian bumps with
    class-specific positions, widths, and per-channel amplitudes; samples
    are the template plus i.i.d. Gaussian pixel noise.  Fully determined
    by the seed.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    templates = np.zeros((num_classes, channels, image_size, image_size))
    for k in range(num_classes):
        for _ in range(blobs_per_class):
            cy, cx = rng.uniform(2, image_size - 2, size=2)
            sigma = rng.uniform(1.5, 3.0)
            amp = rng.uniform(-1.0, 1.0, size=channels)
            bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
            templates[k] += amp[:, None, None] * bump
    templates -= templates.mean()
    templates /= templates.std()

    def render(n):
        labels = np.arange(n) % num_classes
        rng.shuffle(labels)
        images = templates[labels] + noise * rng.standard_normal(
            (n, channels, image_size, image_size))
        return Dataset(images, labels.astype(np.int64), num_classes)

    return render(train_size), render(test_size)


# ---------------------------------------------------------------------------
# CIFAR-10 binary format
# ---------------------------------------------------------------------------

def load_cifar10_file(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """One binary batch file: 3073-byte records of label + channel-major
    pixels."""
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD != 0:
        raise DatasetError(
            f"{path}: size {len(raw)} is not a multiple of the "
            f"{CIFAR_RECORD}-byte record length"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise DatasetError(f"{path}: record {bad[0]}: label {labels[bad[0]]} out of range")
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return images, labels


def load_cifar10(root: str | Path) -> tuple[Dataset, Dataset]:
    root = Path(root)

    def load_files(names):
        parts = []
        for name in names:
            path = root / name
            if not path.exists():
                raise DatasetError(f"missing CIFAR-10 batch file {path}")
            parts.append(load_cifar10_file(path))
        images = np.concatenate([p[0] for p in parts])
        labels = np.concatenate([p[1] for p in parts])
        return Dataset(images, labels, 10)

    return load_files(CIFAR_TRAIN_FILES), load_files(CIFAR_TEST_FILES)


# ---------------------------------------------------------------------------
# IDX format
# ---------------------------------------------------------------------------

def _read_idx(path: Path, magic: int, rank: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4 * (1 + rank):
        raise DatasetError(f"{path}: truncated IDX header")
    got = struct.unpack_from(">I", raw, 0)[0]
    if got != magic:
        raise DatasetError(f"{path}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{rank}I", raw, 4)
    n = int(np.prod(dims))
    body = raw[4 * (1 + rank):]
    if len(body) != n:
        raise DatasetError(f"{path}: expected {n} data bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path,
             num_classes: int = 10) -> Dataset:
    """MNIST-style big-endian IDX image/label pair."""
    images = _read_idx(Path(images_path), IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC, 1).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    if labels.size and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise DatasetError(f"record {bad}: label {labels[bad]} out of range")
    imgs = images[:, None, :, :].astype(np.float64) / 255.0
    return Dataset(imgs, labels, num_classes)
