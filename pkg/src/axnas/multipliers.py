"""8-bit unsigned approximate multipliers as lookup tables.

A multiplier is a full product table: 65536 entries indexed by the
concatenated operand pair ``(a << 8) | b``.  This module covers building
the self-contained builtin multipliers (exact and operand-truncating
variants), importing externally characterized tables (e.g. EvoApproxLib
exports), fixed-point quantization to/from the 8-bit operand domain, and
exhaustive error-metric computation over all operand pairs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

TABLE_SIZE = 65536
MAGIC = b"AXMULT01"

#: Published characterization of selected EvoApproxLib 8-bit unsigned
#: multipliers (45 nm, 1 V): percent error metrics and per-multiplication
#: energy in arbitrary consistent units.  Used as reference values for
#: imported tables and as the energy source for report baselines.
PUBLISHED_MULTIPLIERS = {
    "mul8u_1JFF": {"mre": 0.0, "ep": 0.0, "mae": 0.0, "wce": 0.0, "energy": 0.391},
    "mul8u_2AC": {"mre": 1.25, "ep": 98.12, "mae": 0.04, "wce": 0.12, "energy": 0.311},
    "mul8u_NGR": {"mre": 1.90, "ep": 96.37, "mae": 0.07, "wce": 0.25, "energy": 0.276},
    "mul8u_DM1": {"mre": 4.73, "ep": 98.16, "mae": 0.20, "wce": 0.89, "energy": 0.195},
}

EXACT_ENERGY = PUBLISHED_MULTIPLIERS["mul8u_1JFF"]["energy"]

#: Energy ratio of a 32-bit floating-point multiply to an exact 8-bit
#: fixed-point multiply (published 45 nm estimate).
FP32_VS_INT8_ENERGY = 18.5


class MultiplierError(Exception):
    """Raised for malformed multiplier definitions or files."""


class MultiplierSource(Enum):
    builtin = "builtin"
    imported = "imported"


def exact_table() -> np.ndarray:
    """Full 256x256 product table a*b flattened in a-major order."""
    a = np.arange(256, dtype=np.uint16)
    return np.multiply.outer(a, a).reshape(-1)


@dataclass(frozen=True)
class MultiplierSpec:
    """An 8x8-bit unsigned multiplier defined by its product table.

    ``table[(a << 8) | b]`` is the (possibly approximate) product of the
    unsigned 8-bit operands ``a`` and ``b``.  Instances are immutable and
    safe to share across threads.
    """

    name: str
    table: np.ndarray  # uint16, length 65536, read-only
    energy_per_op: float
    source: MultiplierSource = MultiplierSource.builtin

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.uint16)
        if table.shape != (TABLE_SIZE,):
            raise MultiplierError(
                f"multiplier table must have {TABLE_SIZE} entries, got {table.size}"
            )
        table = table.copy()
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if not (self.energy_per_op > 0):
            raise MultiplierError(f"energy_per_op must be positive, got {self.energy_per_op}")

    def table_sha256(self) -> str:
        return hashlib.sha256(self.table.astype("<u2").tobytes()).hexdigest()


def build_builtin_multiplier(kind: str) -> MultiplierSpec:
    """Construct a self-contained builtin multiplier.

    ``exact`` is the true product table at the published exact-8-bit
    energy.  ``trunc_k`` (k in 1..4) zeroes the low k bits of both
    operands before multiplying; its energy is the documented placeholder
    ``exact * (1 - 0.05k)``.
    """
    if kind == "exact":
        return MultiplierSpec("exact", exact_table(), EXACT_ENERGY)
    if kind.startswith("trunc_"):
        try:
            k = int(kind.split("_", 1)[1])
        except ValueError:
            raise MultiplierError(f"unknown builtin multiplier {kind!r}") from None
        if not 1 <= k <= 4:
            raise MultiplierError(f"truncation width must be in 1..4, got {k}")
        a = np.arange(256, dtype=np.uint16)
        masked = a & (0xFF & ~((1 << k) - 1))
        table = np.multiply.outer(masked, masked).reshape(-1)
        return MultiplierSpec(kind, table, EXACT_ENERGY * (1 - 0.05 * k))
    raise MultiplierError(f"unknown builtin multiplier {kind!r}")


BUILTIN_NAMES = ("exact", "trunc_1", "trunc_2", "trunc_3", "trunc_4")


def approx_multiply(a_hat: int | np.ndarray, b_hat: int | np.ndarray, m: MultiplierSpec):
    """Product of quantized operands through the lookup table.

    The operands are concatenated into a 16-bit address: ``(a << 8) | b``.
    Accepts scalars or arrays.
    """
    idx = (np.asarray(a_hat, dtype=np.int64) << 8) | np.asarray(b_hat, dtype=np.int64)
    out = m.table[idx]
    if np.isscalar(a_hat) and np.isscalar(b_hat):
        return int(out)
    return out


# ---------------------------------------------------------------------------
# File import/export
# ---------------------------------------------------------------------------

def save_multiplier(m: MultiplierSpec, path: str | Path) -> None:
    """Write the binary table format: 8-byte magic then 65536 LE uint16."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(m.table.astype("<u2").tobytes())


def load_multiplier(path: str | Path, energy_per_op: float) -> MultiplierSpec:
    """Load a multiplier table from the binary or text file format.

    Binary: magic ``AXMULT01`` followed by 65536 little-endian uint16
    products in a-major order.  Text: one ``a b p`` line per operand pair
    (any order, ``#`` comments allowed).  Malformed input is rejected with
    a diagnostic naming the offending position.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] == MAGIC:
        body = raw[8:]
        if len(body) != 2 * TABLE_SIZE:
            raise MultiplierError(
                f"{path}: expected {2 * TABLE_SIZE} table bytes after header, got {len(body)}"
            )
        table = np.frombuffer(body, dtype="<u2").astype(np.uint16)
        return MultiplierSpec(path.stem, table, energy_per_op, MultiplierSource.imported)
    return _load_text(path, energy_per_op)


def _load_text(path: Path, energy_per_op: float) -> MultiplierSpec:
    table = np.zeros(TABLE_SIZE, dtype=np.uint16)
    seen = np.zeros(TABLE_SIZE, dtype=bool)
    try:
        text = path.read_text()
    except UnicodeDecodeError:
        raise MultiplierError(f"{path}: bad magic and not a text table") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise MultiplierError(f"{path}:{lineno}: expected 'a b p', got {line!r}")
        try:
            a, b, p = (int(v) for v in parts)
        except ValueError:
            raise MultiplierError(f"{path}:{lineno}: non-integer field in {line!r}") from None
        if not (0 <= a <= 255 and 0 <= b <= 255):
            raise MultiplierError(f"{path}:{lineno}: operand out of range in {line!r}")
        if not 0 <= p <= 65535:
            raise MultiplierError(f"{path}:{lineno}: product {p} exceeds 16 bits")
        idx = (a << 8) | b
        if seen[idx]:
            raise MultiplierError(f"{path}:{lineno}: duplicate entry for a={a} b={b}")
        seen[idx] = True
        table[idx] = p
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise MultiplierError(
            f"{path}: incomplete table, first missing pair a={missing >> 8} b={missing & 0xFF}"
        )
    return MultiplierSpec(path.stem, table, energy_per_op, MultiplierSource.imported)


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorMetrics:
    """Percent error metrics of a multiplier over all 65536 operand pairs."""

    mre_pct: float
    ep_pct: float
    mae_pct: float
    wce_pct: float

    def as_dict(self) -> dict:
        return {
            "mre_pct": self.mre_pct,
            "ep_pct": self.ep_pct,
            "mae_pct": self.mae_pct,
            "wce_pct": self.wce_pct,
        }


def compute_error_metrics(m: MultiplierSpec) -> ErrorMetrics:
    """Exhaustive error metrics against the exact product table.

    With err = approx - exact over all pairs:
    EP% is the fraction of nonzero errors; MAE%/WCE% are the mean/max
    absolute error normalized by 65535 (the library-convention full-scale
    denominator); MRE% is the mean of |err|/exact over pairs with a
    nonzero exact product.
    """
    exact = exact_table().astype(np.int64)
    err = m.table.astype(np.int64) - exact
    abs_err = np.abs(err)
    ep = 100.0 * np.count_nonzero(err) / TABLE_SIZE
    mae = 100.0 * abs_err.mean() / 65535.0
    wce = 100.0 * abs_err.max() / 65535.0
    nz = exact != 0
    mre = 100.0 * (abs_err[nz] / exact[nz]).mean()
    return ErrorMetrics(float(mre), float(ep), float(mae), float(wce))


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------

class QuantScheme(Enum):
    asymmetric = "asymmetric"
    symmetric_unsigned = "symmetric_unsigned"


@dataclass(frozen=True)
class QuantParams:
    """Affine map between real values and unsigned 8-bit codes.

    ``real = scale * (code - zero_point)``.  Immutable and thread-safe.
    """

    scale: float
    zero_point: int
    scheme: QuantScheme = QuantScheme.asymmetric

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not 0 <= self.zero_point <= 255:
            raise ValueError(f"zero_point must be in [0, 255], got {self.zero_point}")
        if self.scheme is QuantScheme.symmetric_unsigned and self.zero_point != 0:
            raise ValueError("symmetric_unsigned requires zero_point 0")


def round_half_away(x):
    """Round to nearest with halves away from zero (the single rounding
    rule used throughout)."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def calibrate(values, scheme: QuantScheme = QuantScheme.asymmetric) -> QuantParams:
    """Derive per-tensor quantization parameters from observed values.

    Asymmetric: the calibration range is the observed min/max extended to
    include zero (so zero is exactly representable and the zero_point
    clamp never bites), then scale = (max-min)/255 and
    zero_point = clamp(round(-min/scale), 0, 255).  A constant tensor
    degenerates to scale = max(|value|, 1e-8)/255 instead of an error.
    symmetric_unsigned requires nonnegative input and pins zero_point to 0.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot calibrate on an empty value set")
    if not np.isfinite(v).all():
        raise ValueError("cannot calibrate on non-finite values")
    lo = float(v.min())
    hi = float(v.max())
    if scheme is QuantScheme.symmetric_unsigned:
        if lo < 0:
            raise ValueError("symmetric_unsigned requires nonnegative values")
        scale = (hi if hi > 0 else 1e-8) / 255.0
        return QuantParams(scale, 0, scheme)
    lo = min(lo, 0.0)
    hi = max(hi, 0.0)
    scale = max(hi - lo, 1e-8) / 255.0
    zp = int(np.clip(round_half_away(-lo / scale), 0, 255))
    return QuantParams(scale, zp, QuantScheme.asymmetric)


def quantize(x, q: QuantParams):
    """Real value(s) to unsigned 8-bit code(s); out-of-range input clamps."""
    codes = np.clip(round_half_away(np.asarray(x, dtype=np.float64) / q.scale) + q.zero_point, 0, 255)
    codes = codes.astype(np.uint8)
    if np.isscalar(x) or np.ndim(x) == 0:
        return int(codes)
    return codes


def dequantize(v, q: QuantParams):
    """Unsigned 8-bit code(s) back to real value(s)."""
    out = q.scale * (np.asarray(v, dtype=np.float64) - q.zero_point)
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out
