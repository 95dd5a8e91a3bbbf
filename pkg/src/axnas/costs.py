"""Per-layer operation counting and the inference-energy accounting model.

count_macs drives a batch-1 eval-mode forward pass with the cost recorder
active, so counts always agree with what the kernels actually execute.
Convolutions carry an `approximable` tag fixed at network construction
(the convs inside candidate sep/dil blocks, plus cell preprocessing when
approx_preproc is on); the tag, and hence the approx fraction, is a
topology property independent of the arithmetic backend.

Documented cost constants: conv out_c*out_h*out_w*(in_c/groups)*kh*kw
MACs; linear in*out MACs; batchnorm 2 FLOPs/element; pooling
window-size(9) FLOPs/output element; global average pool 1 FLOP/input
element; activations 1 FLOP/element; node summation 1 FLOP/element per
extra operand.  Biases, concatenation, and eval-mode drop path are free.
The energy model prices approximable MACs at the chosen multiplier's
per-op energy and everything else at fp32_factor times the exact-8-bit
per-op energy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .engine.recording import CostEntry, CostRecorder
from .engine.tensor import Tensor
from .multipliers import FP32_VS_INT8_ENERGY, MultiplierSpec


def count_macs(network, input_shape: tuple[int, int, int],
               forward=None) -> list[CostEntry]:
    """Per-layer costs of one inference (batch 1, eval mode).

    ``input_shape`` is (channels, height, width).  ``forward`` overrides
    the default ``network(x)`` call for models with non-standard forward
    signatures.
    """
    was_training = network.training
    network.eval()
    x = Tensor(np.zeros((1, *input_shape)))
    with CostRecorder() as rec:
        if forward is None:
            network(x)
        else:
            forward(network, x)
    if was_training:
        network.train()
    return rec.entries


def aggregate_costs(entries: list[CostEntry]) -> tuple[int, int]:
    """(approximable MACs, exact FLOPs) totals."""
    approx = sum(e.ops for e in entries if e.approximable)
    exact = sum(e.ops for e in entries if not e.approximable)
    return approx, exact


@dataclass(frozen=True)
class EnergyReport:
    multiplier: str
    approx_macs: int
    exact_flops: int
    energy_approx_units: float
    energy_exact_units: float
    total: float
    savings_vs_fp32_pct: float
    savings_vs_exact8_pct: float
    approx_fraction_pct: float
    fp32_factor: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def energy_report(approx_macs: int, exact_flops: int, multiplier: MultiplierSpec,
                  exact8: MultiplierSpec,
                  fp32_factor: float = FP32_VS_INT8_ENERGY) -> EnergyReport:
    """Inference-energy totals and savings for a counted workload.

    Approximable MACs run on the chosen multiplier; all remaining FLOPs
    are priced at the fp32 per-op rate (fp32_factor times the exact-8-bit
    multiplier energy).  Savings compare against running everything at
    fp32, and against running the approximable MACs on the exact 8-bit
    multiplier.
    """
    e_fp32 = fp32_factor * exact8.energy_per_op

    def total(m: MultiplierSpec) -> float:
        return approx_macs * m.energy_per_op + exact_flops * e_fp32

    t = total(multiplier)
    t_exact8 = total(exact8)
    t_fp32 = (approx_macs + exact_flops) * e_fp32
    savings_fp32 = 100.0 * (1.0 - t / t_fp32) if t_fp32 > 0 else 0.0
    savings_exact8 = 100.0 * (1.0 - t / t_exact8) if t_exact8 > 0 else 0.0
    ops = approx_macs + exact_flops
    fraction = 100.0 * approx_macs / ops if ops else 0.0
    return EnergyReport(
        multiplier=multiplier.name,
        approx_macs=int(approx_macs),
        exact_flops=int(exact_flops),
        energy_approx_units=approx_macs * multiplier.energy_per_op,
        energy_exact_units=exact_flops * e_fp32,
        total=t,
        savings_vs_fp32_pct=savings_fp32,
        savings_vs_exact8_pct=savings_exact8,
        approx_fraction_pct=fraction,
        fp32_factor=fp32_factor,
    )
