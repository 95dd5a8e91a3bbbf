"""axnas: differentiable architecture search over cells whose separable
and dilated-separable convolutions can execute their multiplications
through lookup-table-emulated approximate 8-bit multipliers, plus
multiplier error analysis and inference-energy accounting."""

__version__ = "0.1.0"

from . import cells, costs, datasets, engine, multipliers, network, pipeline
from .cells import (
    ArchParams,
    CellTopology,
    Genotype,
    Supernet,
    build_supernet,
    derive_genotype,
    load_genotype,
    mixed_op,
    save_genotype,
)
from .costs import EnergyReport, aggregate_costs, count_macs, energy_report
from .datasets import Dataset, load_cifar10, load_idx, synthetic_blobs
from .engine import FP32, ExecMode, OpKind, Tensor, quant8
from .multipliers import (
    ErrorMetrics,
    MultiplierSpec,
    QuantParams,
    QuantScheme,
    approx_multiply,
    build_builtin_multiplier,
    calibrate,
    compute_error_metrics,
    dequantize,
    load_multiplier,
    quantize,
    save_multiplier,
)
from .network import EvalNetwork
from .pipeline import (
    EvalConfig,
    SearchConfig,
    bilevel_epoch,
    cutout,
    run_eval,
    run_search,
)
