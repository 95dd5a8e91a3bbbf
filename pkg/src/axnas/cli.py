"""Command-line entry point binding configs, datasets, multipliers, and
the two-stage pipeline into reproducible runs.

Commands: ``search``, ``train``, ``energy``, ``mult-analyze``.  Configs
are TOML or JSON files or the names of builtin presets (``desk``,
``cifar-search``, ``cifar-eval``); CLI flags override config values,
which override preset defaults.  Every artifact gets a sibling manifest
recording the config hash, seed, multiplier checksum, and timestamps
(timestamps live only in the manifest, so artifacts are byte-identical
across reruns with the same seed).

Exit codes: 0 success, 2 config error, 3 data error, 4 multiplier error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .cells import Genotype, genotype_from_dict, genotype_to_dict
from .costs import aggregate_costs, count_macs, energy_report
from .datasets import DatasetError, load_cifar10, load_idx, synthetic_blobs
from .engine.checkpoint import save_checkpoint
from .engine.quant import FP32, ExecMode, quant8
from .multipliers import (
    BUILTIN_NAMES,
    PUBLISHED_MULTIPLIERS,
    MultiplierError,
    MultiplierSpec,
    build_builtin_multiplier,
    compute_error_metrics,
    load_multiplier,
    save_multiplier,
)
from .network import EvalNetwork
from .pipeline import ConfigError, EvalConfig, SearchConfig, run_eval, run_search, write_log_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MULT = 4

DATA_DIR_ENV = "AXNAS_DATA_DIR"

PRESETS: dict[str, dict] = {
    # Desk-scale preset: synthetic data, minutes on one CPU core.
    "desk": {
        "dataset": {"kind": "synthetic", "num_classes": 3, "image_size": 16,
                    "train_size": 256, "test_size": 128, "noise": 0.3, "seed": 0},
        "search": {"cells": 4, "intermediate_nodes": 3, "init_channels": 8,
                   "epochs": 10, "warmup_epochs": 3, "batch_size": 32,
                   "w_opt": {"lr0": 0.05, "momentum": 0.9, "weight_decay": 3e-4},
                   "a_opt": {"lr": 3e-4, "betas": [0.5, 0.999], "weight_decay": 1e-3}},
        "eval": {"cells": 4, "init_channels": 8, "epochs": 30, "batch_size": 64,
                 "w_opt": {"lr0": 0.05, "momentum": 0.9, "weight_decay": 3e-4},
                 "drop_path_prob": 0.2, "cutout_size": 4, "aux_weight": 0.4},
    },
    # Full-scale CIFAR-10 presets (the published configurations); the
    # config dataclass defaults already carry these values.
    "cifar-search": {"dataset": {"kind": "cifar10"}, "search": {}, "eval": {}},
    "cifar-eval": {"dataset": {"kind": "cifar10"}, "search": {}, "eval": {}},
}


# ---------------------------------------------------------------------------
# Config and multiplier resolution
# ---------------------------------------------------------------------------

def resolve_config(source: str) -> dict:
    path = Path(source)
    if path.exists():
        try:
            if path.suffix == ".json":
                return json.loads(path.read_text())
            if path.suffix == ".toml":
                with open(path, "rb") as f:
                    return tomllib.load(f)
            try:
                return json.loads(path.read_text())
            except json.JSONDecodeError:
                with open(path, "rb") as f:
                    return tomllib.load(f)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"{path}: cannot parse config ({e})") from None
    if source in PRESETS:
        return copy.deepcopy(PRESETS[source])
    raise ConfigError(
        f"config {source!r} is neither a file nor a preset "
        f"(presets: {', '.join(sorted(PRESETS))})"
    )


def config_sha256(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def resolve_multiplier(choice: str, energy: float | None = None) -> MultiplierSpec | None:
    """Multiplier by builtin name or table-file path; None means fp32."""
    if choice == "fp32":
        return None
    if choice in BUILTIN_NAMES:
        return build_builtin_multiplier(choice)
    path = Path(choice)
    if path.exists():
        if energy is None:
            stem = path.stem
            if stem in PUBLISHED_MULTIPLIERS:
                energy = PUBLISHED_MULTIPLIERS[stem]["energy"]
            else:
                raise MultiplierError(
                    f"{path}: per-operation energy unknown; pass --mult-energy"
                )
        return load_multiplier(path, energy)
    raise MultiplierError(
        f"unknown multiplier {choice!r}: expected fp32, one of "
        f"{', '.join(BUILTIN_NAMES)}, or a table file path"
    )


def exec_mode_for(mult: MultiplierSpec | None) -> ExecMode:
    return FP32 if mult is None else quant8(mult)


def multiplier_manifest(mult: MultiplierSpec | None) -> dict:
    if mult is None:
        return {"name": "fp32"}
    return {"name": mult.name, "table_sha256": mult.table_sha256(),
            "energy_per_op": mult.energy_per_op}


def load_datasets(config: dict):
    dcfg = dict(config.get("dataset", {"kind": "synthetic"}))
    kind = dcfg.pop("kind", "synthetic")
    if kind == "synthetic":
        allowed = {"num_classes", "image_size", "train_size", "test_size",
                   "channels", "noise", "blobs_per_class", "seed"}
        unknown = sorted(set(dcfg) - allowed)
        if unknown:
            raise ConfigError(f"unknown synthetic dataset key(s): {', '.join(unknown)}")
        return synthetic_blobs(**dcfg)
    if kind == "cifar10":
        root = dcfg.get("path") or os.environ.get(DATA_DIR_ENV)
        if not root:
            raise ConfigError(
                f"cifar10 dataset needs a 'path' key or the {DATA_DIR_ENV} env var"
            )
        return load_cifar10(root)
    if kind == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if key not in dcfg:
                raise ConfigError(f"idx dataset config is missing the {key!r} key")
        root = Path(dcfg.get("path") or os.environ.get(DATA_DIR_ENV) or ".")
        num_classes = int(dcfg.get("num_classes", 10))
        train = load_idx(root / dcfg["train_images"], root / dcfg["train_labels"],
                         num_classes)
        test = load_idx(root / dcfg["test_images"], root / dcfg["test_labels"],
                        num_classes)
        return train, test
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def write_manifest(path: Path, command: str, config: dict, seed: int,
                   mult: MultiplierSpec | None, started: str,
                   extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": f"axnas {__version__}",
        "config_sha256": config_sha256(config),
        "seed": seed,
        "multiplier": multiplier_manifest(mult),
        "started_utc": started,
        "finished_utc": _utc_now(),
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _provenance(config: dict, seed: int, mult: MultiplierSpec | None) -> dict:
    return {
        "multiplier": "fp32" if mult is None else mult.name,
        "multiplier_table_sha256": None if mult is None else mult.table_sha256(),
        "seed": seed,
        "config_sha256": config_sha256(config),
    }


def _load_genotype_file(path: str) -> Genotype:
    p = Path(path)
    if not p.exists():
        raise DatasetError(f"genotype file {p} does not exist")
    try:
        return genotype_from_dict(json.loads(p.read_text()))
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise DatasetError(f"{p}: cannot parse genotype ({e})") from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_search(args) -> int:
    started = _utc_now()
    config = resolve_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    mult = resolve_multiplier(args.multiplier, args.mult_energy)
    cfg = SearchConfig.from_dict(config.get("search", {}),
                                 mode=exec_mode_for(mult), seed=seed)
    cfg.validate()
    train, _test = load_datasets(config)
    result = run_search(cfg, train)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = genotype_to_dict(result.genotype, _provenance(config, seed, mult))
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    write_log_csv(out.with_suffix(out.suffix + ".log.csv"), result.log)
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "search",
                   config, seed, mult, started,
                   extra={"seconds": result.seconds})
    print(f"search finished in {result.seconds:.1f}s; genotype -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = _utc_now()
    config = resolve_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    mult = resolve_multiplier(args.multiplier, args.mult_energy)
    cfg = EvalConfig.from_dict(config.get("eval", {}),
                               mode=exec_mode_for(mult), seed=seed)
    cfg.validate()
    genotype = _load_genotype_file(args.genotype)
    train, test = load_datasets(config)
    result = run_eval(genotype, cfg, train, test)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", result.network.state_arrays())
    write_log_csv(out_dir / "train.log.csv", result.log)
    summary = {
        "test_accuracy_pct": result.test_accuracy,
        "param_count": result.param_count,
        "provenance": _provenance(config, seed, mult),
    }
    (out_dir / "result.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out_dir / "train.manifest.json", "train", config, seed,
                   mult, started, extra={"seconds": result.seconds})
    print(f"training finished in {result.seconds:.1f}s; "
          f"test accuracy {result.test_accuracy:.2f}%, "
          f"{result.param_count} parameters -> {out_dir}")
    return EXIT_OK


def cmd_energy(args) -> int:
    started = _utc_now()
    config = resolve_config(args.config)
    mult = resolve_multiplier(args.multiplier, args.mult_energy)
    if mult is None:
        raise MultiplierError("energy accounting needs an 8-bit multiplier, not fp32")
    cfg = EvalConfig.from_dict(config.get("eval", {}))
    genotype = _load_genotype_file(args.genotype)
    train, _test = load_datasets(config)
    net = EvalNetwork(genotype, num_classes=train.num_classes, cells=cfg.cells,
                      init_channels=cfg.init_channels, in_channels=train.channels,
                      rng=np.random.default_rng(0),
                      approx_preproc=cfg.approx_preproc)
    costs = count_macs(net, (train.channels, train.image_size, train.image_size))
    approx_macs, exact_flops = aggregate_costs(costs)
    report = energy_report(approx_macs, exact_flops, mult,
                           build_builtin_multiplier("exact"),
                           fp32_factor=args.fp32_factor)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "energy",
                   config, 0, mult, started)
    print(f"approximable MACs {report.approx_macs}, exact FLOPs {report.exact_flops} "
          f"({report.approx_fraction_pct:.2f}% approximable)")
    print(f"savings vs fp32 {report.savings_vs_fp32_pct:.2f}%, "
          f"vs exact 8-bit {report.savings_vs_exact8_pct:.2f}% -> {out}")
    return EXIT_OK


def cmd_mult_analyze(args) -> int:
    mult = resolve_multiplier(args.multiplier, args.mult_energy)
    if mult is None:
        raise MultiplierError("fp32 is not a LUT multiplier; nothing to analyze")
    metrics = compute_error_metrics(mult)
    print("multiplier  MRE[%]  EP[%]  MAE[%]  WCE[%]  energy/op")
    print(f"{mult.name}  {metrics.mre_pct:.4f}  {metrics.ep_pct:.4f}  "
          f"{metrics.mae_pct:.4f}  {metrics.wce_pct:.4f}  {mult.energy_per_op}")
    if args.table_dump:
        save_multiplier(mult, args.table_dump)
        print(f"table -> {args.table_dump}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axnas",
        description="Differentiable cell search and training with "
                    "LUT-emulated approximate 8-bit multipliers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_mult_flags(p, default="fp32"):
        p.add_argument("--multiplier", default=default,
                       help="fp32, a builtin (exact, trunc_1..trunc_4), or a table file")
        p.add_argument("--mult-energy", type=float, default=None,
                       help="per-operation energy for table files without a published value")

    p = sub.add_parser("search", help="run the architecture search stage")
    p.add_argument("config", help="config file (TOML/JSON) or preset name")
    p.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
    add_mult_flags(p)
    p.add_argument("--out", default="genotype.json", help="output genotype path")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train a discretized genotype from scratch")
    p.add_argument("genotype", help="genotype JSON produced by search")
    p.add_argument("config", help="config file (TOML/JSON) or preset name")
    p.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
    add_mult_flags(p)
    p.add_argument("--out-dir", default=".", help="directory for checkpoint/logs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("energy", help="count MACs and report inference energy")
    p.add_argument("genotype", help="genotype JSON produced by search")
    p.add_argument("config", help="config file (TOML/JSON) or preset name")
    add_mult_flags(p, default="exact")
    p.add_argument("--fp32-factor", type=float, default=18.5,
                   help="energy ratio of an fp32 multiply to an exact 8-bit multiply")
    p.add_argument("--out", default="energy_report.json", help="output report path")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("mult-analyze", help="error metrics and energy of a multiplier")
    p.add_argument("multiplier", help="builtin name (exact, trunc_1..trunc_4) or table file")
    p.add_argument("--mult-energy", type=float, default=None,
                   help="per-operation energy for table files without a published value")
    p.add_argument("--table-dump", default=None, help="re-export the binary LUT here")
    p.set_defaults(func=cmd_mult_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except MultiplierError as e:
        print(f"multiplier error: {e}", file=sys.stderr)
        return EXIT_MULT


if __name__ == "__main__":
    sys.exit(main())
