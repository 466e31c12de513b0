"""Command-line front end: generate, train, sweep, landscape, analyze.

Exit codes are a stable contract: 0 success, 2 validation problem,
3 training divergence, 4 missing cells in a results file.  Subcommands
that emit data print machine-parseable JSON lines on stdout; progress
and errors go to stderr.
"""

import argparse
import json
import math
import sys

from .datasets import (
    DEFAULT_DOMAIN,
    DEFAULT_OOD_DOMAIN,
    DEFAULT_SIZE,
    DEFAULT_TEST_FRACTION,
    NoiseFamily,
    NoiseSpec,
    generate_dataset,
    load_dataset_csv,
    measured_snr,
    sample_coefficients,
    save_dataset_csv,
)
from .ensemble import mc_predict
from .exceptions import MissingCellsError, TrainingDiverged
from .metrics import evaluate
from .network import (
    Activation,
    NetworkConfig,
    TrainConfig,
    init_network,
    save_checkpoint,
    train,
)
from .sweep import (
    SweepConfig,
    derive_seed,
    desk_config,
    ensemble_curve,
    landscape_export,
    load_results,
    optimal_depth,
    run_sweep,
    save_landscape_csv,
    save_results_csv,
)

_METRICS = ("l1", "l2", "l2_raw", "rmse", "bd")
_SPLITS = ("test", "ood")


def _emit(obj) -> None:
    print(json.dumps(obj))


def _json_float(value):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return None
    return value


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if not args.snr > 0:
        raise ValueError(f"--snr must be positive, got {args.snr}")
    if args.size < 10:
        raise ValueError(f"--size must be at least 10, got {args.size}")
    if not 0 < args.test_fraction < 1:
        raise ValueError(
            f"--test-fraction must lie in (0, 1), got {args.test_fraction}"
        )

    coeff_seed = derive_seed(args.seed, "cli-coeffs")
    noise_seed = derive_seed(args.seed, "cli-noise")
    data_seed = derive_seed(args.seed, "cli-data")

    poly = sample_coefficients(args.order, coeff_seed)
    noise = NoiseSpec(
        family=NoiseFamily(args.noise), target_snr=args.snr, noise_seed=noise_seed
    )
    dataset = generate_dataset(
        poly,
        noise,
        size=args.size,
        domain=tuple(args.domain),
        test_fraction=args.test_fraction,
        ood_domain=None if args.no_ood else tuple(args.ood_domain),
        seed=data_seed,
    )
    save_dataset_csv(dataset, args.out)
    _emit(
        {
            "path": str(args.out),
            "measured_snr": _json_float(measured_snr(dataset)),
            "coefficients": list(poly.coefficients),
            "scale": dataset.noise_spec.scale,
            "n_train": dataset.n_train,
            "n_test": dataset.n_test,
            "n_ood": dataset.n_ood,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    dataset = load_dataset_csv(args.data)

    init_seed = derive_seed(args.seed, "cli-init")
    train_seed = derive_seed(args.seed, "cli-train")
    mask_seed = derive_seed(args.seed, "cli-mask")

    net_cfg = NetworkConfig(
        width=args.width,
        depth=args.depth,
        ensemble_size=args.m,
        activation=Activation(args.activation),
        dropout_rate=args.dropout,
        init_seed=init_seed,
    )
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        early_stop_patience=args.patience,
        train_seed=train_seed,
    )

    net, history = train(init_network(net_cfg), dataset, train_cfg)

    pred = mc_predict(net, dataset.x_test, args.m, mask_seed)
    record = evaluate(pred.mean, dataset.y_test, dataset.noise_test)

    meta = {
        "width": args.width,
        "depth": args.depth,
        "m": args.m,
        "activation": net_cfg.activation.value,
        "dropout_rate": args.dropout,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "optimizer": args.optimizer,
        "early_stop_patience": args.patience,
        "seed": args.seed,
        "init_seed": init_seed,
        "train_seed": train_seed,
        "mask_seed": mask_seed,
        "data_path": str(args.data),
        "best_epoch": history.best_epoch,
        "final_epoch": history.final_epoch,
    }
    save_checkpoint(args.checkpoint, net, meta)
    _emit(record.to_dict())
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_set(item: str):
    key, eq, value = item.partition("=")
    if not eq or not key:
        raise ValueError(f"--set expects key=value, got {item!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key, parsed


def _apply_overrides(raw: dict, sets) -> dict:
    for item in sets or []:
        key, value = _parse_set(item)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            if not isinstance(nxt, dict):
                raise ValueError(f"--set path {key!r} crosses non-section key {part!r}")
            node = nxt
        node[parts[-1]] = value
    return raw


def _resolve_sweep_config(args) -> SweepConfig:
    if args.preset == "desk":
        base = desk_config()
    else:
        base = SweepConfig()
    raw = base.to_dict()
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        # File values override preset defaults section by section.
        for section, content in loaded.items():
            if isinstance(content, dict) and isinstance(raw.get(section), dict):
                raw[section].update(content)
            else:
                raw[section] = content
    raw = _apply_overrides(raw, args.set)
    config = SweepConfig.from_dict(raw)
    if args.parallelism is not None:
        if args.parallelism < 1:
            raise ValueError(f"--parallelism must be >= 1, got {args.parallelism}")
        config = SweepConfig(
            grid=config.grid,
            data=config.data,
            train=config.train,
            activation=config.activation,
            dropout_rate=config.dropout_rate,
            parallelism=args.parallelism,
        )
    return config


def cmd_sweep(args) -> int:
    config = _resolve_sweep_config(args)
    materialized = config.to_dict()

    config_path = str(args.out) + ".config.json"
    try:
        with open(config_path) as fh:
            previous = json.load(fh)
        if previous != materialized:
            raise ValueError(
                f"{args.out} was started with a different config "
                f"(see {config_path}); refusing to mix results"
            )
    except FileNotFoundError:
        with open(config_path, "w") as fh:
            json.dump(materialized, fh, indent=2, sort_keys=True)
            fh.write("\n")

    progress = None
    if args.verbose:

        def progress(done, total):
            print(f"{done}/{total} cells", file=sys.stderr)

    results = run_sweep(config, args.out, progress=progress)
    if args.csv is not None:
        save_results_csv(results, args.csv)
    _emit(
        {
            "results": str(args.out),
            "cells": len(results),
            "diverged": sum(1 for r in results if r.diverged),
            "config": materialized,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# landscape / analyze
# ---------------------------------------------------------------------------


def _parse_fixes(items) -> dict:
    fixes = {}
    for item in items or []:
        key, value = _parse_set(item)
        fixes[key] = value
    return fixes


def cmd_landscape(args) -> int:
    results = load_results(args.results)
    fixes = _parse_fixes(args.fix)
    matrix = landscape_export(
        results,
        x_axis=args.x,
        y_axis=args.y,
        metric=args.metric,
        filter=fixes,
        split=args.split,
    )
    save_landscape_csv(matrix, args.out)
    meta = {
        "out": str(args.out),
        "x_axis": matrix.x_axis,
        "y_axis": matrix.y_axis,
        "x_values": list(matrix.x_values),
        "y_values": list(matrix.y_values),
        "metric": matrix.metric,
        "split": matrix.split,
        "filter": matrix.filter,
        "results": str(args.results),
    }
    with open(str(args.out) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(meta)
    return 0


def cmd_analyze(args) -> int:
    results = load_results(args.results)
    if not results:
        raise ValueError(f"{args.results} holds no results")
    fixes = _parse_fixes(args.fix)

    widths = sorted({r.width for r in results})
    ms = sorted({r.m for r in results})
    pin_m = args.m if args.m is not None else ms[0]

    print(f"results: {args.results}")
    print(f"metric: {args.metric} ({args.split} split)")
    if fixes:
        print("fixed: " + ", ".join(f"{k}={v}" for k, v in sorted(fixes.items())))
    print()
    print(f"optimal depth per width (m={pin_m}, median over repeats)")
    print(f"{'width':>8} {'depth':>8} {'value':>14}")
    best_by_width = {}
    for width in widths:
        depth, value = optimal_depth(
            results,
            width,
            args.metric,
            {**fixes, "m": pin_m},
            split=args.split,
        )
        best_by_width[width] = depth
        print(f"{width:>8} {depth:>8} {value:>14.6g}")

    curve_width = args.curve_width if args.curve_width is not None else widths[-1]
    curve_depth = (
        args.curve_depth
        if args.curve_depth is not None
        else best_by_width[curve_width]
    )
    print()
    print(f"ensemble curve at depth={curve_depth}, width={curve_width}")
    print(f"{'m':>8} {'value':>14}")
    curve = ensemble_curve(
        results,
        args.metric,
        {**fixes, "depth": curve_depth, "width": curve_width},
        split=args.split,
    )
    for m, value in curve:
        rendered = "NA" if value is None else f"{value:.6g}"
        print(f"{m:>8} {rendered:>14}")
    return 0


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polydrop",
        description="Polynomial-recovery experiments with MC-dropout MLP ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic dataset CSV")
    gen.add_argument("--order", type=int, required=True, help="polynomial order")
    gen.add_argument(
        "--noise",
        choices=[f.value for f in NoiseFamily],
        required=True,
        help="noise family",
    )
    gen.add_argument(
        "--snr", type=float, required=True, help="target signal-to-noise ratio"
    )
    gen.add_argument("--size", type=int, default=DEFAULT_SIZE)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.add_argument(
        "--domain", type=float, nargs=2, default=list(DEFAULT_DOMAIN), metavar=("LO", "HI")
    )
    gen.add_argument(
        "--ood-domain",
        type=float,
        nargs=2,
        default=list(DEFAULT_OOD_DOMAIN),
        metavar=("LO", "HI"),
    )
    gen.add_argument(
        "--no-ood", action="store_true", help="skip the out-of-distribution block"
    )
    gen.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train one network on a dataset CSV")
    tr.add_argument("--data", required=True, help="dataset CSV from generate")
    tr.add_argument("--width", type=int, required=True)
    tr.add_argument("--depth", type=int, required=True)
    tr.add_argument("--m", type=int, default=1, help="ensemble size for evaluation")
    tr.add_argument(
        "--activation", choices=[a.value for a in Activation], default="relu"
    )
    tr.add_argument("--dropout", type=float, default=0.1)
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--batch-size", type=int, default=64)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    tr.add_argument("--patience", type=int, default=20)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--checkpoint", required=True, help="output checkpoint path (.npz)")
    tr.set_defaults(func=cmd_train)

    sw = sub.add_parser("sweep", help="run the full grid and persist results")
    sw.add_argument("--config", help="JSON config file (sections grid/data/train/network)")
    sw.add_argument(
        "--preset",
        choices=["full", "desk"],
        default="full",
        help="base config the file/overrides modify",
    )
    sw.add_argument("--out", required=True, help="results JSONL path")
    sw.add_argument("--csv", help="also export the results as flat CSV here")
    sw.add_argument("--parallelism", type=int, default=None)
    sw.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config value, e.g. --set train.epochs=50",
    )
    sw.add_argument("--verbose", "-v", action="store_true")
    sw.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("landscape", help="export an aggregated metric matrix")
    ls.add_argument("--results", required=True)
    ls.add_argument("--x", required=True, help="x-axis dimension (e.g. width)")
    ls.add_argument("--y", required=True, help="y-axis dimension (e.g. depth)")
    ls.add_argument("--metric", choices=list(_METRICS), default="l1")
    ls.add_argument("--split", choices=list(_SPLITS), default="test")
    ls.add_argument(
        "--fix",
        action="append",
        metavar="DIM=VALUE",
        help="pin a non-axis dimension, e.g. --fix order=5",
    )
    ls.add_argument("--out", required=True, help="output CSV path")
    ls.set_defaults(func=cmd_landscape)

    an = sub.add_parser("analyze", help="optimal depth per width and ensemble curve")
    an.add_argument("--results", required=True)
    an.add_argument("--metric", choices=list(_METRICS), default="l1")
    an.add_argument("--split", choices=list(_SPLITS), default="test")
    an.add_argument(
        "--fix",
        action="append",
        metavar="DIM=VALUE",
        help="pin task dimensions, e.g. --fix order=5 --fix family=gaussian",
    )
    an.add_argument("--m", type=int, default=None, help="ensemble size for the depth table")
    an.add_argument("--curve-depth", type=int, default=None)
    an.add_argument("--curve-width", type=int, default=None)
    an.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        _fail(str(exc))
        return 3
    except MissingCellsError as exc:
        _fail(str(exc))
        return 4
    except FileNotFoundError as exc:
        _fail(f"{exc.filename}: file not found")
        return 2
    except (ValueError, OSError) as exc:
        _fail(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
