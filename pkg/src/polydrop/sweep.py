"""Grid sweep harness: enumerate cells, train them, persist, aggregate.

A cell is one coordinate (order, family, snr, depth, width, m, repeat).
Seeds are derived from the base seed and the coordinate VALUES via
sha256, never from enumeration position, so re-running any subset of the
grid reproduces the exact cells a full run would have produced.  Cells
that differ only in m share their dataset, initialization, and training
(the m-independent seeds exclude m on purpose), which lets one training
serve a whole column of ensemble sizes and keeps comparisons across m
paired.

Results are appended to a JSONL file as they complete and the file is
rewritten in canonical coordinate order once the sweep finishes, so the
final file is independent of completion order and of interruptions.
Wall-clock timings go to a separate sidecar file to keep the results
file deterministic.
"""

import concurrent.futures
import hashlib
import json
import math
import os
import statistics
import tempfile
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .datasets import (
    DEFAULT_DOMAIN,
    DEFAULT_OOD_DOMAIN,
    DEFAULT_SIZE,
    DEFAULT_TEST_FRACTION,
    Dataset,
    NoiseFamily,
    NoiseSpec,
    generate_dataset,
    measured_snr,
    sample_coefficients,
)
from .ensemble import mc_predict
from .exceptions import MissingCellsError, ResultsFileError, TrainingDiverged
from .metrics import MetricsRecord, evaluate
from .network import Activation, NetworkConfig, TrainConfig, init_network, train
from .validation import check_fraction, check_interval

__all__ = [
    "DataConfig",
    "SweepGrid",
    "SweepConfig",
    "RunSpec",
    "RunResult",
    "LandscapeMatrix",
    "desk_config",
    "derive_seed",
    "enumerate_runs",
    "build_dataset",
    "execute_run",
    "run_sweep",
    "load_results",
    "save_results_csv",
    "landscape_export",
    "save_landscape_csv",
    "optimal_depth",
    "ensemble_curve",
]

DEFAULT_DEPTHS = tuple(range(1, 16))
DEFAULT_WIDTHS = (6, 8, 10, 16, 20, 30, 50, 80, 140, 300, 600, 1000)
DEFAULT_ENSEMBLE_SIZES = (1, 5, 10, 20, 30, 40)
DEFAULT_ORDERS = (2, 3, 4, 5, 7, 10)
DEFAULT_FAMILIES = ("gaussian", "exponential", "rayleigh")
DEFAULT_SNRS = (10.0, 20.0, 30.0)

_NA = "NA"
_DIMENSIONS = ("order", "family", "snr", "depth", "width", "m")
_METRIC_NAMES = ("l1", "l2", "l2_raw", "rmse", "bd")
_SPLITS = ("test", "ood")


@dataclass(frozen=True)
class DataConfig:
    """Dataset shape shared by every cell of a sweep."""

    size: int = DEFAULT_SIZE
    domain: tuple[float, float] = DEFAULT_DOMAIN
    test_fraction: float = DEFAULT_TEST_FRACTION
    ood_domain: tuple[float, float] | None = DEFAULT_OOD_DOMAIN

    def __post_init__(self):
        if self.size < 10:
            raise ValueError(f"size must be at least 10, got {self.size}")
        check_fraction(self.test_fraction, "test_fraction")
        object.__setattr__(self, "domain", check_interval(self.domain, "domain"))
        if self.ood_domain is not None:
            object.__setattr__(
                self, "ood_domain", check_interval(self.ood_domain, "ood_domain")
            )


def _int_tuple(values, name):
    out = tuple(int(v) for v in values)
    if not out:
        raise ValueError(f"{name} must be nonempty")
    if any(v < 1 for v in out):
        raise ValueError(f"{name} entries must be positive, got {out}")
    return out


@dataclass(frozen=True)
class SweepGrid:
    """The swept dimensions plus repeats and the base seed."""

    depths: tuple[int, ...] = DEFAULT_DEPTHS
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    ensemble_sizes: tuple[int, ...] = DEFAULT_ENSEMBLE_SIZES
    orders: tuple[int, ...] = DEFAULT_ORDERS
    noise_families: tuple[str, ...] = DEFAULT_FAMILIES
    snrs: tuple[float, ...] = DEFAULT_SNRS
    repeats: int = 3
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "depths", _int_tuple(self.depths, "depths"))
        object.__setattr__(self, "widths", _int_tuple(self.widths, "widths"))
        object.__setattr__(
            self, "ensemble_sizes", _int_tuple(self.ensemble_sizes, "ensemble_sizes")
        )
        orders = tuple(int(v) for v in self.orders)
        if not orders:
            raise ValueError("orders must be nonempty")
        if any(v < 0 for v in orders):
            raise ValueError(f"orders must be non-negative, got {orders}")
        object.__setattr__(self, "orders", orders)
        families = tuple(NoiseFamily(f).value for f in self.noise_families)
        if not families:
            raise ValueError("noise_families must be nonempty")
        object.__setattr__(self, "noise_families", families)
        snrs = tuple(float(s) for s in self.snrs)
        if not snrs:
            raise ValueError("snrs must be nonempty")
        if any(not s > 0 for s in snrs):
            raise ValueError(f"snrs must be positive, got {snrs}")
        object.__setattr__(self, "snrs", snrs)
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")

    @property
    def n_cells(self) -> int:
        return (
            len(self.depths)
            * len(self.widths)
            * len(self.ensemble_sizes)
            * len(self.orders)
            * len(self.noise_families)
            * len(self.snrs)
            * self.repeats
        )


@dataclass(frozen=True)
class SweepConfig:
    """Everything a sweep needs: grid, data shape, training recipe, and
    the network settings shared by all cells."""

    grid: SweepGrid = field(default_factory=SweepGrid)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    activation: str = "relu"
    dropout_rate: float = 0.1
    parallelism: int = 1

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation(self.activation).value)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(
                f"dropout_rate must lie in [0, 1), got {self.dropout_rate}"
            )
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")

    def to_dict(self) -> dict:
        """Fully materialized config: every default appears explicitly."""
        return {
            "grid": {
                "depths": list(self.grid.depths),
                "widths": list(self.grid.widths),
                "ensemble_sizes": list(self.grid.ensemble_sizes),
                "orders": list(self.grid.orders),
                "noise_families": list(self.grid.noise_families),
                "snrs": list(self.grid.snrs),
                "repeats": self.grid.repeats,
                "base_seed": self.grid.base_seed,
            },
            "data": {
                "size": self.data.size,
                "domain": list(self.data.domain),
                "test_fraction": self.data.test_fraction,
                "ood_domain": None
                if self.data.ood_domain is None
                else list(self.data.ood_domain),
            },
            "train": {
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "learning_rate": self.train.learning_rate,
                "optimizer": self.train.optimizer,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "epsilon": self.train.epsilon,
                "early_stop_patience": self.train.early_stop_patience,
                "train_seed": self.train.train_seed,
            },
            "network": {
                "activation": self.activation,
                "dropout_rate": self.dropout_rate,
            },
            "parallelism": self.parallelism,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        def section(name, allowed):
            sub = raw.get(name, {})
            if not isinstance(sub, dict):
                raise ValueError(f"config section {name!r} must be a mapping")
            unknown = set(sub) - set(allowed)
            if unknown:
                raise ValueError(
                    f"unknown keys in config section {name!r}: {sorted(unknown)}"
                )
            return sub

        unknown_top = set(raw) - {"grid", "data", "train", "network", "parallelism"}
        if unknown_top:
            raise ValueError(f"unknown config keys: {sorted(unknown_top)}")

        grid_kw = dict(
            section(
                "grid",
                [
                    "depths",
                    "widths",
                    "ensemble_sizes",
                    "orders",
                    "noise_families",
                    "snrs",
                    "repeats",
                    "base_seed",
                ],
            )
        )
        data_kw = dict(
            section("data", ["size", "domain", "test_fraction", "ood_domain"])
        )
        if "domain" in data_kw:
            data_kw["domain"] = tuple(data_kw["domain"])
        if data_kw.get("ood_domain") is not None and "ood_domain" in data_kw:
            data_kw["ood_domain"] = tuple(data_kw["ood_domain"])
        train_kw = dict(
            section(
                "train",
                [
                    "epochs",
                    "batch_size",
                    "learning_rate",
                    "optimizer",
                    "beta1",
                    "beta2",
                    "epsilon",
                    "early_stop_patience",
                    "train_seed",
                ],
            )
        )
        net_kw = section("network", ["activation", "dropout_rate"])
        return cls(
            grid=SweepGrid(**grid_kw),
            data=DataConfig(**data_kw),
            train=TrainConfig(**train_kw),
            activation=net_kw.get("activation", "relu"),
            dropout_rate=net_kw.get("dropout_rate", 0.1),
            parallelism=raw.get("parallelism", 1),
        )


def desk_config(base_seed: int = 0, parallelism: int = 1) -> SweepConfig:
    """Small grid sized so a full pass stays tractable on one laptop.

    Dimensions are trimmed, datasets shrunk, and the epoch budget reduced
    relative to the full-grid defaults.  The preset trains sigmoid
    networks with a 0.25 dropout rate: at desk scale those settings make
    the depth/width trends visible above the repeat-to-repeat spread,
    where ReLU networks fit every depth almost equally well.
    """
    return SweepConfig(
        grid=SweepGrid(
            depths=tuple(range(1, 9)),
            widths=(6, 16, 30, 64, 128),
            ensemble_sizes=(1, 5, 10, 20),
            orders=(2, 3, 5, 7),
            noise_families=("gaussian", "exponential"),
            snrs=(10.0, 20.0),
            repeats=3,
            base_seed=base_seed,
        ),
        data=DataConfig(size=3000),
        train=TrainConfig(epochs=150, batch_size=64),
        activation="sigmoid",
        dropout_rate=0.25,
        parallelism=parallelism,
    )


def derive_seed(base_seed: int, tag: str, *parts) -> int:
    """Stable 64-bit seed from the base seed plus coordinate values.

    Value-derived (sha256 over the rendered parts), so a cell's seed
    never depends on where the cell sits in an enumeration.
    """
    payload = "|".join(str(p) for p in (base_seed, tag, *parts))
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _cell_seeds(base: int, order, family, snr, depth, width, repeat) -> dict:
    snr = repr(float(snr))
    return {
        # Shared by every cell of the same polynomial task and repeat, so
        # noise families and SNR levels see identical signals.
        "coeff_seed": derive_seed(base, "coeffs", order, repeat),
        "data_seed": derive_seed(base, "data", order, repeat),
        "noise_seed": derive_seed(base, "noise", order, family, snr, repeat),
        # Per-architecture; m excluded so ensemble sizes share a training.
        "init_seed": derive_seed(base, "init", order, family, snr, depth, width, repeat),
        "train_seed": derive_seed(base, "train", order, family, snr, depth, width, repeat),
        "mask_seed": derive_seed(base, "mask", order, family, snr, depth, width, repeat),
    }


@dataclass(frozen=True)
class RunSpec:
    """One cell to execute, with all its seeds already derived."""

    order: int
    family: str
    snr: float
    depth: int
    width: int
    m: int
    repeat: int
    coeff_seed: int
    data_seed: int
    noise_seed: int
    init_seed: int
    train_seed: int
    mask_seed: int

    def key(self) -> tuple:
        return (
            self.order,
            self.family,
            self.snr,
            self.depth,
            self.width,
            self.repeat,
            self.m,
        )

    def group_key(self) -> tuple:
        return (self.order, self.family, self.snr, self.depth, self.width, self.repeat)


def enumerate_runs(grid: SweepGrid) -> list[RunSpec]:
    """Full Cartesian product in canonical order, ensemble size innermost.

    The ordering groups cells that share a training, and doubles as the
    sort order of finished results files.
    """
    specs = []
    for order in grid.orders:
        for family in grid.noise_families:
            for snr in grid.snrs:
                for depth in grid.depths:
                    for width in grid.widths:
                        for repeat in range(grid.repeats):
                            seeds = _cell_seeds(
                                grid.base_seed, order, family, snr, depth, width, repeat
                            )
                            for m in grid.ensemble_sizes:
                                specs.append(
                                    RunSpec(
                                        order=order,
                                        family=family,
                                        snr=snr,
                                        depth=depth,
                                        width=width,
                                        m=m,
                                        repeat=repeat,
                                        **seeds,
                                    )
                                )
    return specs


@dataclass(frozen=True)
class RunResult:
    """Outcome of one cell: coordinates, seeds, training summary, and
    metrics on the in-distribution and OOD test splits.

    ``wall_seconds`` is in-memory bookkeeping only; it is deliberately
    not serialized, so results files depend on nothing but the config.
    """

    order: int
    family: str
    snr: float
    depth: int
    width: int
    m: int
    repeat: int
    coeff_seed: int
    data_seed: int
    noise_seed: int
    init_seed: int
    train_seed: int
    mask_seed: int
    diverged: bool
    diverged_epoch: int | None
    best_epoch: int | None
    final_epoch: int | None
    final_train_loss: float | None
    final_test_loss: float | None
    measured_snr: float | None
    test: MetricsRecord | None
    ood: MetricsRecord | None
    wall_seconds: float | None = None

    def key(self) -> tuple:
        return (
            self.order,
            self.family,
            self.snr,
            self.depth,
            self.width,
            self.repeat,
            self.m,
        )

    def group_key(self) -> tuple:
        return (self.order, self.family, self.snr, self.depth, self.width, self.repeat)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "family": self.family,
            "snr": self.snr,
            "depth": self.depth,
            "width": self.width,
            "m": self.m,
            "repeat": self.repeat,
            "coeff_seed": self.coeff_seed,
            "data_seed": self.data_seed,
            "noise_seed": self.noise_seed,
            "init_seed": self.init_seed,
            "train_seed": self.train_seed,
            "mask_seed": self.mask_seed,
            "diverged": self.diverged,
            "diverged_epoch": self.diverged_epoch,
            "best_epoch": self.best_epoch,
            "final_epoch": self.final_epoch,
            "final_train_loss": self.final_train_loss,
            "final_test_loss": self.final_test_loss,
            "measured_snr": self.measured_snr,
            "test": None if self.test is None else self.test.to_dict(),
            "ood": None if self.ood is None else self.ood.to_dict(),
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, raw: dict) -> "RunResult":
        expected = {f.name for f in fields(cls)} - {"wall_seconds"}
        missing = expected - set(raw)
        unknown = set(raw) - expected
        if missing or unknown:
            problems = []
            if missing:
                problems.append(f"missing fields {sorted(missing)}")
            if unknown:
                problems.append(f"unknown fields {sorted(unknown)}")
            raise ValueError("; ".join(problems))
        kwargs = dict(raw)
        for split in ("test", "ood"):
            if kwargs[split] is not None:
                kwargs[split] = MetricsRecord.from_dict(kwargs[split])
        return cls(**kwargs)


def build_dataset(config: SweepConfig, order, family, snr, repeat) -> Dataset:
    """The dataset a cell trains on, regenerated from derived seeds."""
    seeds = _cell_seeds(config.grid.base_seed, order, family, snr, depth=0, width=0, repeat=repeat)
    poly = sample_coefficients(order, seeds["coeff_seed"])
    noise = NoiseSpec(family=family, target_snr=float(snr), noise_seed=seeds["noise_seed"])
    return generate_dataset(
        poly,
        noise,
        size=config.data.size,
        domain=config.data.domain,
        test_fraction=config.data.test_fraction,
        ood_domain=config.data.ood_domain,
        seed=seeds["data_seed"],
    )


def _failed_result(spec: RunSpec, epoch: int, snr_value: float) -> RunResult:
    return RunResult(
        order=spec.order,
        family=spec.family,
        snr=spec.snr,
        depth=spec.depth,
        width=spec.width,
        m=spec.m,
        repeat=spec.repeat,
        coeff_seed=spec.coeff_seed,
        data_seed=spec.data_seed,
        noise_seed=spec.noise_seed,
        init_seed=spec.init_seed,
        train_seed=spec.train_seed,
        mask_seed=spec.mask_seed,
        diverged=True,
        diverged_epoch=epoch,
        best_epoch=None,
        final_epoch=None,
        final_train_loss=None,
        final_test_loss=None,
        measured_snr=snr_value,
        test=None,
        ood=None,
    )


def _evaluate_m(net, dataset: Dataset, spec: RunSpec, history, snr_value) -> RunResult:
    pred_test = mc_predict(net, dataset.x_test, spec.m, spec.mask_seed)
    test_metrics = evaluate(pred_test.mean, dataset.y_test, dataset.noise_test)
    ood_metrics = None
    if dataset.ood_x is not None:
        pred_ood = mc_predict(net, dataset.ood_x, spec.m, spec.mask_seed)
        ood_metrics = evaluate(pred_ood.mean, dataset.ood_noisy, dataset.ood_noise)
    return RunResult(
        order=spec.order,
        family=spec.family,
        snr=spec.snr,
        depth=spec.depth,
        width=spec.width,
        m=spec.m,
        repeat=spec.repeat,
        coeff_seed=spec.coeff_seed,
        data_seed=spec.data_seed,
        noise_seed=spec.noise_seed,
        init_seed=spec.init_seed,
        train_seed=spec.train_seed,
        mask_seed=spec.mask_seed,
        diverged=False,
        diverged_epoch=None,
        best_epoch=history.best_epoch,
        final_epoch=history.final_epoch,
        final_train_loss=history.train_loss[-1],
        final_test_loss=history.test_loss[-1],
        measured_snr=snr_value,
        test=test_metrics,
        ood=ood_metrics,
    )


def _execute_group(config: SweepConfig, specs: list[RunSpec]):
    """Train once, then evaluate every requested ensemble size.

    All specs must share a group key; divergence marks every cell of the
    group failed instead of aborting the sweep.
    """
    lead = specs[0]
    dataset = build_dataset(config, lead.order, lead.family, lead.snr, lead.repeat)
    snr_value = measured_snr(dataset)

    net_cfg = NetworkConfig(
        width=lead.width,
        depth=lead.depth,
        ensemble_size=max(s.m for s in specs),
        activation=config.activation,
        dropout_rate=config.dropout_rate,
        init_seed=lead.init_seed,
    )
    train_cfg = replace(config.train, train_seed=lead.train_seed)

    t0 = time.perf_counter()
    try:
        net, history = train(init_network(net_cfg), dataset, train_cfg)
    except TrainingDiverged as exc:
        train_seconds = time.perf_counter() - t0
        results = [_failed_result(s, exc.epoch, snr_value) for s in specs]
        timing = _group_timing(lead, specs, train_seconds, 0.0)
        return results, timing
    train_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    results = [_evaluate_m(net, dataset, s, history, snr_value) for s in specs]
    eval_seconds = time.perf_counter() - t1
    timing = _group_timing(lead, specs, train_seconds, eval_seconds)
    return results, timing


def _group_timing(lead: RunSpec, specs, train_seconds, eval_seconds) -> dict:
    return {
        "order": lead.order,
        "family": lead.family,
        "snr": lead.snr,
        "depth": lead.depth,
        "width": lead.width,
        "repeat": lead.repeat,
        "m_values": [s.m for s in specs],
        "train_seconds": round(train_seconds, 6),
        "eval_seconds": round(eval_seconds, 6),
    }


def execute_run(spec: RunSpec, config: SweepConfig) -> RunResult:
    """Run a single cell end to end; wall_seconds covers the whole cell."""
    t0 = time.perf_counter()
    results, _ = _execute_group(config, [spec])
    result = results[0]
    return replace(result, wall_seconds=time.perf_counter() - t0)


def timings_path(output_path) -> str:
    return str(output_path) + ".timings"


def load_results(path) -> list[RunResult]:
    """Parse a results JSONL file, reporting the offending line on error."""
    results = []
    seen = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                result = RunResult.from_dict(json.loads(line))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise ResultsFileError(path, lineno, str(exc)) from exc
            key = result.key()
            if key in seen:
                raise ResultsFileError(
                    path, lineno, f"duplicate record for cell {key} (first at line {seen[key]})"
                )
            seen[key] = lineno
            results.append(result)
    return results


def _group_specs(specs: list[RunSpec]) -> list[list[RunSpec]]:
    groups = []
    current = []
    for spec in specs:
        if current and spec.group_key() != current[0].group_key():
            groups.append(current)
            current = []
        current.append(spec)
    if current:
        groups.append(current)
    return groups


def _rewrite_sorted(path, results: list[RunResult]) -> None:
    ordered = sorted(results, key=lambda r: r.key())
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".results-", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            for result in ordered:
                fh.write(result.to_json_line() + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_sweep(
    config: SweepConfig,
    output_path,
    parallelism: int | None = None,
    progress=None,
) -> list[RunResult]:
    """Execute every cell of the grid, appending results as they finish.

    Cells already present in the output file are skipped, so an
    interrupted sweep resumes where it stopped; the finished file is
    rewritten in canonical order and is byte-identical however the work
    was scheduled or interrupted.  Returns all results, sorted.
    """
    if parallelism is None:
        parallelism = config.parallelism
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")

    specs = enumerate_runs(config.grid)
    existing = []
    if os.path.exists(output_path):
        existing = load_results(output_path)
    done_keys = {r.key() for r in existing}
    pending = [s for s in specs if s.key() not in done_keys]
    groups = _group_specs(pending)

    all_results = list(existing)
    if groups:
        with open(output_path, "a") as out, open(timings_path(output_path), "a") as tim:

            def record(results, timing):
                for result in results:
                    out.write(result.to_json_line() + "\n")
                    all_results.append(result)
                out.flush()
                tim.write(json.dumps(timing) + "\n")
                tim.flush()
                if progress is not None:
                    progress(len(all_results), len(specs))

            if parallelism == 1:
                for group in groups:
                    results, timing = _execute_group(config, group)
                    record(results, timing)
            else:
                with concurrent.futures.ProcessPoolExecutor(
                    max_workers=parallelism
                ) as pool:
                    futures = [
                        pool.submit(_execute_group, config, group) for group in groups
                    ]
                    for future in concurrent.futures.as_completed(futures):
                        results, timing = future.result()
                        record(results, timing)

    _rewrite_sorted(output_path, all_results)
    return sorted(all_results, key=lambda r: r.key())


# ---------------------------------------------------------------------------
# Aggregation and export
# ---------------------------------------------------------------------------


def _metric_value(result: RunResult, metric: str, split: str) -> float | None:
    record = result.test if split == "test" else result.ood
    if result.diverged or record is None:
        return None
    value = getattr(record, metric)
    return value  # bd may itself be None (degenerate moments)


def _check_metric_split(metric: str, split: str) -> None:
    if metric not in _METRIC_NAMES:
        raise ValueError(f"metric must be one of {_METRIC_NAMES}, got {metric!r}")
    if split not in _SPLITS:
        raise ValueError(f"split must be one of {_SPLITS}, got {split!r}")


def _normalize_filter(filter: dict) -> dict:
    out = {}
    for key, value in (filter or {}).items():
        if key not in _DIMENSIONS:
            raise ValueError(
                f"unknown filter dimension {key!r}; expected one of {_DIMENSIONS}"
            )
        if key == "family":
            out[key] = NoiseFamily(value).value
        elif key == "snr":
            out[key] = float(value)
        else:
            out[key] = int(value)
    return out


def _matches(result: RunResult, filter: dict) -> bool:
    return all(getattr(result, dim) == value for dim, value in filter.items())


def _aggregate(
    results: list[RunResult],
    dims: tuple[str, ...],
    metric: str,
    split: str,
    filter: dict,
):
    """Median-over-repeats metric per cell along ``dims``.

    Returns (cell -> value-or-None, cell -> record count).  Diverged
    repeats drop out of the median; a cell whose repeats all failed maps
    to None.
    """
    values = {}
    counts = {}
    for result in results:
        if not _matches(result, filter):
            continue
        cell = tuple(getattr(result, dim) for dim in dims)
        counts[cell] = counts.get(cell, 0) + 1
        value = _metric_value(result, metric, split)
        if value is not None:
            values.setdefault(cell, []).append(value)
    aggregated = {
        cell: (float(statistics.median(vals)) if vals else None)
        for cell, vals in values.items()
    }
    for cell in counts:
        aggregated.setdefault(cell, None)
    return aggregated, counts


def _axis_values(results: list[RunResult], dim: str, explicit):
    if explicit is not None:
        values = list(explicit)
        if not values:
            raise ValueError(f"axis {dim!r} has no values")
        return values
    found = sorted({getattr(r, dim) for r in results})
    if not found:
        raise ValueError(f"no results to infer {dim!r} axis values from")
    return found


@dataclass(frozen=True)
class LandscapeMatrix:
    """Dense aggregated-metric matrix over two swept dimensions."""

    x_axis: str
    y_axis: str
    x_values: tuple
    y_values: tuple
    values: np.ndarray  # shape (len(y_values), len(x_values)), NaN = failed
    metric: str
    split: str
    filter: dict

    def to_csv_text(self) -> str:
        lines = [
            ",".join(
                [f"{self.y_axis}/{self.x_axis}"] + [str(v) for v in self.x_values]
            )
        ]
        for yi, y in enumerate(self.y_values):
            cells = [
                _NA
                if math.isnan(self.values[yi, xi])
                else repr(float(self.values[yi, xi]))
                for xi in range(len(self.x_values))
            ]
            lines.append(",".join([str(y)] + cells))
        return "\n".join(lines) + "\n"


def landscape_export(
    results: list[RunResult],
    x_axis: str,
    y_axis: str,
    metric: str,
    filter: dict,
    split: str = "test",
    x_values=None,
    y_values=None,
) -> LandscapeMatrix:
    """Aggregate the metric over repeats into a (y_axis x x_axis) matrix.

    Every non-axis dimension must be pinned by ``filter``; cells with no
    records at all raise MissingCellsError, while cells whose repeats all
    diverged come back as NaN (rendered as NA in CSV form).
    """
    _check_metric_split(metric, split)
    if x_axis not in _DIMENSIONS or y_axis not in _DIMENSIONS:
        raise ValueError(f"axes must be among {_DIMENSIONS}")
    if x_axis == y_axis:
        raise ValueError("x_axis and y_axis must differ")
    filter = _normalize_filter(filter)
    unpinned = set(_DIMENSIONS) - {x_axis, y_axis} - set(filter)
    if unpinned:
        raise ValueError(
            f"filter must pin every non-axis dimension; missing {sorted(unpinned)}"
        )

    xs = _axis_values(results, x_axis, x_values)
    ys = _axis_values(results, y_axis, y_values)
    aggregated, _ = _aggregate(results, (y_axis, x_axis), metric, split, filter)

    missing = [
        {y_axis: y, x_axis: x, **filter}
        for y in ys
        for x in xs
        if (y, x) not in aggregated
    ]
    if missing:
        raise MissingCellsError("landscape cells absent from results", missing)

    matrix = np.full((len(ys), len(xs)), np.nan)
    for yi, y in enumerate(ys):
        for xi, x in enumerate(xs):
            value = aggregated[(y, x)]
            if value is not None:
                matrix[yi, xi] = value
    return LandscapeMatrix(
        x_axis=x_axis,
        y_axis=y_axis,
        x_values=tuple(xs),
        y_values=tuple(ys),
        values=matrix,
        metric=metric,
        split=split,
        filter=dict(filter),
    )


def save_landscape_csv(matrix: LandscapeMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(matrix.to_csv_text())


def optimal_depth(
    results: list[RunResult],
    width: int,
    metric: str,
    filter: dict,
    split: str = "test",
    depths=None,
) -> tuple[int, float]:
    """Depth minimizing the aggregated metric at the given width.

    Ties break toward the smallest depth.  Depths with no records raise
    MissingCellsError; depths whose repeats all failed are skipped.
    """
    _check_metric_split(metric, split)
    filter = _normalize_filter(filter)
    filter["width"] = int(width)
    depths = _axis_values(results, "depth", depths)
    aggregated, _ = _aggregate(results, ("depth",), metric, split, filter)

    missing = [{"depth": d, **filter} for d in depths if (d,) not in aggregated]
    if missing:
        raise MissingCellsError("depths absent from results", missing)

    best = None
    for depth in sorted(depths):
        value = aggregated[(depth,)]
        if value is None:
            continue
        if best is None or value < best[1]:
            best = (depth, value)
    if best is None:
        raise ValueError("every depth failed; no optimum exists")
    return best


def ensemble_curve(
    results: list[RunResult],
    metric: str,
    filter: dict,
    split: str = "test",
    sizes=None,
) -> list[tuple[int, float | None]]:
    """Aggregated metric against ensemble size, in ascending-m order."""
    _check_metric_split(metric, split)
    filter = _normalize_filter(filter)
    sizes = _axis_values(results, "m", sizes)
    aggregated, _ = _aggregate(results, ("m",), metric, split, filter)

    missing = [{"m": m, **filter} for m in sizes if (m,) not in aggregated]
    if missing:
        raise MissingCellsError("ensemble sizes absent from results", missing)
    return [(m, aggregated[(m,)]) for m in sorted(sizes)]


def save_results_csv(results: list[RunResult], path) -> None:
    """Flat CSV mirror of a results set, metrics spread across columns."""
    base = [
        "order",
        "family",
        "snr",
        "depth",
        "width",
        "m",
        "repeat",
        "coeff_seed",
        "data_seed",
        "noise_seed",
        "init_seed",
        "train_seed",
        "mask_seed",
        "diverged",
        "diverged_epoch",
        "best_epoch",
        "final_epoch",
        "final_train_loss",
        "final_test_loss",
        "measured_snr",
    ]
    metric_cols = [
        f"{split}_{name}" for split in _SPLITS for name in _METRIC_NAMES
    ]

    def render(value):
        if value is None:
            return _NA
        if isinstance(value, bool):
            return str(int(value))
        if isinstance(value, float):
            return repr(value)
        return str(value)

    with open(path, "w") as fh:
        fh.write(",".join(base + metric_cols) + "\n")
        for result in sorted(results, key=lambda r: r.key()):
            row = [render(getattr(result, name)) for name in base]
            for split in _SPLITS:
                record = getattr(result, split)
                for name in _METRIC_NAMES:
                    row.append(
                        _NA if record is None else render(getattr(record, name))
                    )
            fh.write(",".join(row) + "\n")
