"""Seeded synthetic datasets: polynomial signals plus controlled noise.

A dataset is built as noisy = p(x) + eps where p is a polynomial with
recorded coefficients and eps is drawn from one of three families at a
scale chosen so that Var(signal) / Var(noise) on the training split hits a
requested signal-to-noise ratio.  SNR is a linear variance ratio
throughout, not decibels.  Exponential and Rayleigh noise are used raw,
without mean-centering, so their location bias is part of what a model
trained on the data has to contend with.
"""

import io
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .exceptions import ZeroVarianceError
from .validation import check_fraction, check_interval, check_vector

__all__ = [
    "NoiseFamily",
    "PolynomialSpec",
    "NoiseSpec",
    "Dataset",
    "eval_polynomial",
    "sample_coefficients",
    "sample_noise",
    "noise_variance",
    "resolve_scale_for_snr",
    "generate_dataset",
    "measured_snr",
    "save_dataset_csv",
    "load_dataset_csv",
]

# Default input domain; keeps high-order polynomials numerically tame.
DEFAULT_DOMAIN = (-1.0, 1.0)
# Default out-of-distribution envelope around the training domain.
DEFAULT_OOD_DOMAIN = (-1.5, 1.5)
# Default sample count and test share: 10,000 train / 2,000 test.
DEFAULT_SIZE = 12_000
DEFAULT_TEST_FRACTION = 1.0 / 6.0

# Leading coefficients below this magnitude are redrawn so the declared
# order is the effective order.
_LEADING_COEFF_FLOOR = 0.1

_FORMAT_TAG = "polydrop-dataset-v1"


class NoiseFamily(str, Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    RAYLEIGH = "rayleigh"


@dataclass(frozen=True)
class PolynomialSpec:
    """A polynomial sum(a_i * x^i, i=0..order) with recorded provenance."""

    order: int
    coefficients: tuple[float, ...]
    coeff_seed: int = 0

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"order must be non-negative, got {self.order}")
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) != self.order + 1:
            raise ValueError(
                f"expected {self.order + 1} coefficients for order {self.order}, "
                f"got {len(coeffs)}"
            )
        if self.order > 0 and coeffs[-1] == 0.0:
            raise ValueError("leading coefficient must be nonzero")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family plus target SNR; the scale is resolved at generation.

    ``target_snr`` is the linear ratio Var(signal) / Var(noise).  Pass
    ``math.inf`` to disable noise entirely.  ``scale`` is the standard
    deviation for Gaussian, the Rayleigh sigma, or the Exponential mean
    (1/rate); it stays None until a dataset is generated.
    """

    family: NoiseFamily
    target_snr: float
    noise_seed: int = 0
    scale: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        if not self.target_snr > 0:
            raise ValueError(f"target_snr must be positive, got {self.target_snr}")
        if self.scale is not None and not self.scale >= 0:
            raise ValueError(f"scale must be non-negative, got {self.scale}")


@dataclass
class Dataset:
    """One generated dataset with its train/test/OOD partitions.

    The identity noisy = clean + noise holds exactly, element-wise; the
    noise column is kept so residual distributions can later be compared
    against exactly what was injected.
    """

    x: np.ndarray
    clean: np.ndarray
    noise: np.ndarray
    noisy: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    domain: tuple[float, float]
    poly: PolynomialSpec
    noise_spec: NoiseSpec
    seed: int
    ood_domain: tuple[float, float] | None = None
    ood_x: np.ndarray | None = None
    ood_clean: np.ndarray | None = None
    ood_noise: np.ndarray | None = None
    ood_noisy: np.ndarray | None = None

    @property
    def x_train(self):
        return self.x[self.train_idx]

    @property
    def y_train(self):
        return self.noisy[self.train_idx]

    @property
    def x_test(self):
        return self.x[self.test_idx]

    @property
    def y_test(self):
        return self.noisy[self.test_idx]

    @property
    def noise_train(self):
        return self.noise[self.train_idx]

    @property
    def noise_test(self):
        return self.noise[self.test_idx]

    @property
    def n_train(self) -> int:
        return len(self.train_idx)

    @property
    def n_test(self) -> int:
        return len(self.test_idx)

    @property
    def n_ood(self) -> int:
        return 0 if self.ood_x is None else len(self.ood_x)


def eval_polynomial(spec: PolynomialSpec, x):
    """Evaluate the polynomial at x (scalar or array) via Horner's rule."""
    x = np.asarray(x, dtype=np.float64)
    result = np.full_like(x, spec.coefficients[-1])
    for c in reversed(spec.coefficients[:-1]):
        result = result * x + c
    if result.ndim == 0:
        return float(result)
    return result


def sample_coefficients(order: int, seed: int) -> PolynomialSpec:
    """Draw coefficients i.i.d. uniform on [-1, 1].

    The leading coefficient is redrawn until its magnitude is at least
    0.1, so the declared order is always the effective one.
    """
    if order < 0:
        raise ValueError(f"order must be non-negative, got {order}")
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-1.0, 1.0, size=order + 1)
    while abs(coeffs[-1]) < _LEADING_COEFF_FLOOR:
        coeffs[-1] = rng.uniform(-1.0, 1.0)
    return PolynomialSpec(order=order, coefficients=tuple(coeffs), coeff_seed=seed)


def sample_noise(family, scale: float, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. noise samples.

    Gaussian: mean 0, std = scale.  Exponential: rate 1/scale (mean =
    scale).  Rayleigh: sigma = scale.  The asymmetric families are not
    mean-centered on purpose.
    """
    family = NoiseFamily(family)
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if not count > 0:
        raise ValueError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    if family is NoiseFamily.GAUSSIAN:
        return rng.normal(0.0, scale, size=count)
    if family is NoiseFamily.EXPONENTIAL:
        return rng.exponential(scale, size=count)
    return rng.rayleigh(scale, size=count)


def noise_variance(family, scale: float) -> float:
    """Analytic variance of a noise family at the given scale."""
    family = NoiseFamily(family)
    if family is NoiseFamily.RAYLEIGH:
        return scale * scale * (4.0 - math.pi) / 2.0
    # Gaussian: std = scale; Exponential: var = 1/rate^2 = scale^2.
    return scale * scale


def resolve_scale_for_snr(signal, family, target_snr: float) -> float:
    """Scale parameter that makes Var(noise) = Var(signal) / target_snr."""
    signal = check_vector(signal, "signal")
    if signal.size < 2:
        raise ValueError(f"need at least 2 signal samples, got {signal.size}")
    if not target_snr > 0:
        raise ValueError(f"target_snr must be positive, got {target_snr}")
    family = NoiseFamily(family)
    signal_var = float(np.var(signal))
    if signal_var == 0.0:
        raise ZeroVarianceError("signal is constant; SNR is undefined")
    noise_var = signal_var / target_snr
    if family is NoiseFamily.RAYLEIGH:
        return math.sqrt(noise_var * 2.0 / (4.0 - math.pi))
    return math.sqrt(noise_var)


def generate_dataset(
    poly: PolynomialSpec,
    noise: NoiseSpec,
    size: int = DEFAULT_SIZE,
    domain: tuple[float, float] = DEFAULT_DOMAIN,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    ood_domain: tuple[float, float] | None = DEFAULT_OOD_DOMAIN,
    seed: int = 0,
) -> Dataset:
    """Generate a seeded dataset noisy = p(x) + eps.

    Inputs are uniform on ``domain``; the noise scale is resolved against
    the clean targets of the train split only, so the test split never
    leaks into the SNR calibration.  When ``ood_domain`` is given, an
    extra block of test inputs (same size as the test split) is drawn
    from ood_domain minus domain.  Everything is a pure function of the
    specs and seeds.
    """
    if size < 10:
        raise ValueError(f"size must be at least 10, got {size}")
    check_fraction(test_fraction, "test_fraction")
    domain = check_interval(domain, "domain")

    ss = np.random.SeedSequence(seed)
    x_rng, ood_rng = (np.random.default_rng(child) for child in ss.spawn(2))

    x = x_rng.uniform(domain[0], domain[1], size=size)
    clean = eval_polynomial(poly, x)

    n_test = int(round(size * test_fraction))
    n_test = min(max(n_test, 1), size - 1)
    n_train = size - n_test
    train_idx = np.arange(n_train)
    test_idx = np.arange(n_train, size)

    if math.isinf(noise.target_snr):
        scale = 0.0
        noise_samples = np.zeros(size)
    else:
        scale = resolve_scale_for_snr(clean[train_idx], noise.family, noise.target_snr)
        noise_samples = sample_noise(noise.family, scale, size, noise.noise_seed)
    resolved = replace(noise, scale=scale)
    noisy = clean + noise_samples

    ds = Dataset(
        x=x,
        clean=clean,
        noise=noise_samples,
        noisy=noisy,
        train_idx=train_idx,
        test_idx=test_idx,
        domain=domain,
        poly=poly,
        noise_spec=resolved,
        seed=seed,
    )

    if ood_domain is not None:
        ood_domain = check_interval(ood_domain, "ood_domain")
        ds.ood_domain = ood_domain
        ds.ood_x = _sample_outside(ood_rng, n_test, ood_domain, domain)
        ds.ood_clean = eval_polynomial(poly, ds.ood_x)
        if scale > 0:
            # Never reuses the in-distribution noise stream.
            ood_seed = np.random.SeedSequence(noise.noise_seed, spawn_key=(1,))
            ood_rng_noise = np.random.default_rng(ood_seed)
            ds.ood_noise = _draw(ood_rng_noise, resolved.family, scale, n_test)
        else:
            ds.ood_noise = np.zeros(n_test)
        ds.ood_noisy = ds.ood_clean + ds.ood_noise
    return ds


def _draw(rng, family, scale, count):
    if family is NoiseFamily.GAUSSIAN:
        return rng.normal(0.0, scale, size=count)
    if family is NoiseFamily.EXPONENTIAL:
        return rng.exponential(scale, size=count)
    return rng.rayleigh(scale, size=count)


def _sample_outside(rng, count, outer, inner):
    """Uniform draws on outer minus inner, length-weighted across segments."""
    left = (outer[0], min(inner[0], outer[1]))
    right = (max(inner[1], outer[0]), outer[1])
    left_len = max(left[1] - left[0], 0.0)
    right_len = max(right[1] - right[0], 0.0)
    total = left_len + right_len
    if total <= 0:
        raise ValueError(
            f"ood_domain {outer} has no mass outside the main domain {inner}"
        )
    u = rng.uniform(0.0, total, size=count)
    out = np.where(
        u < left_len,
        left[0] + u,
        right[0] + (u - left_len),
    )
    return out


def measured_snr(dataset: Dataset) -> float:
    """Var(clean) / Var(noise) over the train split; inf when noiseless."""
    clean = dataset.clean[dataset.train_idx]
    noise = dataset.noise[dataset.train_idx]
    noise_var = float(np.var(noise))
    if noise_var == 0.0:
        return math.inf
    return float(np.var(clean)) / noise_var


# ---------------------------------------------------------------------------
# CSV serialization: metadata header lines, then x,clean,noise,noisy rows
# (train rows first, then test, then OOD).
# ---------------------------------------------------------------------------


def _meta_lines(ds: Dataset) -> list[str]:
    items = [
        ("format", _FORMAT_TAG),
        ("order", ds.poly.order),
        ("coefficients", list(ds.poly.coefficients)),
        ("coeff_seed", ds.poly.coeff_seed),
        ("family", ds.noise_spec.family.value),
        ("target_snr", ds.noise_spec.target_snr),
        ("scale", ds.noise_spec.scale),
        ("noise_seed", ds.noise_spec.noise_seed),
        ("seed", ds.seed),
        ("domain", list(ds.domain)),
        ("ood_domain", None if ds.ood_domain is None else list(ds.ood_domain)),
        ("n_train", ds.n_train),
        ("n_test", ds.n_test),
        ("n_ood", ds.n_ood),
    ]
    return [f"# {key} = {json.dumps(value)}" for key, value in items]


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write the dataset as a self-describing CSV file.

    Floats are written with repr so a reload is bit-exact.
    """
    buf = io.StringIO()
    for line in _meta_lines(dataset):
        buf.write(line + "\n")
    buf.write("x,clean,noise,noisy\n")

    order = np.concatenate([dataset.train_idx, dataset.test_idx])
    cols = (dataset.x[order], dataset.clean[order], dataset.noise[order], dataset.noisy[order])
    for row in zip(*cols):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    if dataset.n_ood:
        ood_cols = (dataset.ood_x, dataset.ood_clean, dataset.ood_noise, dataset.ood_noisy)
        for row in zip(*ood_cols):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def load_dataset_csv(path) -> Dataset:
    """Reload a dataset written by save_dataset_csv."""
    meta = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = json.loads(value.strip())
            elif line.startswith("x,"):
                continue
            else:
                rows.append([float(v) for v in line.split(",")])
    if meta.get("format") != _FORMAT_TAG:
        raise ValueError(f"{path}: not a recognized dataset file")

    data = np.asarray(rows, dtype=np.float64)
    n_train, n_test, n_ood = meta["n_train"], meta["n_test"], meta["n_ood"]
    if len(data) != n_train + n_test + n_ood:
        raise ValueError(
            f"{path}: expected {n_train + n_test + n_ood} rows, found {len(data)}"
        )

    main = data[: n_train + n_test]
    poly = PolynomialSpec(
        order=meta["order"],
        coefficients=tuple(meta["coefficients"]),
        coeff_seed=meta["coeff_seed"],
    )
    noise_spec = NoiseSpec(
        family=NoiseFamily(meta["family"]),
        target_snr=meta["target_snr"],
        noise_seed=meta["noise_seed"],
        scale=meta["scale"],
    )
    ds = Dataset(
        x=main[:, 0],
        clean=main[:, 1],
        noise=main[:, 2],
        noisy=main[:, 3],
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_train + n_test),
        domain=tuple(meta["domain"]),
        poly=poly,
        noise_spec=noise_spec,
        seed=meta["seed"],
        ood_domain=None if meta["ood_domain"] is None else tuple(meta["ood_domain"]),
    )
    if n_ood:
        ood = data[n_train + n_test :]
        ds.ood_x, ds.ood_clean, ds.ood_noise, ds.ood_noisy = (
            ood[:, 0],
            ood[:, 1],
            ood[:, 2],
            ood[:, 3],
        )
    return ds
