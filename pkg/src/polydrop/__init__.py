"""Recovering polynomial signals from noisy data with MC-dropout MLPs.

The package splits into a data generator (seeded polynomial + noise
datasets), a from-scratch MLP with dropout and backprop, Monte-Carlo
ensemble inference with an exact error decomposition, distribution-match
metrics, and a resumable grid-sweep harness with landscape exports.  The
MCDropoutMLPRegressor estimator wraps the training stack behind the
usual fit/predict interface.
"""

from .datasets import (
    Dataset,
    NoiseFamily,
    NoiseSpec,
    PolynomialSpec,
    eval_polynomial,
    generate_dataset,
    load_dataset_csv,
    measured_snr,
    sample_coefficients,
    sample_noise,
    save_dataset_csv,
)
from .ensemble import (
    EnsemblePrediction,
    ErrorDecomposition,
    decompose_error,
    ensemble_residuals,
    mc_predict,
)
from .estimator import MCDropoutMLPRegressor
from .exceptions import (
    MissingCellsError,
    ResultsFileError,
    TrainingDiverged,
    ZeroVarianceError,
)
from .metrics import (
    GaussianMoments,
    MetricsRecord,
    bhattacharyya,
    evaluate,
    gaussian_moments,
    l1_norm,
    l2_norm,
)
from .network import (
    Activation,
    Mlp,
    NetworkConfig,
    TrainConfig,
    TrainingHistory,
    backward,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
    train,
    train_arrays,
)
from .sweep import (
    DataConfig,
    LandscapeMatrix,
    RunResult,
    RunSpec,
    SweepConfig,
    SweepGrid,
    desk_config,
    ensemble_curve,
    enumerate_runs,
    execute_run,
    landscape_export,
    load_results,
    optimal_depth,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "DataConfig",
    "Dataset",
    "EnsemblePrediction",
    "ErrorDecomposition",
    "GaussianMoments",
    "LandscapeMatrix",
    "MCDropoutMLPRegressor",
    "MetricsRecord",
    "MissingCellsError",
    "Mlp",
    "NetworkConfig",
    "NoiseFamily",
    "NoiseSpec",
    "PolynomialSpec",
    "ResultsFileError",
    "RunResult",
    "RunSpec",
    "SweepConfig",
    "SweepGrid",
    "TrainConfig",
    "TrainingDiverged",
    "TrainingHistory",
    "ZeroVarianceError",
    "backward",
    "bhattacharyya",
    "decompose_error",
    "desk_config",
    "ensemble_curve",
    "ensemble_residuals",
    "enumerate_runs",
    "eval_polynomial",
    "evaluate",
    "execute_run",
    "forward",
    "gaussian_moments",
    "generate_dataset",
    "init_network",
    "l1_norm",
    "l2_norm",
    "landscape_export",
    "load_checkpoint",
    "load_dataset_csv",
    "load_results",
    "mc_predict",
    "measured_snr",
    "optimal_depth",
    "run_sweep",
    "sample_coefficients",
    "sample_noise",
    "save_checkpoint",
    "save_dataset_csv",
    "sigmoid",
    "train",
    "train_arrays",
]
