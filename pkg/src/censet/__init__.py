"""Weighted survival conformal prediction under right censoring and covariate shift."""

from .conformal import (
    CalibrationScores,
    PredictionSet,
    PValueCurve,
    Verdict,
    calibration_scores,
    extract_interval,
    prediction_sets,
    pvalue_at,
    pvalue_curve,
    pvalue_curves,
    quasiconcavity_diagnostic,
)
from .data import CandidateGrid, CsvSchema, RunConfig, SplitIndex, SurvivalDataset, default_grid, load_csv, split
from .density_ratio import DensityRatioModel, fit_ratio
from .errors import (
    CensetError,
    DegenerateDesign,
    DegenerateKernel,
    DimensionMismatch,
    EmptyPredictionSet,
    InvalidDataset,
    MalformedRow,
    NoUncensoredCalibration,
)
from .kernels import KernelSpec, LocalKaplanMeier, bandwidth_rule, nw_weights
from .pipeline import ConformalPredictor, fit_predictor, fit_shared
from .quantile import QuantileModel, QuantilePair, fit_pair

__version__ = "0.1.0"

__all__ = [
    "CalibrationScores", "CandidateGrid", "CensetError", "ConformalPredictor", "CsvSchema",
    "DegenerateDesign", "DegenerateKernel", "DensityRatioModel", "DimensionMismatch",
    "EmptyPredictionSet", "InvalidDataset", "KernelSpec", "LocalKaplanMeier", "MalformedRow",
    "NoUncensoredCalibration", "PredictionSet", "PValueCurve", "QuantileModel", "QuantilePair", "RunConfig",
    "SplitIndex", "SurvivalDataset", "Verdict", "bandwidth_rule", "calibration_scores",
    "default_grid", "extract_interval", "fit_pair", "fit_predictor", "fit_ratio", "fit_shared",
    "load_csv", "nw_weights", "prediction_sets", "pvalue_at", "pvalue_curve", "pvalue_curves",
    "quasiconcavity_diagnostic", "split",
]
