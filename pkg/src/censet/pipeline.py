"""End-to-end fitting: split, estimate nuisance models, calibrate, predict curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import (
    CalibrationScores,
    PredictionSet,
    PValueCurve,
    calibration_scores,
    prediction_sets,
    pvalue_curves,
)
from .data import CandidateGrid, RunConfig, SplitIndex, SurvivalDataset, default_grid, split
from .density_ratio import DensityRatioModel, fit_ratio
from .kernels import KernelSpec, LocalKaplanMeier, bandwidth_rule, effective_sample_size
from .quantile import QuantilePair, fit_pair


@dataclass(frozen=True, eq=False)
class ConformalPredictor:
    """Fitted ingredients needed to produce p-value curves for new subjects."""

    pair: QuantilePair
    censoring: LocalKaplanMeier
    scores: CalibrationScores
    grid: CandidateGrid
    alpha: float
    ratio: DensityRatioModel | None = None

    @property
    def weighted(self) -> bool:
        return self.ratio is not None

    def curves(self, X_new) -> list[PValueCurve]:
        """Full p-value curves on the grid."""
        return pvalue_curves(
            self.scores, self.pair, self.censoring, self.ratio, X_new, self.grid, self.alpha
        )

    def sets(self, X_new) -> list[PredictionSet]:
        """The same prediction sets as :meth:`curves`, evaluated only at breakpoints."""
        return prediction_sets(
            self.scores, self.pair, self.censoring, self.ratio, X_new, self.grid, self.alpha
        )


@dataclass(frozen=True, eq=False)
class SharedFit:
    """Everything that does not depend on the covariate-shift correction."""

    split: SplitIndex
    train: SurvivalDataset
    calib: SurvivalDataset
    pair: QuantilePair
    censoring: LocalKaplanMeier
    grid: CandidateGrid
    config: RunConfig

    def predictor(self, ratio: DensityRatioModel | None = None) -> ConformalPredictor:
        scores = calibration_scores(self.calib, self.pair, self.censoring, ratio)
        return ConformalPredictor(
            self.pair, self.censoring, scores, self.grid, self.config.alpha, ratio
        )

    def fit_ratio(self, test_covariates, seed: int) -> DensityRatioModel:
        cfg = self.config
        return fit_ratio(
            self.train.X,
            test_covariates,
            seed=seed,
            classifier=cfg.classifier,
            clip=cfg.prob_clip,
            n_trees=cfg.n_trees,
            max_depth=cfg.max_depth,
        )


def _kernel(dataset: SurvivalDataset, target: str, config: RunConfig) -> KernelSpec:
    if config.bandwidth_override is not None:
        return KernelSpec(config.bandwidth_override)
    return KernelSpec(bandwidth_rule(effective_sample_size(dataset.event, target)))


def fit_shared(dataset: SurvivalDataset, config: RunConfig, seed: int) -> SharedFit:
    """Split the data, then fit the quantile pair and the censoring model on the training part."""
    idx = split(dataset, config.split_fraction, seed)
    train, calib = dataset.subset(idx.train_ids), dataset.subset(idx.calib_ids)
    cap, std = config.censoring_cdf_cap, config.standardize_covariates
    censoring = LocalKaplanMeier(
        train.X, train.time, train.event, _kernel(train, "censoring", config), cap, "censoring", std
    )
    pair = fit_pair(train, config.alpha, _kernel(train, "event", config), censoring, cap, std)
    grid = config.grid or default_grid(dataset, config.grid_points, config.grid_resolution)
    return SharedFit(idx, train, calib, pair, censoring, grid, config)


def fit_predictor(
    dataset: SurvivalDataset,
    config: RunConfig,
    seed: int,
    test_covariates=None,
) -> ConformalPredictor:
    """Weighted predictor when ``test_covariates`` is given, unweighted otherwise."""
    shared = fit_shared(dataset, config, seed)
    ratio = None
    if test_covariates is not None:
        ratio = shared.fit_ratio(np.atleast_2d(test_covariates), seed)
    return shared.predictor(ratio)
