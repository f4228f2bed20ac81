"""Covariate density ratio test/train estimated from classifier odds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DimensionMismatch
from .forest import LogisticClassifier, RandomForestClassifier


@dataclass(frozen=True, eq=False)
class DensityRatioModel:
    """``ratio(x) = correction * q / (1 - q)`` with ``q`` the clipped test-class probability."""

    classifier: Any
    clip: tuple[float, float] = (0.01, 0.99)
    class_balance_correction: float = 1.0

    @property
    def bounds(self) -> tuple[float, float]:
        lo, hi = self.clip
        c = self.class_balance_correction
        return c * lo / (1 - lo), c * hi / (1 - hi)

    def ratio_from_proba(self, prob) -> np.ndarray:
        q = np.clip(np.asarray(prob, dtype=float), *self.clip)
        return self.class_balance_correction * q / (1.0 - q)

    def __call__(self, X) -> np.ndarray:
        return self.ratio_from_proba(self.classifier.predict_proba(np.atleast_2d(X)))


def ratio(model: DensityRatioModel, x) -> float:
    return float(model(np.reshape(np.asarray(x, dtype=float), (1, -1)))[0])


def fit_ratio(
    train_covariates,
    test_covariates,
    seed: int = 0,
    classifier: str = "forest",
    clip: tuple[float, float] = (0.01, 0.99),
    n_trees: int = 100,
    max_depth: int = 6,
) -> DensityRatioModel:
    """Train a classifier of test (label 1) against training (label 0) covariates."""
    A = np.atleast_2d(np.asarray(train_covariates, dtype=float))
    B = np.atleast_2d(np.asarray(test_covariates, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("both covariate samples must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"train has {A.shape[1]} covariates, test has {B.shape[1]}")
    X = np.vstack([A, B])
    y = np.concatenate([np.zeros(A.shape[0]), np.ones(B.shape[0])])
    if classifier == "forest":
        clf = RandomForestClassifier(n_trees=n_trees, max_depth=max_depth, seed=seed).fit(X, y)
    elif classifier == "logistic":
        clf = LogisticClassifier().fit(X, y)
    else:
        raise ValueError(f"unknown classifier {classifier!r}")
    return DensityRatioModel(clf, tuple(clip), A.shape[0] / B.shape[0])
