"""Synthetic conformal cases whose censoring CDF is known in closed form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from censet.conformal import CalibrationScores, new_point_weights, pvalue_matrix
from censet.data import CandidateGrid
from censet.quantile import QuantileModel, QuantilePair

ALPHAS = (0.01, 0.05, 0.1, 0.2, 0.5)


@dataclass(frozen=True)
class ExponentialCensoring:
    """``G(t | x) = 1 - exp(-rate(x) t)`` with ``rate(x) = base * exp(x . slope)``."""

    base: float
    slope: np.ndarray

    def rate(self, X):
        return self.base * np.exp(np.atleast_2d(X) @ self.slope)

    def cdf_at(self, X, t):
        return 1.0 - np.exp(-self.rate(X) * np.asarray(t, dtype=float))

    def cdf_on(self, X, times):
        return 1.0 - np.exp(-np.outer(self.rate(X), np.asarray(times, dtype=float)))

    def sample(self, X, rng):
        return rng.exponential(1.0 / self.rate(X))


@dataclass(frozen=True)
class Case:
    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    pair: QuantilePair
    censoring: ExponentialCensoring
    x_new: np.ndarray
    grid: CandidateGrid

    def scores(self, omega=None) -> CalibrationScores:
        ev = self.event
        lo, hi = self.pair.band(self.X)
        s = np.where(ev, np.maximum(lo - self.time, self.time - hi), np.nan)
        base = np.where(ev, 1.0 / (1.0 - self.censoring.cdf_at(self.X, self.time)), 0.0)
        shift = np.ones(len(s)) if omega is None else omega(self.X)
        return CalibrationScores(s, base, shift)

    def pvalues(self, omega=None, c: float = 1.0) -> np.ndarray:
        """p on the grid for ``x_new`` with shift function ``omega`` scaled by ``c``."""
        scaled = None if omega is None else (lambda X: c * omega(X))
        sc = self.scores(scaled)
        t = self.grid.points
        lo, hi = self.pair.band(self.x_new[None, :])
        a = new_point_weights(self.censoring, scaled, self.x_new[None, :], t)
        return pvalue_matrix(sc, lo, hi, a, t)[0]


def make_case(rng: np.random.Generator, n_points: int = 400) -> Case:
    """Log-linear event times, exponential censoring and a perturbed quantile band."""
    n = int(rng.integers(20, 120))
    p = int(rng.integers(1, 3))
    beta = rng.normal(0, 1.5, p)
    sigma = rng.uniform(0.2, 1.0)
    X = rng.uniform(size=(n + 1, p))
    T = np.exp(1.0 + X @ beta + sigma * rng.normal(size=n + 1))
    cens = ExponentialCensoring(
        float(rng.uniform(0.1, 2.0) / np.median(T)), rng.normal(0, 1.0, p)
    )
    C = cens.sample(X, rng)
    time, event = np.minimum(T, C), T <= C
    z = 1.645 * sigma
    jitter = rng.normal(0, 0.3, (2, p + 1))
    lower = QuantileModel(0.05, 1.0 - z + jitter[0, 0], beta + jitter[0, 1:])
    upper = QuantileModel(0.95, 1.0 + z + jitter[1, 0], beta + jitter[1, 1:])
    grid = CandidateGrid(0.0, 1.25 * float(time[:n].max()), n_points)
    return Case(X[:n], time[:n], event[:n], QuantilePair(lower, upper), cens, X[n], grid)


def random_shift(rng: np.random.Generator, p: int):
    gamma = rng.normal(0, 1.0, p)
    return lambda X: np.exp(np.atleast_2d(X) @ gamma)
