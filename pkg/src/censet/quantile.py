"""Locally weighted censored quantile regression on log time.

Censored observations are handled by redistribution of mass: a censored
subject keeps weight ``w_i`` at its observed log time and hands the remaining
``1 - w_i`` to a pseudo observation far in the right tail. The weights come
from the localized Kaplan-Meier estimate of the event-time CDF.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset
from .errors import DegenerateDesign
from .kernels import KernelSpec, LocalKaplanMeier, bandwidth_rule, effective_sample_size

log = logging.getLogger(__name__)

PSEUDO_INFINITY_FACTOR = 100.0
IDENTIFIABILITY_SHARE = 0.20
CROSSING_SHARE = 0.10


def check_loss(u: np.ndarray, tau: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


@dataclass(frozen=True)
class QuantileModel:
    tau: float
    intercept: float
    coefficients: np.ndarray
    scale: str = "log"

    def linear_predictor(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] == 0:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + X @ self.coefficients

    def predict(self, X) -> np.ndarray:
        return np.exp(self.linear_predictor(X))


@dataclass(frozen=True)
class QuantilePair:
    lower: QuantileModel
    upper: QuantileModel
    identifiability_warning: bool = False
    crossing_fraction: float = 0.0

    @property
    def crossing_flag(self) -> bool:
        return self.crossing_fraction > CROSSING_SHARE

    def band(self, X) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.predict(X), self.upper.predict(X)


def redistribution_weights(event, event_cdf_at_obs, tau: float) -> np.ndarray:
    """Mass kept at the observed time for each subject.

    Events keep all their mass. A censored subject whose estimated CDF at its
    censoring time is still below ``tau`` keeps ``(tau - F) / (1 - F)``;
    otherwise it keeps none and everything moves to the pseudo point.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    event = np.asarray(event, dtype=bool)
    F = np.asarray(event_cdf_at_obs, dtype=float)
    w = np.ones_like(F)
    cens = ~event
    below = cens & (F < tau)
    w[cens] = 0.0
    w[below] = (tau - F[below]) / (1.0 - F[below])
    return w


# ------------------------------------------------------------------ solver


def _objective(D, y, w, tau, beta):
    return float(np.sum(w * check_loss(y - D @ beta, tau)))


def _irls(D, y, w, tau, eps_final=1e-6, iters_per_level=50):
    """Majorize-minimize iterations on a perturbed check loss (Hunter and Lange)."""
    sw = np.sqrt(w)
    beta = np.linalg.lstsq(D * sw[:, None], y * sw, rcond=None)[0]
    spread = max(float(np.std(y)), 1e-8)
    lin = (tau - 0.5) * (D.T @ w)
    eps = 0.1 * spread
    while True:
        for _ in range(iters_per_level):
            r = y - D @ beta
            v = w / (2.0 * (eps + np.abs(r)))
            A = D.T @ (D * v[:, None])
            new = np.linalg.lstsq(A, D.T @ (v * y) + lin, rcond=None)[0]
            done = np.max(np.abs(new - beta)) < 1e-10 * (1 + np.max(np.abs(beta)))
            beta = new
            if done:
                break
        if eps <= eps_final * spread:
            return beta
        eps = max(eps * 0.1, eps_final * spread)


def _line_minimizer(r, g, w, tau):
    """Exact minimizer of ``s -> sum w * rho(r - s g)`` over the real line."""
    m = np.abs(g) > 1e-13
    if not m.any():
        return 0.0
    b = r[m] / g[m]
    c = w[m] * np.abs(g[m])
    tk = np.where(g[m] > 0, tau, 1.0 - tau)
    order = np.argsort(b, kind="stable")
    b, c, tk = b[order], c[order], tk[order]
    slope = -np.sum(c * tk) + np.cumsum(c)
    i = int(np.searchsorted(slope, 0.0, side="left"))
    return float(b[min(i, b.size - 1)])


def _basis(D, order):
    """First rows in ``order`` forming a nonsingular square submatrix."""
    q = D.shape[1]
    chosen: list[int] = []
    for i in order:
        trial = chosen + [int(i)]
        if np.linalg.matrix_rank(D[trial], tol=1e-10 * max(1.0, np.abs(D[trial]).max())) == len(trial):
            chosen = trial
            if len(chosen) == q:
                return chosen
    return None


def _polish(D, y, w, tau, beta, max_pivots=500):
    """Move from an approximate solution to an exact vertex by edge line searches."""
    r = y - D @ beta
    S = _basis(D, np.argsort(np.abs(r), kind="stable"))
    if S is None:
        return beta
    start, start_obj = beta, _objective(D, y, w, tau, beta)
    beta = np.linalg.solve(D[S], y[S])
    best = _objective(D, y, w, tau, beta)
    for _ in range(max_pivots):
        r = y - D @ beta
        inv = np.linalg.inv(D[S])
        moved = False
        for j in range(D.shape[1]):
            g = D @ inv[:, j]
            s = _line_minimizer(r, g, w, tau)
            if s == 0.0:
                continue
            cand = beta + s * inv[:, j]
            fc = _objective(D, y, w, tau, cand)
            if fc < best - 1e-12 * (1 + abs(best)):
                rc = np.abs(y - D @ cand)
                rc[S[:j] + S[j + 1:]] = np.inf
                k = int(np.argmin(rc))
                S_new = S[:j] + [k] + S[j + 1:]
                if np.linalg.matrix_rank(D[S_new]) < D.shape[1]:
                    continue
                S = S_new
                beta = np.linalg.solve(D[S], y[S])
                best = _objective(D, y, w, tau, beta)
                moved = True
                break
        if not moved:
            break
    return beta if best <= start_obj else start


def weighted_quantile_regression(D, y, w, tau: float) -> np.ndarray:
    """Minimize ``sum_i w_i rho_tau(y_i - D_i beta)`` over ``beta``.

    ``D`` is the full design including any intercept column. Rows with zero
    weight are dropped; the remaining design must have full column rank.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = w > 0
    D, y, w = D[keep], y[keep], w[keep]
    q = D.shape[1]
    if D.shape[0] < q or np.linalg.matrix_rank(D) < q:
        raise DegenerateDesign(
            f"weighted design has rank {np.linalg.matrix_rank(D) if D.size else 0} < {q}"
        )
    beta = _irls(D, y, w, tau)
    return _polish(D, y, w, tau, beta)


# ------------------------------------------------------------- public API


def _event_model(
    train: SurvivalDataset, spec: KernelSpec | None, cap: float, standardize: bool = True
) -> LocalKaplanMeier:
    if spec is None:
        spec = KernelSpec(bandwidth_rule(effective_sample_size(train.event, "event")))
    return LocalKaplanMeier(train.X, train.time, train.event, spec, cap, "event", standardize)


def _augmented(train: SurvivalDataset, weights: np.ndarray):
    logy = np.log(train.time)
    y_plus = float(np.log(PSEUDO_INFINITY_FACTOR * np.max(train.time)))
    D = np.column_stack([np.ones(len(train)), train.X])
    cens = ~train.event
    D_aug = np.vstack([D, D[cens]])
    y_aug = np.concatenate([logy, np.full(int(cens.sum()), y_plus)])
    w_aug = np.concatenate([weights, 1.0 - weights[cens]])
    return D_aug, y_aug, w_aug


def censored_check_objective(train: SurvivalDataset, weights, tau, intercept, coefficients) -> float:
    D, y, w = _augmented(train, np.asarray(weights, dtype=float))
    beta = np.concatenate([[intercept], np.atleast_1d(coefficients)])
    return _objective(D, y, w, tau, beta)


def fit_with_weights(train: SurvivalDataset, tau: float, weights) -> QuantileModel:
    weights = np.asarray(weights, dtype=float)
    p = train.n_features
    if np.count_nonzero(weights > 0) < p + 2:
        raise DegenerateDesign(f"fewer than {p + 2} subjects with positive weight at tau={tau}")
    D, y, w = _augmented(train, weights)
    beta = weighted_quantile_regression(D, y, w, tau)
    return QuantileModel(float(tau), float(beta[0]), np.array(beta[1:]))


def fit(
    train: SurvivalDataset,
    tau: float,
    spec: KernelSpec | None = None,
    cap: float = 0.99,
    event_model: LocalKaplanMeier | None = None,
    standardize: bool = True,
) -> QuantileModel:
    """Censored linear quantile regression of ``log Y`` on the covariates at level ``tau``."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if event_model is None:
        event_model = _event_model(train, spec, cap, standardize)
    F = np.zeros(len(train))
    cens = ~train.event
    if cens.any():
        F[cens] = event_model.cdf_at(train.X[cens], train.time[cens])
    return fit_with_weights(train, tau, redistribution_weights(train.event, F, tau))


def fit_pair(
    train: SurvivalDataset,
    alpha: float,
    spec: KernelSpec | None = None,
    censoring: LocalKaplanMeier | None = None,
    cap: float = 0.99,
    standardize: bool = True,
) -> QuantilePair:
    """Fit the ``alpha/2`` and ``1 - alpha/2`` quantile models.

    When a censoring model is supplied, the pair is flagged as poorly
    identified if more than 20% of training subjects have the censoring CDF at
    its cap at their predicted upper quantile.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    event_model = _event_model(train, spec, cap, standardize)
    lower = fit(train, alpha / 2, event_model=event_model)
    upper = fit(train, 1 - alpha / 2, event_model=event_model)
    lo, hi = lower.predict(train.X), upper.predict(train.X)
    crossing = float(np.mean(hi < lo))
    warn = False
    if censoring is not None:
        g = censoring.cdf_at(train.X, hi)
        share = float(np.mean(g >= censoring.cap))
        warn = share > IDENTIFIABILITY_SHARE
        if warn:
            log.info(
                "upper quantile poorly identified: censoring CDF capped for %.0f%% of "
                "training subjects", 100 * share,
            )
    if crossing > CROSSING_SHARE:
        log.info("quantile curves cross on %.0f%% of training points", 100 * crossing)
    return QuantilePair(lower, upper, warn, crossing)
