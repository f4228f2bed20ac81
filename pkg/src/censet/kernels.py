"""Nadaraya-Watson weights and the localized (kernel-weighted) Kaplan-Meier estimator.

The same product-limit machinery estimates both the conditional censoring
distribution ``G(t | x)`` (jumps at censored times) and the conditional event
distribution ``F(t | x)`` (jumps at event times).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DegenerateKernel

Kernel = Literal["gaussian", "epanechnikov"]


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float
    kernel: Kernel = "gaussian"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.kernel not in ("gaussian", "epanechnikov"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


def bandwidth_rule(n_effective: float) -> float:
    """Step rule on the effective sample size: 0.50 / 0.35 / 0.25."""
    if n_effective < 1:
        raise ValueError("n_effective must be at least 1")
    if n_effective <= 200:
        return 0.50
    if n_effective <= 400:
        return 0.35
    return 0.25


def effective_sample_size(event: np.ndarray, target: str) -> int:
    """``n`` times the share of observations that carry jumps for ``target``."""
    event = np.asarray(event, dtype=bool)
    k = int(np.count_nonzero(~event if target == "censoring" else event))
    return max(k, 1)


def _log_kernel(Xq: np.ndarray, Xref: np.ndarray, spec: KernelSpec) -> np.ndarray:
    u = (Xq[:, None, :] - Xref[None, :, :]) / spec.bandwidth
    if spec.kernel == "gaussian":
        return -0.5 * np.sum(u * u, axis=2)
    with np.errstate(divide="ignore"):
        return np.sum(np.log(np.clip(0.75 * (1.0 - u * u), 0.0, None)), axis=2)


def kernel_matrix(Xq: np.ndarray, Xref: np.ndarray, spec: KernelSpec, strict: bool = False) -> np.ndarray:
    """Row-normalized weights ``B[q, k]`` of reference ``k`` for query ``q``.

    Gaussian rows are normalized in the log domain so they never underflow.
    Epanechnikov rows with no neighbour inside the bandwidth fall back to
    uniform weights, or raise :class:`DegenerateKernel` when ``strict``.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Xref = np.atleast_2d(np.asarray(Xref, dtype=float))
    if Xq.shape[1] != Xref.shape[1]:
        raise ValueError(f"dimension mismatch: {Xq.shape[1]} vs {Xref.shape[1]}")
    logk = _log_kernel(Xq, Xref, spec)
    top = np.max(logk, axis=1, keepdims=True)
    dead = ~np.isfinite(top[:, 0])
    if dead.any():
        if strict:
            raise DegenerateKernel("no reference point inside the kernel support")
        logk[dead] = 0.0
        top[dead] = 0.0
    k = np.exp(logk - top)
    return k / k.sum(axis=1, keepdims=True)


def nw_weights(x, reference, spec: KernelSpec) -> np.ndarray:
    """Nadaraya-Watson weights of every reference point for a single query ``x``."""
    reference = np.asarray(reference, dtype=float)
    if reference.ndim == 1:
        reference = reference.reshape(-1, 1)
    if reference.shape[0] == 0:
        raise ValueError("reference sample is empty")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return kernel_matrix(x, reference, spec, strict=True)[0]


# ------------------------------------------------------------ product limit


def product_limit_table(
    weights: np.ndarray, time: np.ndarray, jump: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Distinct times ``u`` and the CDF just after each, one row per query.

    The CDF is ``1 - prod_{jumps u <= t} (1 - d(u) / r(u))`` where ``d(u)`` is
    the weight of jump-type observations at ``u`` and ``r(u)`` the weight of
    everyone with ``Y >= u``. Tied jump times are pooled into one factor.
    Column 0 of the table is the value before the first time.
    """
    weights = np.atleast_2d(weights)
    order = np.argsort(time, kind="stable")
    ts, js, ws = time[order], jump[order], weights[:, order]
    uniq, start = np.unique(ts, return_index=True)
    tot = np.add.reduceat(ws, start, axis=1)
    jmp = np.add.reduceat(ws * js, start, axis=1)
    # weight still at risk at each distinct time (Y >= u)
    risk = np.cumsum(tot[:, ::-1], axis=1)[:, ::-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        hazard = np.where(jmp > 0, jmp / risk, 0.0)
    surv = np.cumprod(1.0 - np.clip(hazard, 0.0, 1.0), axis=1)
    cdf = np.concatenate([np.zeros((weights.shape[0], 1)), 1.0 - surv], axis=1)
    return uniq, cdf


def product_limit_cdf(
    weights: np.ndarray, time: np.ndarray, jump: np.ndarray, at: np.ndarray
) -> np.ndarray:
    """Weighted product-limit CDF (see :func:`product_limit_table`) at times ``at``.

    ``at`` is either 1-D (shared evaluation times) or 2-D with one row per
    query (query-specific times).
    """
    uniq, cdf = product_limit_table(weights, time, jump)
    at = np.asarray(at, dtype=float)
    pos = np.searchsorted(uniq, at, side="right")
    if at.ndim == 1:
        return cdf[:, pos]
    return np.take_along_axis(cdf, pos.reshape(cdf.shape[0], -1), axis=1)


@dataclass(frozen=True, eq=False)
class LocalKaplanMeier:
    """Kernel-localized Kaplan-Meier estimate of a conditional CDF.

    ``target="censoring"`` estimates ``G(t | x)`` (jumps at censored times),
    ``target="event"`` estimates ``F(t | x)``. With ``standardize`` the
    covariates are divided by the reference sample's standard deviation before
    the kernel is applied; otherwise the bandwidth is in raw covariate units.
    Returned values are capped at ``cap``.
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    kernel: KernelSpec
    cap: float = 0.99
    target: Literal["censoring", "event"] = "censoring"
    standardize: bool = True

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] != np.size(self.time):
            X = X.reshape(np.size(self.time), -1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", np.asarray(self.time, dtype=float))
        object.__setattr__(self, "event", np.asarray(self.event, dtype=bool))
        if not 0 < self.cap < 1:
            raise ValueError("cap must lie in (0, 1)")
        if self.target not in ("censoring", "event"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.standardize and X.shape[0] > 1:
            sd = X.std(axis=0, ddof=1)
            scale = np.where(sd > 0, sd, 1.0)
        else:
            scale = np.ones(X.shape[1])
        object.__setattr__(self, "_scale", scale)

    @classmethod
    def fit(
        cls, dataset, kernel: KernelSpec | None = None, cap: float = 0.99,
        target="censoring", standardize: bool = True,
    ):
        if kernel is None:
            kernel = KernelSpec(bandwidth_rule(effective_sample_size(dataset.event, target)))
        return cls(dataset.X, dataset.time, dataset.event, kernel, cap, target, standardize)

    @property
    def jumps(self) -> np.ndarray:
        return ~self.event if self.target == "censoring" else self.event

    @property
    def jump_times(self) -> np.ndarray:
        """Distinct times at which the estimated CDF can jump."""
        return np.unique(self.time[self.jumps])

    def weights(self, Xq) -> np.ndarray:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        return kernel_matrix(Xq / self._scale, self.X / self._scale, self.kernel)

    def table(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """Distinct reference times and the capped CDF just after each, per query row."""
        uniq, cdf = product_limit_table(self.weights(Xq), self.time, self.jumps)
        return uniq, np.minimum(cdf, self.cap)

    def cdf_on(self, Xq, times) -> np.ndarray:
        """Capped CDF at shared ``times`` for every query row: ``(m, k)``."""
        out = product_limit_cdf(self.weights(Xq), self.time, self.jumps, np.asarray(times, float))
        return np.minimum(out, self.cap)

    def cdf_at(self, Xq, t) -> np.ndarray:
        """Capped CDF for query ``i`` at its own time ``t[i]``: ``(m,)``."""
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        out = product_limit_cdf(self.weights(Xq), self.time, self.jumps, t)
        return np.minimum(out[:, 0], self.cap)

    def __call__(self, t: float, x) -> float:
        return float(self.cdf_on(np.reshape(x, (1, -1)), [t])[0, 0])


def conditional_censoring_cdf(model: LocalKaplanMeier, t: float, x) -> float:
    if model.target != "censoring":
        raise ValueError("model does not estimate the censoring distribution")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return model(t, x)


def conditional_event_cdf(model: LocalKaplanMeier, t: float, x) -> float:
    if model.target != "event":
        raise ValueError("model does not estimate the event-time distribution")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return model(t, x)
