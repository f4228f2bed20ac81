"""Monte Carlo coverage experiments for weighted and unweighted SCP.

Covariates are U(0, 1)^2, ``log T = 2 + 3 x1 - x2 + eps`` and the censoring
variable is uniform on ``[x1 + x2, a0 + x1 + x2]`` on the log-time scale, with
``a0`` chosen per error model to reach roughly 20/40/60/80% censoring.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, NamedTuple

import numpy as np

from .data import RunConfig, SurvivalDataset
from .errors import CensetError
from .pipeline import fit_shared

log = logging.getLogger(__name__)

INTERCEPT = 2.0
BETA = np.array([3.0, -1.0])
GAMMA = np.array([-1.0, 1.0])
SHIFT_SHARE = 0.25
POOL_FACTOR = 20
MAX_FAILURE_SHARE = 0.05
# Heteroscedastic errors give nearly deterministic times when x1 is small, so
# the candidate grid needs a step far below the typical interval width. Sets
# are evaluated at breakpoints only, so a fine grid costs nothing extra.
SIM_GRID_RESOLUTION = 1e-3

CENSORING_LEVELS = ("C20", "C40", "C60", "C80")
ERROR_MODELS = ("homoscedastic", "heteroscedastic")
A0 = {
    "homoscedastic": dict(zip(CENSORING_LEVELS, (10.0, 4.75, 3.0, 2.04))),
    "heteroscedastic": dict(zip(CENSORING_LEVELS, (8.3, 4.4, 3.15, 2.15))),
}
# The noiseless model is a test hook; it borrows the homoscedastic constants.
A0["noiseless"] = A0["homoscedastic"]

ErrorModel = Literal["homoscedastic", "heteroscedastic", "noiseless"]


@dataclass(frozen=True)
class ScenarioSpec:
    n: int = 300
    error_model: ErrorModel = "homoscedastic"
    censoring_level: str = "C20"
    shift: bool = True
    n_test: int = 100
    n_reps: int = 500
    alpha: float = 0.1
    base_seed: int = 0
    normal_variance: bool = True
    gamma_second_arg: Literal["rate", "scale"] = "rate"
    config: RunConfig = field(default_factory=lambda: RunConfig(grid_resolution=SIM_GRID_RESOLUTION))

    def __post_init__(self):
        if self.n < 50:
            raise ValueError("n must be at least 50")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if self.n_test < 1:
            raise ValueError("n_test must be at least 1")
        if self.error_model not in A0:
            raise ValueError(f"unknown error model {self.error_model!r}")
        if self.censoring_level not in CENSORING_LEVELS:
            raise ValueError(f"unknown censoring level {self.censoring_level!r}")
        if self.gamma_second_arg not in ("rate", "scale"):
            raise ValueError("gamma_second_arg must be 'rate' or 'scale'")
        if self.config.alpha != self.alpha:
            object.__setattr__(self, "config", replace(self.config, alpha=self.alpha))

    @property
    def a0(self) -> float:
        return A0[self.error_model][self.censoring_level]

    @property
    def key(self) -> tuple[int, ...]:
        return (
            self.n,
            ERROR_MODELS.index(self.error_model) if self.error_model in ERROR_MODELS else 9,
            CENSORING_LEVELS.index(self.censoring_level),
            int(self.shift),
        )

    def label(self) -> str:
        shift = "shift" if self.shift else "noshift"
        return f"n={self.n} {self.error_model} {self.censoring_level} {shift}"


class TestSample(NamedTuple):
    X: np.ndarray
    T: np.ndarray
    tilted: np.ndarray


TestSample.__test__ = False  # not a pytest class


def _errors(spec: ScenarioSpec, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    if spec.error_model == "noiseless":
        return np.zeros(n)
    if spec.error_model == "homoscedastic":
        sd = math.sqrt(0.5) if spec.normal_variance else 0.5
        return rng.normal(0.0, sd, size=n)
    shape = 0.5 * np.abs(X[:, 0])
    second = 0.3 + 5.0 * np.abs(X[:, 1])
    scale = 1.0 / second if spec.gamma_second_arg == "rate" else second
    # shape 0 is a point mass at zero
    out = np.zeros(n)
    pos = shape > 0
    out[pos] = rng.gamma(shape[pos], scale[pos])
    return out


def event_times(spec: ScenarioSpec, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.exp(INTERCEPT + X @ BETA + _errors(spec, X, rng))


def censoring_times(spec: ScenarioSpec, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    s = X.sum(axis=1)
    return np.exp(rng.uniform(s, s + spec.a0))


def censoring_cdf(spec: ScenarioSpec, X: np.ndarray, t) -> np.ndarray:
    """Exact ``G(t | x)`` implied by the censoring mechanism, one row per subject."""
    s = np.atleast_2d(X).sum(axis=1)[:, None]
    with np.errstate(divide="ignore"):
        lt = np.log(np.maximum(np.asarray(t, dtype=float), 0.0))
    return np.clip((lt - s) / spec.a0, 0.0, 1.0)


def generate_training(spec: ScenarioSpec, seed) -> SurvivalDataset:
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(spec.n, 2))
    T = event_times(spec, X, rng)
    C = censoring_times(spec, X, rng)
    return SurvivalDataset(X, np.minimum(T, C), T <= C, ("x1", "x2"))


def tilted_covariates(k: int, rng: np.random.Generator, gamma=GAMMA, pool_factor=POOL_FACTOR):
    """``k`` draws resampled from a fresh uniform pool with probability ``∝ exp(x·gamma)``."""
    gamma = np.asarray(gamma, dtype=float)
    pool = rng.uniform(size=(max(pool_factor * k, 1), gamma.size))
    logw = pool @ gamma
    w = np.exp(logw - logw.max())
    pick = rng.choice(pool.shape[0], size=k, replace=True, p=w / w.sum())
    return pool[pick]


def generate_test(spec: ScenarioSpec, seed, gamma=GAMMA) -> TestSample:
    """Test covariates and true event times; under shift a random 25% are tilted."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(spec.n_test, 2))
    tilted = np.zeros(spec.n_test, dtype=bool)
    if spec.shift:
        k = int(round(SHIFT_SHARE * spec.n_test))
        idx = rng.choice(spec.n_test, size=k, replace=False)
        X[idx] = tilted_covariates(k, rng, gamma, POOL_FACTOR * spec.n_test // max(k, 1))
        tilted[idx] = True
    T = event_times(spec, X, rng)
    return TestSample(X, T, tilted)


# ------------------------------------------------------------- replication


@dataclass(frozen=True)
class RepResult:
    covered: dict
    length: dict
    fallback: dict
    censoring_rate: float
    attempts: int


@dataclass(frozen=True)
class MetricRow:
    scenario: ScenarioSpec
    method: Literal["WeightedSCP", "SCP"]
    avg_coverage: float
    avg_length: float
    mc_se_coverage: float
    realized_censoring_rate: float
    fallback_fraction: float
    n_failures: int = 0

    def as_record(self) -> dict:
        s = self.scenario
        return {
            "n": s.n,
            "censoring": s.censoring_level,
            "error_model": s.error_model,
            "shift": int(s.shift),
            "method": self.method,
            "ac": f"{100 * self.avg_coverage:.2f}",
            "al": f"{self.avg_length:.2f}",
            "mc_se": f"{100 * self.mc_se_coverage:.2f}",
            "fallback_fraction": f"{self.fallback_fraction:.4f}",
            "realized_censoring": f"{100 * self.realized_censoring_rate:.2f}",
        }


METHODS = ("WeightedSCP", "SCP")


def run_replication(spec: ScenarioSpec, rep: int) -> RepResult:
    """One replication, redrawn with a perturbed seed if a fit fails."""
    max_attempts = max(3, int(MAX_FAILURE_SHARE * spec.n_reps) + 2)
    for attempt in range(max_attempts):
        ss = np.random.SeedSequence([spec.base_seed, *spec.key, rep, attempt])
        s_train, s_test, s_split, s_ratio = ss.spawn(4)
        try:
            data = generate_training(spec, s_train)
            test = generate_test(spec, s_test)
            shared = fit_shared(data, spec.config, int(s_split.generate_state(1)[0]))
            ratio = shared.fit_ratio(test.X, int(s_ratio.generate_state(1)[0]))
        except CensetError as exc:
            log.info("%s rep %d attempt %d failed: %s", spec.label(), rep, attempt, exc)
            continue
        covered, length, fallback = {}, {}, {}
        for method, r in zip(METHODS, (ratio, None)):
            curves = shared.predictor(r).sets(test.X)
            covered[method] = np.array([c.covers(t) for c, t in zip(curves, test.T)])
            length[method] = np.array([c.length() for c in curves])
            fallback[method] = np.array([c.fallback_lower is not None for c in curves])
        return RepResult(covered, length, fallback, data.censoring_rate, attempt + 1)
    raise RuntimeError(f"{spec.label()} rep {rep}: every attempt failed")


def _worker_count() -> int:
    env = os.environ.get("CENSET_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_all(spec: ScenarioSpec, workers: int | None) -> list[RepResult]:
    workers = workers or _worker_count()
    reps = range(spec.n_reps)
    if workers <= 1 or spec.n_reps == 1:
        return [run_replication(spec, r) for r in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_replication, [spec] * spec.n_reps, reps, chunksize=4))


def aggregate(spec: ScenarioSpec, results: list[RepResult]) -> tuple[MetricRow, MetricRow]:
    failures = sum(r.attempts - 1 for r in results)
    if failures > MAX_FAILURE_SHARE * spec.n_reps:
        raise RuntimeError(
            f"{spec.label()}: {failures} failed replications exceed "
            f"{100 * MAX_FAILURE_SHARE:.0f}% of {spec.n_reps}"
        )
    cens = math.fsum(r.censoring_rate for r in results) / len(results)
    rows = []
    for method in METHODS:
        cov = np.concatenate([r.covered[method] for r in results]).astype(float)
        per_rep = np.array([r.covered[method].mean() for r in results])
        lengths = np.concatenate([r.length[method] for r in results])
        fb = np.concatenate([r.fallback[method] for r in results]).astype(float)
        se = float(per_rep.std(ddof=1) / math.sqrt(len(per_rep))) if len(per_rep) > 1 else 0.0
        rows.append(
            MetricRow(
                spec,
                method,
                math.fsum(cov) / cov.size,
                math.fsum(lengths) / lengths.size,
                se,
                cens,
                math.fsum(fb) / fb.size,
                failures,
            )
        )
    return rows[0], rows[1]


def run_scenario(spec: ScenarioSpec, workers: int | None = None) -> tuple[MetricRow, MetricRow]:
    """Run every replication of ``spec``; returns (WeightedSCP, SCP) rows."""
    return aggregate(spec, _run_all(spec, workers))


# ------------------------------------------------------------------ tables


def table_scenarios(table: int, reps: int, seed: int, n_test: int = 100, **kw) -> list[ScenarioSpec]:
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if table == 1:
        sizes, shift = (300, 800), True
    elif table == 2:
        sizes, shift = (300,), False
    else:
        raise ValueError("table must be 1 or 2")
    return [
        ScenarioSpec(n, em, cl, shift, n_test, reps, base_seed=seed, **kw)
        for n in sizes
        for em in ERROR_MODELS
        for cl in CENSORING_LEVELS
    ]


METRIC_COLUMNS = (
    "n", "censoring", "error_model", "shift", "method",
    "ac", "al", "mc_se", "fallback_fraction", "realized_censoring",
)


def metrics_csv(rows: list[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row.as_record())
    return buf.getvalue()


def markdown_table(rows: list[MetricRow]) -> str:
    """AC%/AL per method and error model, one line per (n, censoring level)."""
    cells = {}
    for r in rows:
        s = r.scenario
        cells[(s.n, s.censoring_level, s.error_model, r.method)] = r
    lines = [
        "| n | Censoring | Homo Weighted AC% | AL | Homo SCP AC% | AL "
        "| Hetero Weighted AC% | AL | Hetero SCP AC% | AL |",
        "|---|---|---|---|---|---|---|---|---|---|",
    ]
    for n in sorted({k[0] for k in cells}):
        for cl in CENSORING_LEVELS:
            parts = [str(n), cl[1:] + "%"]
            present = False
            for em in ERROR_MODELS:
                for m in METHODS:
                    r = cells.get((n, cl, em, m))
                    if r is None:
                        parts += ["", ""]
                    else:
                        present = True
                        parts += [f"{100 * r.avg_coverage:.2f}", f"{r.avg_length:.2f}"]
            if present:
                lines.append("| " + " | ".join(parts) + " |")
    return "\n".join(lines) + "\n"


def scenario_record(spec: ScenarioSpec) -> dict:
    d = asdict(spec)
    d.pop("config")
    return d
