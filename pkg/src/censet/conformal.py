"""Censoring-adjusted conformal p-values, their shape diagnostic and interval extraction.

For a new subject ``x`` and candidate time ``t`` the p-value is

    p(t) = [sum_i a_i 1{R_i >= R(x, t)} + a(x, t)] / [sum_i a_i + a(x, t)]

where calibration subject ``i`` carries ``a_i = delta_i / (1 - G(Y_i | x_i)) * omega(x_i)``
and the test point carries ``a(x, t) = omega(x) / (1 - G(t | x))``. With no
density-ratio model ``omega`` is identically one (unweighted SCP).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import CandidateGrid
from .errors import EmptyPredictionSet
from .quantile import QuantilePair

SHAPE_TOL = 1e-9


class Verdict(str, Enum):
    QUASI_CONCAVE = "QuasiConcave"
    VIOLATED = "Violated"

    def __str__(self) -> str:
        return self.value


def score_from_band(lower, upper, t) -> np.ndarray:
    """``max(lower - t, t - upper)``, broadcasting ``t`` along the last axis."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    t = np.asarray(t, dtype=float)
    if lower.ndim and t.ndim:
        lower, upper = lower[..., None], upper[..., None]
    return np.maximum(lower - t, t - upper)


def quantile_residual_score(pair: QuantilePair, x, t) -> float:
    lo, hi = pair.band(np.reshape(x, (1, -1)))
    return float(score_from_band(lo[0], hi[0], t))


@dataclass(frozen=True, eq=False)
class CalibrationScores:
    """Per-calibration-subject scores and weights.

    ``scores`` is NaN for censored subjects, whose ``base_weights`` are zero.
    """

    scores: np.ndarray
    base_weights: np.ndarray
    shift_factors: np.ndarray

    def __post_init__(self):
        w = self.weights
        order = np.argsort(np.where(w > 0, self.scores, np.inf), kind="stable")
        order = order[w[order] > 0]
        s = self.scores[order]
        suffix = np.concatenate([np.cumsum(w[order][::-1])[::-1], [0.0]])
        object.__setattr__(self, "_sorted", s)
        object.__setattr__(self, "_suffix", suffix)

    @property
    def weights(self) -> np.ndarray:
        return self.base_weights * self.shift_factors

    @property
    def total(self) -> float:
        return float(self._suffix[0])

    def tail_mass(self, r) -> np.ndarray:
        """``sum_i a_i 1{R_i >= r}`` for every entry of ``r``."""
        return self._suffix[np.searchsorted(self._sorted, r, side="left")]

    def rescaled(self, c: float) -> CalibrationScores:
        return CalibrationScores(self.scores, self.base_weights, self.shift_factors * c)


def calibration_scores(calib, pair: QuantilePair, censoring, ratio=None) -> CalibrationScores:
    """Scores and IPCW weights for a calibration sample.

    ``censoring`` is any object with ``cdf_at(X, t)`` returning the (capped)
    conditional censoring CDF at subject-specific times.
    """
    X, Y, ev = calib.X, calib.time, np.asarray(calib.event, dtype=bool)
    scores = np.full(len(Y), np.nan)
    base = np.zeros(len(Y))
    shift = np.ones(len(Y))
    if ev.any():
        lo, hi = pair.band(X[ev])
        scores[ev] = np.maximum(lo - Y[ev], Y[ev] - hi)
        base[ev] = 1.0 / (1.0 - censoring.cdf_at(X[ev], Y[ev]))
        if ratio is not None:
            shift[ev] = ratio(X[ev])
    return CalibrationScores(scores, base, shift)


def new_point_weights(censoring, ratio, X_new, times) -> np.ndarray:
    """``a(x, t)`` for every new subject (rows) and candidate time (columns)."""
    X_new = np.atleast_2d(X_new)
    w = 1.0 / (1.0 - censoring.cdf_on(X_new, times))
    if ratio is not None:
        w = w * np.asarray(ratio(X_new), dtype=float)[:, None]
    return w


def pvalue_matrix(scores: CalibrationScores, lower, upper, test_weights, times) -> np.ndarray:
    """Weighted p-values for every (new subject, candidate time) pair."""
    r_new = score_from_band(np.atleast_1d(lower), np.atleast_1d(upper), np.asarray(times, float))
    cal = scores.tail_mass(r_new)
    return (cal + test_weights) / (scores.total + test_weights)


def pvalue_at(scores, pair, censoring, ratio, x_new, t) -> float:
    x_new = np.reshape(np.asarray(x_new, dtype=float), (1, -1))
    lo, hi = pair.band(x_new)
    a = new_point_weights(censoring, ratio, x_new, [t])
    return float(pvalue_matrix(scores, lo, hi, a, [t])[0, 0])


# ------------------------------------------------------------------ shape


def super_level_runs(values, alpha: float) -> list[tuple[int, int]]:
    """Maximal index runs ``[start, end]`` (inclusive) where ``values > alpha``."""
    above = np.asarray(values) > alpha
    if not above.any():
        return []
    edges = np.diff(np.concatenate([[0], above.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def has_rebound(values, tol: float = SHAPE_TOL) -> bool:
    """True if some point sits below both an earlier and a later value by more than ``tol``."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return False
    before = np.maximum.accumulate(v)[:-2]
    after = np.maximum.accumulate(v[::-1])[::-1][2:]
    return bool(np.any(v[1:-1] < np.minimum(before, after) - tol))


@dataclass(frozen=True)
class Diagnostic:
    verdict: Verdict
    shape_warning: bool
    runs: tuple[tuple[int, int], ...]


def quasiconcavity_diagnostic(values, alpha: float) -> Diagnostic:
    """Contiguity of the ``{p > alpha}`` index set, plus a non-fatal rebound flag."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("values must be non-empty")
    runs = tuple(super_level_runs(values, alpha))
    verdict = Verdict.QUASI_CONCAVE if len(runs) <= 1 else Verdict.VIOLATED
    return Diagnostic(verdict, has_rebound(values), runs)


@dataclass(frozen=True)
class IntervalBounds:
    lower: float | None = None
    upper: float | None = None
    exit: float | None = None
    fallback_lower: float | None = None

    @property
    def reported_upper(self) -> float | None:
        """Midpoint between the last grid point inside the set and the first one after it."""
        if self.upper is None:
            return None
        return self.upper if self.exit is None else 0.5 * (self.upper + self.exit)


def _bounds_from_runs(runs, point, n_points: int, verdict: Verdict) -> IntervalBounds:
    if verdict is Verdict.VIOLATED:
        return IntervalBounds(fallback_lower=float(point(runs[0][0])))
    start, end = runs[0][0], runs[-1][1]
    exit_ = float(point(end + 1)) if end + 1 < n_points else None
    return IntervalBounds(float(point(start)), float(point(end)), exit_)


def extract_interval(values, points, alpha: float, verdict: Verdict | None = None) -> IntervalBounds:
    """Read the prediction set off a p-value curve on a grid.

    A contiguous set gives ``[lower, upper]`` with ``exit`` the first grid
    point after it where ``p <= alpha`` (``None`` if the set reaches the end
    of the grid). A split set gives only the one-sided ``fallback_lower``, the
    start of the first run.
    """
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    runs = super_level_runs(values, alpha)
    if not runs:
        raise EmptyPredictionSet(f"no candidate time has p > {alpha}")
    if verdict is None:
        verdict = Verdict.QUASI_CONCAVE if len(runs) == 1 else Verdict.VIOLATED
    return _bounds_from_runs(runs, points.__getitem__, points.size, verdict)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """The set ``{t in grid : p(t) > alpha}`` summarized by its verdict and bounds."""

    grid: CandidateGrid
    alpha: float
    verdict: Verdict
    interval: tuple[float, float] | None = None
    fallback_lower: float | None = None
    exit: float | None = None

    @property
    def empty(self) -> bool:
        return self.interval is None and self.fallback_lower is None

    @property
    def reported_upper(self) -> float | None:
        if self.interval is None:
            return None
        upper = self.interval[1]
        return upper if self.exit is None else 0.5 * (upper + self.exit)

    @property
    def lower(self) -> float | None:
        return self.interval[0] if self.interval is not None else self.fallback_lower

    @property
    def open_upper(self) -> bool:
        """The set is contiguous but ``p`` never returns to ``<= alpha`` on the grid."""
        return self.interval is not None and self.exit is None

    @property
    def one_sided(self) -> bool:
        return self.fallback_lower is not None or self.open_upper

    @property
    def upper_bound(self) -> float | None:
        """Finite upper end of the prediction set, ``None`` when it is one-sided or empty."""
        return None if self.one_sided else self.reported_upper

    def length(self) -> float:
        """Two-sided: reported upper minus lower; one-sided: grid end minus the lower bound."""
        if self.interval is not None:
            return self.reported_upper - self.interval[0]
        if self.fallback_lower is not None:
            return self.grid.t_max - self.fallback_lower
        return 0.0

    def covers(self, t: float) -> bool:
        if self.empty:
            return False
        if self.one_sided:
            return t >= self.lower
        return self.interval[0] <= t <= self.reported_upper

    def same_set(self, other: PredictionSet) -> bool:
        return (
            self.verdict is other.verdict
            and self.interval == other.interval
            and self.fallback_lower == other.fallback_lower
            and self.exit == other.exit
        )


@dataclass(frozen=True, eq=False)
class PValueCurve(PredictionSet):
    """A :class:`PredictionSet` that also keeps ``p`` at every grid point."""

    values: np.ndarray | None = None
    shape_warning: bool = False


def _set_from_runs(runs, grid: CandidateGrid, alpha: float) -> PredictionSet:
    verdict = Verdict.QUASI_CONCAVE if len(runs) <= 1 else Verdict.VIOLATED
    if not runs:
        return PredictionSet(grid, alpha, verdict)
    b = _bounds_from_runs(runs, grid.point, grid.n_points, verdict)
    interval = None if b.lower is None else (b.lower, b.upper)
    return PredictionSet(grid, alpha, verdict, interval, b.fallback_lower, b.exit)


def curve_from_values(values, grid: CandidateGrid, alpha: float) -> PValueCurve:
    diag = quasiconcavity_diagnostic(values, alpha)
    try:
        b = extract_interval(values, grid.points, alpha, diag.verdict)
    except EmptyPredictionSet:
        return PValueCurve(grid, alpha, diag.verdict, values=values, shape_warning=diag.shape_warning)
    interval = None if b.lower is None else (b.lower, b.upper)
    return PValueCurve(
        grid, alpha, diag.verdict, interval, b.fallback_lower, b.exit,
        values=values, shape_warning=diag.shape_warning,
    )


CHUNK_CELLS = 2_000_000


def pvalue_curves(scores, pair, censoring, ratio, X_new, grid: CandidateGrid, alpha: float):
    """One :class:`PValueCurve` per row of ``X_new``; calibration totals are shared.

    Subjects are processed in blocks so that at most about ``CHUNK_CELLS``
    (subject, time) cells are held at once.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    t = grid.points
    lo, hi = pair.band(X_new)
    step = max(1, CHUNK_CELLS // t.size)
    curves = []
    for s in range(0, X_new.shape[0], step):
        block = slice(s, s + step)
        a = new_point_weights(censoring, ratio, X_new[block], t)
        P = pvalue_matrix(scores, lo[block], hi[block], a, t)
        curves.extend(curve_from_values(row, grid, alpha) for row in P)
    return curves


def _segment_starts(grid: CandidateGrid, breaks: np.ndarray) -> np.ndarray:
    """Start indices of the grid blocks on which ``p`` is constant.

    Every breakpoint ``b`` contributes the first index ``>= b`` (points at
    ``b`` itself form their own block) and the first index ``> b``.
    """
    b = breaks[(breaks >= grid.t_min) & (breaks <= grid.t_max)]
    cuts = np.concatenate([[0], grid.first_index(b), grid.first_index(b, strict=True)])
    cuts = np.unique(cuts)
    return cuts[cuts < grid.n_points]


def prediction_sets(scores, pair, censoring, ratio, X_new, grid: CandidateGrid, alpha: float):
    """The sets :func:`pvalue_curves` would report, without evaluating every grid point.

    ``p`` changes only where the test score crosses a calibration score
    (``t = lower - R_i`` or ``t = upper + R_i``) or where the censoring CDF
    jumps, so it is evaluated once per block of grid points between
    consecutive breakpoints. ``censoring`` must expose ``jump_times`` and
    ``table(X)``, as :class:`~censet.kernels.LocalKaplanMeier` does.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    lo, hi = pair.band(X_new)
    cal = scores._sorted
    jumps = np.asarray(censoring.jump_times, dtype=float)
    uniq, G = censoring.table(X_new)
    shift = None if ratio is None else np.asarray(ratio(X_new), dtype=float)
    out = []
    for i in range(X_new.shape[0]):
        breaks = np.concatenate([lo[i] - cal, hi[i] + cal, jumps])
        starts = _segment_starts(grid, breaks)
        t = grid.point(starts)
        a = 1.0 / (1.0 - G[i, np.searchsorted(uniq, t, side="right")])
        if shift is not None:
            a = a * shift[i]
        r = np.maximum(lo[i] - t, t - hi[i])
        p = (scores.tail_mass(r) + a) / (scores.total + a)
        ends = np.append(starts[1:], grid.n_points) - 1
        runs = [(int(starts[j]), int(ends[k])) for j, k in super_level_runs(p, alpha)]
        out.append(_set_from_runs(runs, grid, alpha))
    return out


def pvalue_curve(scores, pair, censoring, ratio, x_new, grid: CandidateGrid, alpha: float) -> PValueCurve:
    return pvalue_curves(scores, pair, censoring, ratio, np.reshape(x_new, (1, -1)), grid, alpha)[0]
