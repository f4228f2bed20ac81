"""Survival records, train/calibration splitting, candidate grids and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidDataset, MalformedRow, NoUncensoredCalibration

SPLIT_RETRIES = 20


class Subject(NamedTuple):
    covariates: tuple[float, ...]
    observed_time: float
    event: bool


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored sample held column-wise.

    ``X`` is ``(n, p)``, ``time`` holds ``Y = min(T, C)`` and ``event`` holds
    the indicator ``T <= C``. Arrays are made read-only on construction.
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: tuple[str, ...] = ()
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        time = np.array(self.time, dtype=float).reshape(-1)
        event = np.array(self.event, dtype=bool).reshape(-1)
        n = time.shape[0]
        if n == 0:
            raise InvalidDataset("dataset is empty")
        if X.shape[0] != n or event.shape[0] != n:
            raise InvalidDataset(
                f"row counts differ: X={X.shape[0]}, time={n}, event={event.shape[0]}"
            )
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            raise InvalidDataset("observed times must be positive and finite")
        if not np.all(np.isfinite(X)):
            raise InvalidDataset("covariates must be finite")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise InvalidDataset(f"{len(names)} feature names for {X.shape[1]} covariates")
        if self.ids is not None and len(self.ids) != n:
            raise InvalidDataset("ids length does not match the number of subjects")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "time", _readonly(time))
        object.__setattr__(self, "event", _readonly(event))
        object.__setattr__(self, "feature_names", names)
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @classmethod
    def from_subjects(
        cls, subjects: Iterable[Subject], feature_names: Sequence[str] = ()
    ) -> SurvivalDataset:
        subjects = list(subjects)
        if not subjects:
            raise InvalidDataset("dataset is empty")
        p = len(subjects[0].covariates)
        if any(len(s.covariates) != p for s in subjects):
            raise InvalidDataset("subjects have inconsistent covariate dimension")
        X = np.array([s.covariates for s in subjects], dtype=float).reshape(len(subjects), p)
        return cls(
            X,
            [s.observed_time for s in subjects],
            [s.event for s in subjects],
            tuple(feature_names),
        )

    def __len__(self) -> int:
        return self.time.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def censoring_rate(self) -> float:
        return 1.0 - float(np.mean(self.event))

    @property
    def subjects(self) -> list[Subject]:
        return [
            Subject(tuple(float(v) for v in row), float(t), bool(d))
            for row, t, d in zip(self.X, self.time, self.event)
        ]

    def subset(self, idx: Sequence[int] | np.ndarray) -> SurvivalDataset:
        idx = np.asarray(idx, dtype=int)
        ids = None if self.ids is None else tuple(self.ids[i] for i in idx)
        return SurvivalDataset(
            self.X[idx], self.time[idx], self.event[idx], self.feature_names, ids
        )

    def subject_ids(self) -> tuple[str, ...]:
        return self.ids if self.ids is not None else tuple(str(i) for i in range(len(self)))


@dataclass(frozen=True)
class SplitIndex:
    train_ids: tuple[int, ...]
    calib_ids: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class CandidateGrid:
    t_min: float
    t_max: float
    n_points: int

    def __post_init__(self):
        if not (self.t_min >= 0 and self.t_max > self.t_min):
            raise ValueError(f"grid needs 0 <= t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.n_points < 2:
            raise ValueError("grid needs at least two points")

    @property
    def step(self) -> float:
        return (self.t_max - self.t_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_points)

    def point(self, j) -> np.ndarray:
        """Grid points at indices ``j``, bit-identical to ``points[j]``."""
        j = np.asarray(j)
        out = j * self.step + self.t_min
        return np.where(j == self.n_points - 1, self.t_max, out)

    def first_index(self, t, strict: bool = False) -> np.ndarray:
        """Smallest index whose point is ``>= t`` (``> t`` when ``strict``); ``n_points`` if none."""
        t = np.asarray(t, dtype=float)
        n = self.n_points
        j = np.clip(np.ceil((t - self.t_min) / self.step), 0, n).astype(np.int64)
        # the estimate is off by at most one; settle it against the exact points
        for _ in range(2):
            prev = np.maximum(j - 1, 0)
            v = self.point(prev)
            back = (j > 0) & ((v > t) if strict else (v >= t))
            j = np.where(back, j - 1, j)
            cur = self.point(np.minimum(j, n - 1))
            fwd = (j < n) & ((cur <= t) if strict else (cur < t))
            j = np.where(fwd, j + 1, j)
        return j


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by the pipeline, the simulation lab and the CLI.

    ``grid`` may be left as ``None``, in which case a default grid is derived
    from the training data with ``grid_points`` points, or more if needed to
    keep the step at or below ``grid_resolution``.
    """

    alpha: float = 0.1
    grid: CandidateGrid | None = None
    grid_points: int = 400
    grid_resolution: float | None = None
    split_fraction: float = 0.5
    censoring_cdf_cap: float = 0.99
    prob_clip: tuple[float, float] = (0.01, 0.99)
    bandwidth_override: float | None = None
    standardize_covariates: bool = True
    n_trees: int = 100
    max_depth: int = 6
    classifier: str = "forest"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if not 0 < self.censoring_cdf_cap < 1:
            raise ValueError("censoring_cdf_cap must lie in (0, 1)")
        lo, hi = self.prob_clip
        if not 0 < lo < hi < 1:
            raise ValueError("prob_clip must satisfy 0 < lo < hi < 1")
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")
        if self.grid_resolution is not None and self.grid_resolution <= 0:
            raise ValueError("grid_resolution must be positive")
        if self.bandwidth_override is not None and self.bandwidth_override <= 0:
            raise ValueError("bandwidth_override must be positive")
        if self.classifier not in ("forest", "logistic"):
            raise ValueError("classifier must be 'forest' or 'logistic'")
        object.__setattr__(self, "prob_clip", (float(lo), float(hi)))


def split(dataset: SurvivalDataset, fraction: float, seed: int) -> SplitIndex:
    """Random train/calibration partition with ``round(fraction * n)`` training rows.

    Reseeds up to 20 times if the calibration part has no observed event.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(dataset)
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train >= n:
        raise InvalidDataset(f"cannot split {n} subjects with fraction {fraction}")
    for attempt in range(SPLIT_RETRIES + 1):
        rng = np.random.default_rng([seed, attempt])
        perm = rng.permutation(n)
        train, calib = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        if dataset.event[calib].any():
            return SplitIndex(tuple(int(i) for i in train), tuple(int(i) for i in calib), seed)
    raise NoUncensoredCalibration(
        f"calibration set had no uncensored subject after {SPLIT_RETRIES} reseeded retries"
    )


MAX_GRID_POINTS = 100_000_000


def default_grid(
    dataset: SurvivalDataset, n_points: int = 400, resolution: float | None = None
) -> CandidateGrid:
    """``[0, 1.25 max Y]`` with ``n_points`` points, refined so the step is at most ``resolution``."""
    if dataset is None or len(dataset) == 0:
        raise InvalidDataset("dataset is empty")
    t_max = 1.25 * float(np.max(dataset.time))
    n = int(n_points)
    if resolution is not None:
        n = max(n, min(MAX_GRID_POINTS, int(np.ceil(t_max / resolution)) + 1))
    return CandidateGrid(0.0, t_max, n)


# --------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class CsvSchema:
    time_column: str = "time"
    event_column: str = "event"
    id_column: str | None = None
    features: tuple[str, ...] | None = None
    categorical: tuple[str, ...] = ()
    time_scale: float = 1.0
    category_levels: dict = field(default_factory=dict, compare=False)


def _parse_float(value: str, line: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise MalformedRow(line, f"column {column!r}: cannot parse {value!r} as a number") from None
    if not math.isfinite(out):
        raise MalformedRow(line, f"column {column!r}: non-finite value {value!r}")
    return out


def read_table(path: str | Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a headered CSV into (header, [(line_number, cells)])."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidDataset(f"{path}: missing header row") from None
        rows = []
        for cells in reader:
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise MalformedRow(
                    reader.line_num, f"expected {len(header)} fields, found {len(cells)}"
                )
            rows.append((reader.line_num, [c.strip() for c in cells]))
    return header, rows


def category_levels(rows: list[tuple[int, list[str]]], header: list[str], columns) -> dict:
    levels = {}
    for col in columns:
        j = header.index(col)
        levels[col] = sorted({cells[j] for _, cells in rows}, key=_level_key)
    return levels


def _level_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


# columns taken as subject ids when no id column is configured
ID_COLUMNS = ("id", "subject_id")


def resolve_id_column(schema: CsvSchema, header: Sequence[str]) -> CsvSchema:
    """Use an ``id`` or ``subject_id`` column as the id when the schema names none."""
    if schema.id_column is None:
        for col in ID_COLUMNS:
            if col in header:
                return replace(schema, id_column=col)
    return schema


def load_csv(
    path: str | Path,
    schema: CsvSchema = CsvSchema(),
    require_outcome: bool = True,
) -> SurvivalDataset | tuple[np.ndarray, tuple[str, ...], tuple[str, ...], np.ndarray, np.ndarray]:
    """Load a survival CSV.

    Categorical columns are one-hot encoded against ``schema.category_levels``
    (the first level is the reference); levels are taken from the file itself
    when not supplied. With ``require_outcome=False`` the time/event columns may
    be absent and a raw tuple ``(X, names, ids, time, event)`` is returned,
    with NaN marking unknown outcomes.
    """
    header, rows = read_table(path)
    schema = resolve_id_column(schema, header)
    for col in (schema.time_column, schema.event_column):
        if require_outcome and col not in header:
            raise InvalidDataset(f"{path}: column {col!r} not found in header {header}")
    if schema.id_column is not None and schema.id_column not in header:
        raise InvalidDataset(f"{path}: id column {schema.id_column!r} not found")
    reserved = {schema.time_column, schema.event_column, schema.id_column}
    features = (
        list(schema.features)
        if schema.features is not None
        else [h for h in header if h not in reserved]
    )
    missing = [f for f in features if f not in header]
    if missing:
        raise InvalidDataset(f"{path}: feature columns not found: {missing}")
    if not rows:
        raise InvalidDataset(f"{path}: no data rows")
    cats = [c for c in features if c in schema.categorical]
    levels = dict(schema.category_levels) or category_levels(rows, header, cats)

    names: list[str] = []
    for f in features:
        if f in cats:
            names.extend(f"{f}={lev}" for lev in levels[f][1:])
        else:
            names.append(f)

    X = np.empty((len(rows), len(names)))
    time = np.full(len(rows), np.nan)
    event = np.full(len(rows), np.nan)
    ids = []
    has_time = schema.time_column in header
    has_event = schema.event_column in header
    for i, (line, cells) in enumerate(rows):
        rec = dict(zip(header, cells))
        k = 0
        for f in features:
            if f in cats:
                lev = levels[f]
                for level in lev[1:]:
                    X[i, k] = 1.0 if rec[f] == level else 0.0
                    k += 1
            else:
                X[i, k] = _parse_float(rec[f], line, f)
                k += 1
        if has_time and rec[schema.time_column] != "":
            t = _parse_float(rec[schema.time_column], line, schema.time_column) * schema.time_scale
            if t <= 0:
                raise MalformedRow(line, f"observed time must be positive, got {t!r}")
            time[i] = t
        elif require_outcome:
            raise MalformedRow(line, "missing observed time")
        if has_event and rec[schema.event_column] != "":
            raw = rec[schema.event_column]
            if raw not in ("0", "1", "0.0", "1.0"):
                raise MalformedRow(line, f"event must be 0 or 1, got {raw!r}")
            event[i] = float(raw)
        elif require_outcome:
            raise MalformedRow(line, "missing event indicator")
        ids.append(rec[schema.id_column] if schema.id_column else str(i))

    if require_outcome:
        return SurvivalDataset(X, time, event.astype(bool), tuple(names), tuple(ids))
    return X, tuple(names), tuple(ids), time, event


def write_csv(dataset: SurvivalDataset, path: str | Path, id_column: str = "id") -> None:
    """Write a dataset so that :func:`load_csv` recovers identical records."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_column, *dataset.feature_names, "time", "event"])
        for sid, row, t, d in zip(dataset.subject_ids(), dataset.X, dataset.time, dataset.event):
            w.writerow([sid, *(repr(float(v)) for v in row), repr(float(t)), int(d)])
