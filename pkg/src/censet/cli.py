"""Command-line front end.

    censet predict  --train A.csv --test B.csv --out predictions.csv
    censet simulate --table 1 --reps 100 --seed 1 --out metrics.csv
    censet diagnose --train A.csv --subject 17 --out-dir curves/

A YAML config file (``--config``) may hold three sections: ``run`` (fields of
:class:`RunConfig`, with ``grid`` as ``{t_min, t_max, n_points}``), ``data``
(fields of :class:`CsvSchema`) and ``simulation`` (``normal_variance``,
``gamma_second_arg``). Flags override file values. Every output file starts
with ``#`` comment lines echoing the effective configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .conformal import PredictionSet
from .data import (
    CandidateGrid,
    CsvSchema,
    RunConfig,
    category_levels,
    load_csv,
    read_table,
    resolve_id_column,
)
from .errors import CensetError, InvalidDataset
from .pipeline import fit_shared
from .simulation import (
    SIM_GRID_RESOLUTION,
    markdown_table,
    metrics_csv,
    run_scenario,
    table_scenarios,
)

log = logging.getLogger("censet")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2

_SCHEMA_KEYS = {f.name for f in fields(CsvSchema)} - {"category_levels"}
_RUN_KEYS = {f.name for f in fields(RunConfig)}
_SIM_KEYS = {"normal_variance", "gamma_second_arg"}


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: not valid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    unknown = set(raw) - {"run", "data", "simulation", "seed"}
    if unknown:
        raise UsageError(f"{path}: unknown sections {sorted(unknown)}")
    for section, allowed in (("run", _RUN_KEYS), ("data", _SCHEMA_KEYS), ("simulation", _SIM_KEYS)):
        extra = set(raw.get(section) or {}) - allowed
        if extra:
            raise UsageError(f"{path}: unknown keys in {section!r}: {sorted(extra)}")
    return raw


def run_config(raw: dict, args, base: RunConfig | None = None) -> RunConfig:
    values = dict(raw.get("run") or {})
    if "grid" in values and values["grid"] is not None:
        g = values["grid"]
        values["grid"] = CandidateGrid(float(g["t_min"]), float(g["t_max"]), int(g["n_points"]))
    if "prob_clip" in values:
        values["prob_clip"] = tuple(float(v) for v in values["prob_clip"])
    for key in ("alpha", "grid_points", "grid_resolution"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return replace(base or RunConfig(), **values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid run config: {exc}") from None


def csv_schema(raw: dict, args) -> CsvSchema:
    values = dict(raw.get("data") or {})
    for key in ("features", "categorical"):
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    for key in ("time_column", "event_column", "id_column"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return CsvSchema(**values)


def resolve_seed(raw: dict, args) -> int:
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {seed!r}") from None
    if seed < 0:
        raise UsageError("seed must be non-negative")
    return seed


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def header_lines(command: str, seed: int, sections: dict[str, dict]) -> list[str]:
    lines = [f"# censet {__version__} {command}", f"# seed = {seed}"]
    for name, values in sections.items():
        for key in sorted(values):
            lines.append(f"# {name}.{key} = {_fmt(values[key])}")
    return lines


def _config_record(config: RunConfig) -> dict:
    d = asdict(config)
    if config.grid is None:
        d["grid"] = None
    return d


# ------------------------------------------------------------------ output


@contextmanager
def staged_outputs():
    """Collect files in temporary siblings; publish them only if the block succeeds."""
    staged: list[tuple[Path, Path]] = []

    def stage(path: str | Path, text: str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        staged.append((Path(tmp), path))

    published: list[Path] = []
    try:
        yield stage
        for _, final in staged:
            if final.is_dir():
                raise IsADirectoryError(f"output path is a directory: {final}")
        for tmp, final in staged:
            os.replace(tmp, final)
            published.append(final)
    except BaseException:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        for final in published:
            final.unlink(missing_ok=True)
        raise


def _num(v: float | None) -> str:
    return "" if v is None else repr(float(v))


# ------------------------------------------------------------------ data


def _load_pair(train_path, test_path, schema: CsvSchema):
    """Training dataset plus test covariates (and outcomes, when present) on a shared encoding."""
    header, rows = read_table(train_path)
    cats = [c for c in schema.categorical if c in header]
    levels = category_levels(rows, header, cats)
    schema = resolve_id_column(schema, header)
    if schema.features is None:
        reserved = {schema.time_column, schema.event_column, schema.id_column}
        schema = replace(schema, features=tuple(h for h in header if h not in reserved))
    schema = replace(schema, category_levels=levels)
    train = load_csv(train_path, schema)
    if test_path is None:
        return train, None, schema
    test_header, test_rows = read_table(test_path)
    features = list(schema.features)
    missing = [f for f in features if f not in test_header]
    if missing:
        raise InvalidDataset(f"{test_path}: feature columns missing from test file: {missing}")
    for col in cats:
        j = test_header.index(col)
        unseen = sorted({cells[j] for _, cells in test_rows} - set(levels[col]))
        if unseen:
            raise InvalidDataset(
                f"{test_path}: column {col!r} has levels {unseen} not present in training data"
            )
    X, names, ids, time, event = load_csv(test_path, schema, require_outcome=False)
    if names != train.feature_names:
        raise InvalidDataset(f"{test_path}: encoded features {names} differ from training {train.feature_names}")
    return train, (X, ids, time, event), schema


def _seeds(seed: int) -> tuple[int, int]:
    split_ss, ratio_ss = np.random.SeedSequence(seed).spawn(2)
    return int(split_ss.generate_state(1)[0]), int(ratio_ss.generate_state(1)[0])


# ------------------------------------------------------------------ commands


def cmd_predict(args) -> int:
    raw = load_config(args.config)
    config = run_config(raw, args)
    schema = csv_schema(raw, args)
    seed = resolve_seed(raw, args)
    train, test, schema = _load_pair(args.train, args.test, schema)
    X_test, ids, time, event = test
    split_seed, ratio_seed = _seeds(seed)

    shared = fit_shared(train, config, split_seed)
    ratio = None if args.no_shift_weights else shared.fit_ratio(X_test, ratio_seed)
    curves = shared.predictor(ratio).sets(X_test)

    buf = io.StringIO()
    method = "SCP" if args.no_shift_weights else "WeightedSCP"
    sections = {
        "run": _config_record(config),
        "data": {k: v for k, v in asdict(schema).items() if k != "category_levels"},
        "predict": {"method": method, "train": str(args.train), "test": str(args.test)},
    }
    for line in header_lines("predict", seed, sections):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "lower", "upper", "verdict", "covered"])
    lengths, hits = [], []
    for sid, c, t, d in zip(ids, curves, time, event):
        covered = ""
        if d == 1 and not math.isnan(t):
            hit = bool(c.covers(float(t)))
            hits.append(hit)
            covered = str(int(hit))
        lengths.append(c.length())
        w.writerow([sid, _num(c.lower), _num(_reported_upper(c)), str(c.verdict), covered])

    summary = {
        "method": method,
        "n_test": len(curves),
        "n_uncensored": len(hits),
        "ac": (100.0 * sum(hits) / len(hits)) if hits else float("nan"),
        "al": math.fsum(lengths) / len(lengths),
        "violated": int(sum(c.fallback_lower is not None for c in curves)),
        "empty": int(sum(c.empty for c in curves)),
        "identifiability_warning": bool(shared.pair.identifiability_warning),
        "crossing_fraction": float(shared.pair.crossing_fraction),
    }
    summary_text = "".join(f"{k}: {_fmt(v)}\n" for k, v in summary.items())
    with staged_outputs() as stage:
        stage(args.out, buf.getvalue())
        if args.summary:
            stage(args.summary, "\n".join(header_lines("predict", seed, sections)) + "\n" + summary_text)
    sys.stdout.write(summary_text)
    return EXIT_OK


def _reported_upper(curve: PredictionSet) -> float | None:
    # Contiguous sets always carry an upper end; a set that runs off the grid
    # reports the grid edge and is scored as one-sided.
    return curve.reported_upper if curve.interval is not None else None


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be a positive integer")
    raw = load_config(args.config)
    seed = resolve_seed(raw, args)
    config = run_config(raw, args, RunConfig(grid_resolution=SIM_GRID_RESOLUTION))
    sim = dict(raw.get("simulation") or {})
    specs = table_scenarios(args.table, args.reps, seed, n_test=args.n_test, config=config, **sim)
    rows = []
    for spec in specs:
        weighted, plain = run_scenario(spec, workers=args.workers)
        rows += [weighted, plain]
        log.info("%s done", spec.label())
    sections = {
        "run": _config_record(config),
        "simulate": {"table": args.table, "reps": args.reps, "n_test": args.n_test, **sim},
    }
    head = "\n".join(header_lines("simulate", seed, sections)) + "\n"
    table = markdown_table(rows)
    with staged_outputs() as stage:
        stage(args.out, head + metrics_csv(rows))
        if args.markdown:
            stage(args.markdown, "<!--\n" + head + "-->\n" + table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    raw = load_config(args.config)
    config = run_config(raw, args)
    schema = csv_schema(raw, args)
    seed = resolve_seed(raw, args)
    train, test, schema = _load_pair(args.train, args.test, schema)
    if test is None:
        X_pool, pool_ids = train.X, train.subject_ids()
    else:
        X_pool, pool_ids = test[0], test[1]
    index = {}
    for i, sid in enumerate(pool_ids):
        index.setdefault(sid, i)
    if not args.subject:
        raise UsageError("select at least one subject with --subject")
    unknown = [s for s in args.subject if s not in index]
    if unknown:
        raise InvalidDataset(f"unknown subject id(s): {unknown}")

    split_seed, ratio_seed = _seeds(seed)
    shared = fit_shared(train, config, split_seed)
    weighted = test is not None and not args.no_shift_weights
    ratio = shared.fit_ratio(X_pool, ratio_seed) if weighted else None
    rows = [index[s] for s in args.subject]
    curves = shared.predictor(ratio).curves(X_pool[rows])

    sections = {
        "run": _config_record(config),
        "data": {k: v for k, v in asdict(schema).items() if k != "category_levels"},
        "diagnose": {"method": "WeightedSCP" if weighted else "SCP"},
    }
    with staged_outputs() as stage:
        for sid, c in zip(args.subject, curves):
            buf = io.StringIO()
            for line in header_lines("diagnose", seed, sections):
                buf.write(line + "\n")
            buf.write(f"# subject_id = {sid}\n")
            buf.write(f"# verdict = {c.verdict}\n")
            buf.write(f"# shape_warning = {c.shape_warning}\n")
            if c.interval is not None:
                buf.write(f"# lower = {_num(c.lower)}\n# upper = {_num(c.reported_upper)}\n")
            if c.fallback_lower is not None:
                buf.write(f"# fallback_lower = {_num(c.fallback_lower)}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["t", "p"])
            for t, p in zip(c.grid.points, c.values):
                w.writerow([repr(float(t)), repr(float(p))])
            stage(Path(args.out_dir) / f"pcurve_{_safe(sid)}.csv", buf.getvalue())
            sys.stdout.write(f"{sid}\t{c.verdict}\n")
    return EXIT_OK


def _safe(sid: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in sid)


# ------------------------------------------------------------------ parser


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="censet", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"censet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="master seed for every random choice")
        p.add_argument("--alpha", type=float, help="target miscoverage level")
        p.add_argument("--grid-points", dest="grid_points", type=int)
        p.add_argument("--grid-resolution", dest="grid_resolution", type=_positive_float)
        if data:
            p.add_argument("--time-column", dest="time_column")
            p.add_argument("--event-column", dest="event_column")
            p.add_argument("--id-column", dest="id_column")

    p = sub.add_parser("predict", help="prediction sets for an external test cohort")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="predictions CSV")
    p.add_argument("--summary", help="optional summary file")
    p.add_argument("--no-shift-weights", action="store_true", help="unweighted SCP")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="coverage tables on the synthetic design")
    p.add_argument("--table", type=int, choices=(1, 2), required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--n-test", dest="n_test", type=int, default=100)
    p.add_argument("--workers", type=int, help="worker processes (default CENSET_THREADS or all cores)")
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--markdown", help="optional markdown table")
    common(p, data=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="p-value curves for selected subjects")
    p.add_argument("--train", required=True)
    p.add_argument("--test", help="take subjects (and shift weights) from this file")
    p.add_argument("--subject", action="append", default=[], help="subject id; repeatable")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--no-shift-weights", action="store_true")
    common(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"censet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CensetError, ValueError, OSError) as exc:
        print(f"censet: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
