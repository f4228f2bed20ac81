"""Build analysis files for the Rotterdam (training) and GBSG (test) cohorts.

Inputs are CSV exports of the ``rotterdam`` and ``gbsg`` tables shipped with
the R ``survival`` package, e.g. ``write.csv(survival::rotterdam, "rotterdam.csv")``.

    python scripts/prepare_breast_cancer.py rotterdam.csv gbsg.csv --out-dir data/

Both outputs hold node-positive subjects only, recurrence-free survival in
months, and the seven shared covariates. Grade is kept as a numeric column
because GBSG has grade-1 tumours that never occur in Rotterdam.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

DAYS_PER_MONTH = 365.25 / 12
COVARIATES = ("age", "grade", "nodes", "pgr", "er", "hormon", "meno")
COLUMNS = ("id",) + COVARIATES + ("time", "event")


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _row(sid, rec, days, event):
    out = {"id": sid, **{c: rec[c] for c in COVARIATES}}
    out["time"] = repr(float(days) / DAYS_PER_MONTH)
    out["event"] = str(int(event))
    return out


def rotterdam_rows(path) -> list[dict]:
    """Recurrence or death, whichever comes first.

    Deaths without recurrence that occur after the recurrence follow-up ended
    are treated as censored at that follow-up time.
    """
    rows = []
    for rec in _read(path):
        if int(float(rec["nodes"])) < 1:
            continue
        recur, death = int(float(rec["recur"])), int(float(rec["death"]))
        rtime, dtime = float(rec["rtime"]), float(rec["dtime"])
        if recur:
            days, event = rtime, 1
        elif death and dtime <= rtime:
            days, event = dtime, 1
        else:
            days, event = rtime, 0
        rows.append(_row(f"R{rec['pid']}", rec, days, event))
    return rows


def gbsg_rows(path) -> list[dict]:
    rows = []
    for rec in _read(path):
        if int(float(rec["nodes"])) < 1:
            continue
        rows.append(_row(f"G{rec['pid']}", rec, rec["rfstime"], int(float(rec["status"]))))
    return rows


def write_rows(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("rotterdam")
    ap.add_argument("gbsg")
    ap.add_argument("--out-dir", default="data")
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    train, test = rotterdam_rows(args.rotterdam), gbsg_rows(args.gbsg)
    write_rows(train, out / "rotterdam_prepared.csv")
    write_rows(test, out / "gbsg_prepared.csv")
    for name, rows in (("rotterdam", train), ("gbsg", test)):
        cens = 1 - sum(int(r["event"]) for r in rows) / len(rows)
        print(f"{name}: {len(rows)} subjects, {100 * cens:.1f}% censored")


if __name__ == "__main__":
    main()
