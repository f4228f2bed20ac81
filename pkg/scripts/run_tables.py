"""Run the coverage tables and write CSV plus markdown next to each other.

    python scripts/run_tables.py --reps 100 --seed 0 --out-dir results/
    python scripts/run_tables.py --table 2 --reps 500

Set CENSET_THREADS to control the number of worker processes.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from censet.cli import main as censet


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--table", type=int, choices=(1, 2), action="append")
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", help="YAML config passed through to every run")
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    for table in args.table or (1, 2):
        start = time.perf_counter()
        stem = out / f"table{table}_reps{args.reps}_seed{args.seed}"
        cmd = [
            "simulate", "--table", str(table), "--reps", str(args.reps), "--seed", str(args.seed),
            "--out", f"{stem}.csv", "--markdown", f"{stem}.md",
        ]
        if args.config:
            cmd += ["--config", args.config]
        code = censet(cmd)
        if code:
            return code
        print(f"table {table}: {time.perf_counter() - start:.0f}s -> {stem}.csv", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
