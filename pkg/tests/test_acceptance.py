"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a ``CRITERION k: PASS|FAIL|SKIPPED`` line; the lines are
printed in the pytest terminal summary, or directly when this file is run as
a script. Criterion 8 needs the Rotterdam and GBSG exports of the R
``survival`` package, located through ``CENSET_ROTTERDAM_CSV`` and
``CENSET_GBSG_CSV`` or as ``data/rotterdam.csv`` and ``data/gbsg.csv``.
"""

from __future__ import annotations

import importlib.util
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import pytest

from censet.cli import main as cli_main
from censet.conformal import calibration_scores, pvalue_at, quantile_residual_score, super_level_runs
from censet.data import SurvivalDataset, write_csv
from censet.density_ratio import fit_ratio
from censet.kernels import KernelSpec, LocalKaplanMeier
from censet.quantile import QuantileModel, QuantilePair, fit
from censet.simulation import GAMMA, ScenarioSpec, generate_test, generate_training, run_scenario, tilted_covariates

sys.path.insert(0, str(Path(__file__).parent))
from conftest import brute_force_km  # noqa: E402
from exact_cases import ALPHAS, make_case, random_shift  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
SEED = 0
RESULTS: dict[int, str] = {}

pytestmark = pytest.mark.acceptance


def report(k: int, ok: bool | None, detail: str) -> None:
    status = "SKIPPED" if ok is None else ("PASS" if ok else "FAIL")
    line = f"CRITERION {k}: {status}  {detail}"
    RESULTS[k] = line
    print(line, flush=True)
    if ok is None:
        pytest.skip(detail)
    assert ok, line


def _pct(x):
    return 100.0 * x


# ---------------------------------------------------------------- 1 to 3


SHIFT_TARGETS_N300 = {"C20": 90.61, "C40": 90.19, "C60": 92.61, "C80": 94.39}
NO_SHIFT_TARGETS = {
    ("homoscedastic", "C20"): (89.23, 91.77),
    ("homoscedastic", "C40"): (89.75, 91.11),
    ("homoscedastic", "C60"): (91.84, 89.90),
    ("homoscedastic", "C80"): (93.50, 93.24),
    ("heteroscedastic", "C20"): (89.65, 91.81),
    ("heteroscedastic", "C40"): (89.97, 90.67),
    ("heteroscedastic", "C60"): (91.81, 89.26),
    ("heteroscedastic", "C80"): (95.39, 94.63),
}


def test_criterion_1_shift_coverage_n300():
    ok, parts = True, []
    for level, target in SHIFT_TARGETS_N300.items():
        w, s = run_scenario(ScenarioSpec(300, "homoscedastic", level, True, 100, 100, base_seed=SEED))
        aw, as_ = _pct(w.avg_coverage), _pct(s.avg_coverage)
        cell = abs(aw - target) <= 3.0
        if level in ("C60", "C80"):
            cell &= as_ < aw
        ok &= cell
        parts.append(f"{level} W={aw:.2f} (target {target}) SCP={as_:.2f}{'' if cell else ' x'}")
    report(1, ok, "; ".join(parts))


def test_criterion_2_undercoverage_n800():
    w, s = run_scenario(ScenarioSpec(800, "homoscedastic", "C80", True, 100, 50, base_seed=SEED))
    aw, as_ = _pct(w.avg_coverage), _pct(s.avg_coverage)
    ok = as_ < 80.0 and aw >= 88.0 and abs(aw - 93.56) <= 3.5
    report(2, ok, f"SCP={as_:.2f} (need < 80); W={aw:.2f} (need >= 88 and within 3.5 of 93.56)")


def test_criterion_3_no_shift_neutrality():
    ok, parts = True, []
    for (em, level), (tw, ts) in NO_SHIFT_TARGETS.items():
        w, s = run_scenario(ScenarioSpec(300, em, level, False, 100, 100, base_seed=SEED))
        aw, as_ = _pct(w.avg_coverage), _pct(s.avg_coverage)
        cell = abs(aw - as_) <= 4.0 and abs(aw - tw) <= 3.5 and abs(as_ - ts) <= 3.5
        ok &= cell
        parts.append(f"{em[:5]} {level} W={aw:.2f}/{tw} SCP={as_:.2f}/{ts}{'' if cell else ' x'}")
    report(3, ok, "; ".join(parts))


# ---------------------------------------------------------------- 4 and 5


def _contiguous(p, alpha):
    return len(super_level_runs(np.nan_to_num(p, nan=1.0), alpha)) <= 1


def test_criterion_4_exact_weight_contiguity():
    rng = np.random.default_rng(SEED)
    failed, per_alpha = 0, dict.fromkeys(ALPHAS, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(1000):
            p = make_case(rng).pvalues()
            bad = [a for a in ALPHAS if not _contiguous(p, a)]
            failed += bool(bad)
            for a in bad:
                per_alpha[a] += 1
    detail = ", ".join(f"alpha={a}: {k}" for a, k in per_alpha.items())
    report(4, failed == 0, f"{failed}/1000 cases with a split super-level set ({detail})")


def test_criterion_5_shift_invariance():
    rng = np.random.default_rng(SEED + 1)
    worst, changed = 0.0, 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(1000):
            case = make_case(rng)
            p_ = case.X.shape[1]
            om, other = random_shift(rng, p_), random_shift(rng, p_)
            p = case.pvalues(om)
            finite = np.isfinite(p)
            for c in (1e-3, 1e3):
                q = case.pvalues(om, c)
                worst = max(worst, float(np.max(np.abs(p[finite] - q[finite]))))
            q = case.pvalues(other)
            changed += any(_contiguous(p, a) != _contiguous(q, a) for a in ALPHAS)
    ok = worst <= 1e-10 and changed == 0
    report(5, ok, f"max |dp| under rescaling = {worst:.2e}; verdict changed in {changed}/1000 cases")


# ---------------------------------------------------------------- 6


class _NoCensoring:
    def cdf_at(self, X, t):
        return np.zeros(np.shape(t))

    def cdf_on(self, X, times):
        return np.zeros((np.atleast_2d(X).shape[0], len(times)))


def _lp_fit(D, y, tau):
    from scipy.optimize import linprog

    n, q = D.shape
    c = np.concatenate([np.zeros(2 * q), tau * np.ones(n), (1 - tau) * np.ones(n)])
    A = np.hstack([D, -D, np.eye(n), -np.eye(n)])
    res = linprog(c, A_eq=A, b_eq=y, bounds=[(0, None)] * (2 * q + 2 * n), method="highs")
    return res.x[:q] - res.x[q : 2 * q]


def test_criterion_6_oracles():
    rng = np.random.default_rng(SEED)
    wide = KernelSpec(1.0)
    km_err = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 26))
        time = rng.integers(1, 13, n).astype(float)
        event = rng.uniform(size=n) < 0.6
        est = LocalKaplanMeier(np.zeros((n, 1)), time, event, wide, 1 - 1e-12, "event")
        probes = np.concatenate([np.unique(time), np.unique(time) + 0.5, [0.0]])
        got = est.cdf_on(np.zeros((1, 1)), probes)[0]
        want = np.array([min(brute_force_km(time, event, t), 1 - 1e-12) for t in probes])
        km_err = max(km_err, float(np.max(np.abs(got - want))))

    qr_err = 0.0
    for _ in range(60):
        n = int(rng.integers(8, 31))
        X = rng.uniform(size=(n, 2))
        logy = 2 + X @ [3.0, -1.0] + rng.normal(0, 0.7, n)
        data = SurvivalDataset(X, np.exp(logy), np.ones(n, bool))
        D = np.column_stack([np.ones(n), X])
        for tau in (0.05, 0.5, 0.95):
            m = fit(data, tau)
            qr_err = max(qr_err, float(np.max(np.abs(m.linear_predictor(X) - D @ _lp_fit(D, logy, tau)))))

    cp_mismatch = 0
    pair = QuantilePair(QuantileModel(0.05, 0.5, np.array([1.0])), QuantileModel(0.95, 2.0, np.array([0.5])))
    for _ in range(500):
        n = int(rng.integers(1, 21))
        X = rng.uniform(size=(n, 1))
        Y = rng.uniform(0.1, 50, n)
        # ties with the test score exercise the >= convention
        Y[: n // 3] = np.maximum(np.round(Y[: n // 3]), 1.0)
        sc = calibration_scores(SurvivalDataset(X, Y, np.ones(n, bool)), pair, _NoCensoring())
        x_new, t = [float(rng.uniform())], float(rng.choice([rng.uniform(0, 60), Y[0]]))
        r_new = quantile_residual_score(pair, x_new, t)
        r_cal = [quantile_residual_score(pair, X[i], Y[i]) for i in range(n)]
        want = (1 + sum(r >= r_new for r in r_cal)) / (n + 1)
        cp_mismatch += pvalue_at(sc, pair, _NoCensoring(), None, x_new, t) != want

    ok = km_err <= 1e-12 and qr_err <= 1e-4 and cp_mismatch == 0
    report(
        6, ok,
        f"(a) KM max err {km_err:.1e}; (b) QR max fitted-value err {qr_err:.1e}; "
        f"(c) split-conformal mismatches {cp_mismatch}/500",
    )


# ---------------------------------------------------------------- 7


def test_criterion_7_ratio_correlation():
    rng = np.random.default_rng(SEED)
    train = rng.uniform(size=(2000, 2))
    test = tilted_covariates(2000, rng, GAMMA)
    model = fit_ratio(train, test, seed=SEED)
    evaluation = rng.uniform(size=(2000, 2))
    r = float(np.corrcoef(np.log(model(evaluation)), evaluation @ GAMMA)[0, 1])
    report(7, r > 0.5, f"Pearson r = {r:.3f} (need > 0.5)")


# ---------------------------------------------------------------- 8


def _cohort_files():
    pairs = [
        (os.environ.get("CENSET_ROTTERDAM_CSV"), os.environ.get("CENSET_GBSG_CSV")),
        (ROOT / "data" / "rotterdam.csv", ROOT / "data" / "gbsg.csv"),
    ]
    for a, b in pairs:
        if a and b and Path(a).is_file() and Path(b).is_file():
            return Path(a), Path(b)
    return None


def _summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.startswith("#") and ": " in line:
            k, v = line.split(": ", 1)
            out[k] = v
    return out


def test_criterion_8_real_data():
    files = _cohort_files()
    if files is None:
        report(8, None, "Rotterdam/GBSG files not found")
    spec = importlib.util.spec_from_file_location("prep", ROOT / "scripts" / "prepare_breast_cancer.py")
    prep = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(prep)
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        prep.main([str(files[0]), str(files[1]), "--out-dir", str(d)])
        ac = {}
        for name, extra in (("W", []), ("SCP", ["--no-shift-weights"])):
            code = cli_main([
                "predict", "--train", str(d / "rotterdam_prepared.csv"),
                "--test", str(d / "gbsg_prepared.csv"), "--out", str(d / f"{name}.csv"),
                "--summary", str(d / f"{name}.txt"), "--seed", str(SEED), *extra,
            ])
            assert code == 0
            ac[name] = float(_summary(d / f"{name}.txt")["ac"])
    ok = abs(ac["W"] - 93.31) <= 3.0 and ac["W"] - ac["SCP"] >= 5.0
    report(8, ok, f"W={ac['W']:.2f} (target 93.31) SCP={ac['SCP']:.2f} (gap need >= 5)")


# ---------------------------------------------------------------- 9


def _run_twice(args_for):
    outputs = []
    with tempfile.TemporaryDirectory() as d:
        for k in range(2):
            out = Path(d) / str(k)
            out.mkdir()
            assert cli_main(args_for(out)) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    return outputs[0] == outputs[1] and bool(outputs[0])


def test_criterion_9_determinism():
    spec = ScenarioSpec(200, "heteroscedastic", "C60", True, 40)
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        write_csv(generate_training(spec, 1), d / "train.csv")
        test = generate_test(spec, 2)
        write_csv(SurvivalDataset(test.X, test.T, np.ones(len(test.T), bool), ("x1", "x2")), d / "test.csv")
        train, tst = str(d / "train.csv"), str(d / "test.csv")
        checks = {
            "predict": _run_twice(lambda o: ["predict", "--train", train, "--test", tst, "--seed", "5",
                                             "--out", str(o / "p.csv"), "--summary", str(o / "s.txt")]),
            "simulate": _run_twice(lambda o: ["simulate", "--table", "2", "--reps", "2", "--n-test", "10",
                                              "--seed", "5", "--out", str(o / "m.csv"),
                                              "--markdown", str(o / "m.md")]),
            "diagnose": _run_twice(lambda o: ["diagnose", "--train", train, "--test", tst, "--seed", "5",
                                              "--subject", "1", "--subject", "7", "--out-dir", str(o)]),
        }
    report(9, all(checks.values()), ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in checks.items()))


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except (AssertionError, pytest.skip.Exception):
                pass
