"""Acceptance criteria, one printed PASS/FAIL line each.

Tolerances and sizes are pinned; nothing here is tuned to make a result pass.
"""

import json
import time

import numpy as np
import pytest

from conftest import random_path
from oracles import random_time_change
from trimlevy.cli import run
from trimlevy.harness import (
    ExperimentConfig,
    continuity_probe,
    convergence_cells,
    marginal_convergence,
    ruin_experiment,
    tie_scan,
)
from trimlevy.j1 import j1_brute_force, j1_distance, witness_cost
from trimlevy.levy import CompoundPoissonDrift, Pareto, RngSeed, StableSeries, sample_jumps
from trimlevy.paths import (
    CadlagPath,
    TimeChange,
    add,
    compose,
    running_jump_sup,
    running_sup,
    running_sup_abs,
    same_path,
    sup_norm_diff,
)
from trimlevy.trim import Mode, TrimSpec, apply_trim, first_record_time, jump_order_stat, trim_global

SEED = 20240601
I = CadlagPath.indicator


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed=None):
        took = f" [{elapsed:.1f}s]" if elapsed is not None else ""
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}{took}")
        assert ok, detail
    return emit


# 1 -----------------------------------------------------------------------------------------


def test_1_golden_examples(report):
    t0 = time.perf_counter()
    x = I(1 / 3) + I(2 / 3)
    flip = I(1 / 3, 2 / 3)
    lb = TrimSpec.parse("lb-pos:1")
    sm = TrimSpec.parse("smod:1")
    checks = {}
    for n in (1, 2, 3, 10, 64, 1000):
        xn = x + (1 / n) * I(2 / 3)
        fn = flip + (1 / n) * I(1 / 3)
        checks[n] = [
            first_record_time(x, 1.0) == 1 / 3,
            first_record_time(xn, 1.0) == 2 / 3,
            same_path(apply_trim(x, lb), I(2 / 3)),
            same_path(apply_trim(xn, lb), I(1 / 3)),
            sup_norm_diff(apply_trim(xn, lb), apply_trim(x, lb)) == 1.0,
            same_path(apply_trim(flip, sm), I(2 / 3)),
            n == 1 or same_path(apply_trim(fn, sm), -1.0 * I(2 / 3)),
        ]
    elapsed = time.perf_counter() - t0
    ok = all(all(c) for c in checks.values()) and elapsed < 1.0
    bad = {n: [i for i, c in enumerate(cs) if not c] for n, cs in checks.items() if not all(cs)}
    report(1, ok, f"record times, lookback and signed-modulus images exact for n in {sorted(checks)}"
           + (f"; failing {bad}" if bad else ""), elapsed)


# 2 -----------------------------------------------------------------------------------------


OPERATORS = {
    "S": running_sup,
    "S_abs": running_sup_abs,
    "S_+D": lambda x: running_jump_sup(x, "+"),
    "S_-D": lambda x: running_jump_sup(x, "-"),
    "S~_D": lambda x: running_jump_sup(x, "abs"),
    "T(1,+)": lambda x: trim_global(x, TrimSpec(Mode.POS, 1)),
    "T(1,-)": lambda x: trim_global(x, TrimSpec(Mode.NEG, 1)),
    "S(2,+)": lambda x: jump_order_stat(x, 2, "positive"),
    "S(2,-)": lambda x: jump_order_stat(x, 2, "negative"),
    "T(2,3)": lambda x: trim_global(x, TrimSpec(Mode.BOTH, 2, 3)),
    "T~(2)": lambda x: trim_global(x, TrimSpec(Mode.MOD, 2)),
    "S~(2)": lambda x: jump_order_stat(x, 2, "modulus"),
    "smod:2": lambda x: apply_trim(x, TrimSpec(Mode.SMOD, 2)),
    "lb-pos:2": lambda x: apply_trim(x, TrimSpec(Mode.LB_POS, 2)),
    "lb-mod:2": lambda x: apply_trim(x, TrimSpec(Mode.LB_MOD, 2)),
}


def _random_lambda(rng):
    while True:
        uv = random_time_change(rng, spread=float(rng.choice([0.05, 0.3, 1.0])))
        if uv is not None:
            return TimeChange(*uv)


def test_2_operator_laws(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    grid = np.linspace(0.0, 1.0, 1024)
    worst_lam = {k: 0.0 for k in OPERATORS}
    worst_lip = -np.inf
    commute_fail = 0
    worst_tl = 0.0
    n = 1000
    for _ in range(n):
        x = random_path(rng, max_jumps=20)
        lam = _random_lambda(rng)
        xl = compose(x, lam)
        for name, op in OPERATORS.items():
            d = np.max(np.abs(op(xl)(grid) - compose(op(x), lam)(grid)))
            worst_lam[name] = max(worst_lam[name], float(d))
        y = random_path(rng, max_jumps=20) if rng.random() < 0.5 else x + 0.1 * random_path(rng, max_jumps=20)
        lhs = sup_norm_diff(running_jump_sup(x, "+"), running_jump_sup(y, "+"))
        worst_lip = max(worst_lip, lhs - 2 * sup_norm_diff(x, y))
        r, s = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        a = trim_global(trim_global(x, TrimSpec(Mode.NEG, s)), TrimSpec(Mode.POS, r))
        b = trim_global(trim_global(x, TrimSpec(Mode.POS, r)), TrimSpec(Mode.NEG, s))
        commute_fail += not same_path(a, b)
        rr = max(r, 1)
        removed = add(x, -trim_global(x, TrimSpec(Mode.POS, rr)))
        total = CadlagPath.constant(0.0)
        for i in range(1, rr + 1):
            total = total + jump_order_stat(x, i, "positive")
        worst_tl = max(worst_tl, sup_norm_diff(removed, total))
    elapsed = time.perf_counter() - t0
    lam_max = max(worst_lam.values())
    ok = lam_max <= 1e-9 and worst_lip <= 1e-12 and commute_fail == 0 and worst_tl <= 1e-12 and elapsed < 10
    report(2, ok, f"{n} paths: max Lambda-compat error {lam_max:.2e} (<=1e-9), Lipschitz excess {worst_lip:.2e} "
           f"(<=1e-12), commutation failures {commute_fail}, TL identity error {worst_tl:.2e} (<=1e-12)", elapsed)


# 3 -----------------------------------------------------------------------------------------


def test_3_j1_engine_vs_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 3)
    n = 1000
    worst_bf = worst_witness = worst_beat = 0.0
    for _ in range(n):
        x = random_path(rng, max_jumps=5, step=True)
        y = random_path(rng, max_jumps=5, step=True)
        res = j1_distance(x, y)
        worst_bf = max(worst_bf, abs(res.distance - j1_brute_force(x, y, 5)))
        worst_witness = max(worst_witness, abs(max(witness_cost(x, y, res.witness)) - res.distance))
        for _ in range(5):
            cost = max(witness_cost(x, y, _random_lambda(rng)))
            worst_beat = max(worst_beat, res.distance - cost)
    elapsed = time.perf_counter() - t0
    ok = worst_bf <= 1e-10 and worst_witness <= 1e-12 and worst_beat <= 1e-10 and elapsed < 60
    report(3, ok, f"{n} step pairs: |DP - brute force| <= {worst_bf:.2e} (1e-10), witness re-evaluation "
           f"{worst_witness:.2e} (1e-12), random lambda beats DP by {worst_beat:.2e} (1e-10)", elapsed)


# 4 -----------------------------------------------------------------------------------------


def test_4_continuity_probes(report):
    t0 = time.perf_counter()
    lb = TrimSpec.parse("lb-pos:1")
    x = I(1 / 3) + 0.5 * I(2 / 3)
    good = continuity_probe(x, lb, "fast", n_steps=64)
    d = good.distances
    mono = all(b <= a for a, b in zip(d, d[1:]))
    bad = continuity_probe(I(1 / 3) + I(2 / 3), lb, "egrtrim", n_steps=64)
    ns = bad.report.column("n")
    joint_min = min(j for n, j in zip(ns, bad.joint) if n >= 10)
    elapsed = time.perf_counter() - t0
    ok = good.certificate.guaranteed and mono and d[-1] < 1e-3 and joint_min >= 0.9 \
        and bad.certificate.discontinuity_proven and elapsed < 30
    report(4, ok, f"tie-free x: distances nonincreasing={mono}, d(64)={d[-1]:.2e} (<1e-3); egrtrim family: "
           f"min joint distance over n>=10 = {joint_min:.3f} (>=0.9), plain J1 {min(bad.distances[9:]):.3f}",
           elapsed)


# 5 -----------------------------------------------------------------------------------------


def test_5_no_ties(report):
    t0 = time.perf_counter()
    out = []
    for alpha in (0.8, 1.5):
        model = StableSeries(alpha, 0.5, 0.5, 500)
        js = (sample_jumps(model, 1.0, RngSeed(SEED + 5, p)) for p in range(10_000))
        res = tie_scan(js, r=3, tol=0.0)
        out.append((alpha, res.events, float(np.min(res.min_gaps))))
    elapsed = time.perf_counter() - t0
    ok = all(e == 0 for _, e, _ in out) and elapsed < 60
    report(5, ok, "10^4 paths each, r=3, tol=0: " + ", ".join(
        f"alpha={a}: {e} tie events (smallest gap {g:.2e})" for a, e, g in out), elapsed)


# 6 -----------------------------------------------------------------------------------------


def test_6_marginal_convergence(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        model=CompoundPoissonDrift(100.0, Pareto(1.0, 0.8), 0.0),
        horizons=(10.0, 100.0, 1000.0),
        specs=("both:0,0", "pos:1", "both:1,1", "smod:1", "lb-pos:1"),
        n_paths=10_000, tau_grid=(0.25, 0.5, 1.0), base_seed=SEED)
    rep = marginal_convergence(cfg)
    cells = convergence_cells(rep, 0.05)
    mono = sum(c.nonincreasing for c in cells)
    below = sum(c.final_below for c in cells)
    worst = max(cells, key=lambda c: c.ks[-1])
    elapsed = time.perf_counter() - t0
    ok = mono >= 13 and below == len(cells) and elapsed <= 600
    report(6, ok, f"KS nonincreasing in {mono}/15 cells (>=13); KS<0.05 at t=1e3 in {below}/15 (15); "
           f"worst {worst.spec} tau={worst.tau}: {worst.ks[-1]:.4f}; seeds {rep.metadata['seeds']}", elapsed)


# 7 -----------------------------------------------------------------------------------------


def test_7_ruin_limit(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        model=CompoundPoissonDrift(100.0, Pareto(1.0, 0.8), 0.0),
        horizons=(1000.0,), specs=("both:0,0", "pos:1"), n_paths=10_000,
        u_grid=(0.5, 1.0, 2.0), base_seed=SEED)
    rep = ruin_experiment(cfg)
    recs = rep.records()
    fails = [r for r in recs if not r["z"] <= 3.0]
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed <= 300
    detail = "; ".join(f"r={r['r']} u={r['u']}: {r['p_model']:.4f} vs {r['p_stable']:.4f} (z={r['z']:.2f})"
                       for r in recs)
    report(7, ok, f"|p_model - p_stable| <= 3 se in {len(recs) - len(fails)}/{len(recs)} cells: {detail}", elapsed)


# 8 -----------------------------------------------------------------------------------------


def test_8_figure1(report, tmp_path):
    t0 = time.perf_counter()
    assert run(["figure1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "figure1.csv").read_text().splitlines()
    meta = json.loads(lines[1][len("# metadata: "):])
    data = np.array([row.split(",") for row in lines[3:]], dtype=float)
    tau, orig, tay, lb, sup = data.T
    rec = meta["record_time"]
    before = tau < rec
    exact = np.array_equal(lb[before], orig[before]) and np.array_equal(lb[~before], tay[~before])
    err = float(np.max(np.abs(tay - (orig - sup))))
    elapsed = time.perf_counter() - t0
    ok = exact and err <= 1e-12 and elapsed < 5
    report(8, ok, f"{len(tau)} grid points, record time {rec:.6f}: caption identity exact={exact}, "
           f"|trim-as-you-go - (original - jump sup)| = {err:.1e} (<=1e-12)", elapsed)
