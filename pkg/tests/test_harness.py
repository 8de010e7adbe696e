import io
import json

import numpy as np
import pytest

from trimlevy.harness import (
    FAMILIES,
    ConfigurationError,
    ExperimentConfig,
    ExperimentReport,
    Perturbation,
    continuity_probe,
    convergence_cells,
    derive_seed,
    marginal_convergence,
    model_marginals,
    ruin_experiment,
    ruin_time,
    tie_scan,
    trimmed_marginals,
    trimmed_sup,
)
from trimlevy.levy import (
    CompoundPoissonDrift,
    JumpSample,
    Pareto,
    RngSeed,
    SignedPareto,
    StableSeries,
    sample_jumps,
)
from trimlevy.paths import CadlagPath, DomainError, running_sup, scalar_affine
from trimlevy.trim import TrimSpec, apply_trim

CPP08 = CompoundPoissonDrift(100.0, Pareto(1.0, 0.8), 0.0)
SIGNED = CompoundPoissonDrift(40.0, SignedPareto(1.0, 1.3, 0.55), -2.0)
SPECS = [TrimSpec.parse(s) for s in
         ("both:0,0", "pos:1", "pos:3", "neg:2", "both:1,1", "smod:1", "smod:3", "lb-pos:1", "lb-pos:2",
          "lb-mod:2", "mod:2")]
TAUS = [0.1, 0.25, 0.5, 0.77, 1.0]


def I(a, h=1.0):
    return h * CadlagPath.indicator(a)


# -- marginal engine -----------------------------------------------------------------


@pytest.mark.parametrize("model", [CPP08, SIGNED, StableSeries(1.5, 0.4, 0.6, 300)], ids=["cpp", "signed", "stable"])
def test_marginals_match_path_engine(model):
    for k in range(40):
        js = sample_jumps(model, 3.0 if isinstance(model, CompoundPoissonDrift) else 1.0, RngSeed(31, k))
        fast = trimmed_marginals(js, SPECS, TAUS)
        x = js.to_path()
        for i, s in enumerate(SPECS):
            slow = apply_trim(x, s)(np.asarray(TAUS))
            scale = 1 + np.abs(js.sizes).sum()
            np.testing.assert_allclose(fast[i], slow, atol=1e-11 * scale, err_msg=str(s))


def test_marginals_large_pool_fallback():
    # the largest jumps all sit late, so early prefixes need the fallback path
    t = np.concatenate([np.linspace(0.01, 0.2, 300), np.linspace(0.8, 0.99, 200)])
    s = np.concatenate([np.linspace(1, 2, 300), np.linspace(10, 20, 200)])
    js = JumpSample(t, s, 0.0)
    specs = [TrimSpec.parse("pos:3")]
    out = trimmed_marginals(js, specs, [0.1, 0.5])
    x = js.to_path()
    np.testing.assert_allclose(out[0], apply_trim(x, specs[0])(np.array([0.1, 0.5])), rtol=1e-12)


def test_marginals_no_jumps():
    js = JumpSample(np.empty(0), np.empty(0), 1.5)
    out = trimmed_marginals(js, SPECS, TAUS)
    np.testing.assert_allclose(out, np.tile(1.5 * np.asarray(TAUS), (len(SPECS), 1)))


def test_worker_count_does_not_change_results():
    a = model_marginals(CPP08, 10.0, SPECS[:3], TAUS, 40, 5, workers=1)
    b = model_marginals(CPP08, 10.0, SPECS[:3], TAUS, 40, 5, workers=2)
    assert np.array_equal(a, b)


def test_derive_seed_distinct():
    seeds = {derive_seed(0, *k) for k in [(0,), (1,), (1, 0), (1, 1), (2,), (3, 0)]}
    assert len(seeds) == 6
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)


# -- experiment config and reports ---------------------------------------------------------


def small_config(**kw):
    base = dict(model=CPP08, horizons=(10.0, 100.0), specs=("both:0,0", "pos:1"), n_paths=300,
                tau_grid=(0.5, 1.0), base_seed=3, ref_terms=300)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_roundtrip_and_digest():
    c = small_config()
    d = json.loads(json.dumps(c.to_dict()))
    c2 = ExperimentConfig.from_dict(d)
    assert c2 == c and c2.digest() == c.digest()
    assert small_config(base_seed=4).digest() != c.digest()
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({**d, "bogus": 1})
    for bad in (dict(horizons=(100.0, 10.0)), dict(tau_grid=(0.0,)), dict(n_paths=0), dict(centering="x"),
                dict(specs=("pos:x",))):
        with pytest.raises(DomainError):
            small_config(**bad)


def test_marginal_convergence_report():
    rep = marginal_convergence(small_config())
    assert rep.columns[:5] == ["spec", "t", "tau", "n", "ks"]
    assert len(rep.rows) == 2 * 2 * 2
    assert all(0 <= k <= 1 for k in rep.column("ks"))
    assert rep.metadata["config_digest"] == small_config().digest()
    again = marginal_convergence(small_config())
    assert again.rows == rep.rows
    cells = convergence_cells(rep, 0.05)
    assert len(cells) == 4 and all(len(c.ks) == 2 for c in cells)


def test_ks_invariant_under_reordering():
    from scipy.stats import ks_2samp

    rng = np.random.default_rng(0)
    a, b = rng.standard_cauchy(500), rng.standard_cauchy(400)
    assert ks_2samp(a, b).statistic == ks_2samp(rng.permutation(a), rng.permutation(b)).statistic


def test_report_csv_json():
    rep = ExperimentReport("demo", ["a", "b"], [(1, 0.1), (2, float("inf"))], {"seed": 5})
    text = rep.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# demo"
    assert json.loads(lines[1][len("# metadata: "):]) == {"seed": 5}
    assert lines[2] == "a,b" and lines[3] == "1,0.10000000000000001"
    buf = io.StringIO()
    rep.to_csv(buf)
    assert buf.getvalue() == text
    js = json.loads(rep.to_json())
    assert js["rows"][1] == [2, None]
    assert rep.records()[0] == {"a": 1, "b": 0.1}


# -- ties -------------------------------------------------------------------------------


def test_tie_scan_examples():
    tied = CadlagPath.from_jumps([0.2, 0.5, 0.7], [3.0, -1.0, -3.0])
    clean = CadlagPath.from_jumps([0.2, 0.5, 0.7], [3.0, -1.0, 2.0])
    res = tie_scan([tied, clean], r=1)
    assert res.events == 1 and res.n_paths == 2
    assert tie_scan([clean], r=1).events == 0
    # within-tol counting
    assert tie_scan([clean], r=1, tol=1.0).events == 1
    assert tie_scan([clean], r=2, tol=0.5).events == 0
    # a tie below depth r is invisible
    deep = CadlagPath.from_jumps([0.1, 0.2, 0.3, 0.4], [5.0, 4.0, 1.0, 1.0])
    assert tie_scan([deep], r=1).events == 0
    assert tie_scan([deep], r=3).events == 1
    with pytest.raises(DomainError):
        tie_scan([clean], r=0)
    with pytest.raises(DomainError):
        tie_scan([clean], r=1, tol=-1)


def test_tie_scan_accepts_jump_samples():
    js = [sample_jumps(StableSeries(0.8, 1, 1, 100), 1.0, RngSeed(1, k)) for k in range(50)]
    res = tie_scan(js, r=3)
    assert res.events == 0 and res.min_gaps.shape == (50,)
    assert tie_scan(js, r=3, tol=1e9).events == 50
    counts, edges = res.histogram
    assert counts.sum() == 50 and edges.size == counts.size + 1


# -- continuity probes -----------------------------------------------------------------


def test_perturbation_families():
    x = I(1 / 3) + I(2 / 3, 0.5)
    assert FAMILIES["egrtrim"].eps(4) == 0.25
    assert FAMILIES["fast"].eps(4) == 1 / 16
    y = FAMILIES["shift"](x, 1)
    assert y.n_jumps == 2
    # time 1/2 moves to 1/4, linearly on both sides
    np.testing.assert_allclose(y.jump_t, [1 / 6, 1 / 2], rtol=1e-14)
    np.testing.assert_array_equal(y.jump_s, x.jump_s)
    with pytest.raises(ConfigurationError):
        Perturbation("bogus")(x, 1)


def test_probe_example_family_discontinuous():
    x = I(1 / 3) + I(2 / 3)
    res = continuity_probe(x, TrimSpec.parse("lb-pos:1"), "egrtrim", n_steps=30)
    joint = res.joint
    assert all(j >= 0.9 for n, j in zip(res.report.column("n"), joint) if n >= 10)
    assert not res.certificate.guaranteed and res.certificate.discontinuity_proven
    # the plain J1 distance of the outputs stays bounded away from zero too
    assert min(res.distances[9:]) > 0.3


def test_probe_tie_free_converges():
    x = I(1 / 3) + I(2 / 3, 0.5)
    res = continuity_probe(x, TrimSpec.parse("lb-pos:1"), "fast", n_steps=64)
    d = res.distances
    assert d[-1] < 1e-3
    assert all(b <= a + 1e-15 for a, b in zip(d, d[1:]))
    assert res.certificate.guaranteed


def test_probe_rejects_non_converging_family():
    x = I(0.5)
    with pytest.raises(ConfigurationError):
        continuity_probe(x, TrimSpec.parse("pos:1"), lambda x, n: x + I(0.25), n_steps=5)
    with pytest.raises(ConfigurationError):
        continuity_probe(x, TrimSpec.parse("pos:1"), "nope")


# -- ruin ------------------------------------------------------------------------------


def test_ruin_time_examples():
    x = CadlagPath.from_jumps([0.5], [2.0], slope=-1.0)
    assert ruin_time(x, 0.5) == 0.5
    assert ruin_time(apply_trim(x, TrimSpec.parse("pos:1")), 0.5) is None
    assert ruin_time(CadlagPath.linear(2.0), 1.0) == pytest.approx(0.5)
    assert ruin_time(CadlagPath.linear(2.0), 2.0) is None  # strict exceedance
    with pytest.raises(DomainError):
        ruin_time(x, 0.0)


def test_ruin_time_scaling_equivariance():
    # jump crossings are exactly scale equivariant; drift crossings to rounding
    for k in range(30):
        x = sample_jumps(SIGNED, 1.0, RngSeed(40, k)).to_path()
        for u in (0.5, 1.0, 3.0):
            for b in (2.0, 0.125, 3.7):
                t1 = ruin_time(x, u)
                t2 = ruin_time(scalar_affine(x, 0.0, b), u * b)
                if t1 is None:
                    assert t2 is None or b not in (2.0, 0.125)
                elif b in (2.0, 0.125):
                    assert t2 == t1
                else:
                    assert t2 == pytest.approx(t1, rel=1e-12, abs=1e-12)


def test_trimming_delays_ruin():
    for k in range(30):
        x = sample_jumps(SIGNED, 2.0, RngSeed(41, k)).to_path()
        prev = 0.0
        for r in range(4):
            t = ruin_time(apply_trim(x, TrimSpec.parse(f"pos:{r}")), 1.0)
            t = np.inf if t is None else t
            assert t >= prev
            prev = t


def test_trimmed_sup_matches_paths():
    for model in (CPP08, SIGNED):
        for k in range(20):
            js = sample_jumps(model, 2.0, RngSeed(42, k))
            for r in (0, 1, 2):
                x = apply_trim(js.to_path(), TrimSpec.parse(f"pos:{r}"))
                assert trimmed_sup(js, r) == pytest.approx(running_sup(x)(1.0), rel=1e-12, abs=1e-12)


def test_ruin_experiment_report():
    cfg = small_config(specs=("both:0,0", "pos:1"), u_grid=(1.0, 5.0), n_paths=200)
    rep = ruin_experiment(cfg)
    assert len(rep.rows) == 2 * 2 * 2
    for rec in rep.records():
        assert 0 <= rec["p_model"] <= 1 and 0 <= rec["p_stable"] <= 1
    # P(no ruin) grows with u and with r
    recs = {(r["t"], r["r"], r["u"]): r["p_model"] for r in rep.records()}
    for t in cfg.horizons:
        assert recs[(t, 0, 1.0)] <= recs[(t, 0, 5.0)]
        assert recs[(t, 0, 1.0)] <= recs[(t, 1, 1.0)]
    with pytest.raises(ConfigurationError):
        ruin_experiment(small_config(specs=("smod:1",)))
