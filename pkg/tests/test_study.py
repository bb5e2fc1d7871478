import math

import numpy as np
import pytest
from _helpers import FS, in_range, oscillator
from scipy.optimize import least_squares

from psdcalib.estimators import FitResult
from psdcalib.models import shape, to_profiled
from psdcalib.study import (
    Scenario,
    StudyConfig,
    StudyError,
    asymptotic_bias,
    bin_sweep,
    bundled_config,
    config_from_dict,
    load_config,
    read_log,
    run_replicate,
    run_study,
    summarize,
    sweep_table,
    write_log,
    write_rows,
)


def _small_cfg(**kw):
    scen = (
        Scenario("q10", oscillator(10.0), 20_000, FS),
        Scenario("q100", oscillator(100.0), 20_000, FS),
    )
    base = dict(scenarios=scen, replicates=6, master_seed=11)
    base.update(kw)
    return StudyConfig(**base)


@pytest.fixture(scope="module")
def small_summary():
    return run_study(_small_cfg(), jobs=1)


class TestRatios:
    def test_reference_against_itself_is_one(self, small_summary):
        for scen in ("q10", "q100"):
            for param in ("f0", "Q", "k"):
                assert small_summary.ratio(scen, "MLE", param) == 1.0
                assert small_summary.row(scen, "MLE", param)["ratio_marginal"] == 1.0

    def test_parallel_matches_serial(self, small_summary):
        par = run_study(_small_cfg(), jobs=2)
        # repr so NaN fields compare equal
        assert repr(par.rows) == repr(small_summary.rows)
        assert repr(par.records) == repr(small_summary.records)

    def test_ratio_algebra_from_log(self, small_summary, tmp_path):
        path = tmp_path / "log.csv"
        write_log(small_summary.records, path)
        recs = read_log(path)
        for a, b in zip(recs, small_summary.records):
            for key in ("f0", "Q", "k"):
                assert a[key] == b[key]
        for scen in ("q10", "q100"):
            truth = oscillator(10.0 if scen == "q10" else 100.0)
            for param in ("Q", "k"):
                t = getattr(truth, param)
                ests = {
                    fit: {r["replicate"]: r[param] for r in recs if r["scenario"] == scen and r["fit"] == fit}
                    for fit in ("NLS", "MLE")
                }
                mse = {fit: np.mean([(v - t) ** 2 for v in e.values()]) for fit, e in ests.items()}
                expected = mse["NLS"] / mse["MLE"]
                assert small_summary.ratio(scen, "NLS", param) == pytest.approx(expected, rel=1e-12)

    def test_summary_from_log_is_identical(self, small_summary, tmp_path):
        path = tmp_path / "log.csv"
        write_log(small_summary.records, path)
        again = summarize(read_log(path), _small_cfg())
        assert repr(again.rows) == repr(small_summary.rows)

    def test_table_written(self, small_summary, tmp_path):
        path = tmp_path / "t.tsv"
        small_summary.write_table(path, delimiter="\t")
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(small_summary.rows)
        assert "ratio" in lines[0].split("\t")

    def test_failed_fits_are_counted_not_fatal(self):
        # a replicate with too few in-range ordinates fails every fit
        cfg = StudyConfig(scenarios=(Scenario("tiny", oscillator(10.0), 400, FS),), replicates=2)
        s = run_study(cfg)
        row = s.row("tiny", "LP", "Q")
        assert row["n_failed"] == 2 and math.isnan(row["mse"])
        assert all(r["message"] for r in s.records)


class TestConfig:
    def test_bundled_configs_load(self):
        for name in ("baseline-desk", "baseline-full", "sine-desk", "sine-q500-desk", "pink-desk"):
            cfg = bundled_config(name)
            assert cfg.replicates >= 1 and cfg.scenarios

    def test_overrides(self):
        cfg = bundled_config("baseline-desk", replicates=3, master_seed=5)
        assert cfg.replicates == 3 and cfg.master_seed == 5

    def test_unknown_bundled(self):
        with pytest.raises(FileNotFoundError):
            bundled_config("nope")

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            "replicates: 2\nestimators: [lp, mle]\nscenarios:\n"
            "  - name: a\n    model: {Q: 30}\n    duration: 0.1\n    fs: 2.0e5\n"
        )
        cfg = load_config(path)
        assert cfg.estimators == ("LP", "MLE")
        assert cfg.scenarios[0].n == 20_000
        assert cfg.scenarios[0].model.Q == 30.0

    @pytest.mark.parametrize(
        "d",
        [
            dict(scenarios=[]),
            dict(bogus=1, scenarios=[dict(name="a", n=100, fs=1e3)]),
            dict(replicates=0, scenarios=[dict(name="a", n=100, fs=1e3)]),
            dict(estimators=["XYZ"], scenarios=[dict(name="a", n=100, fs=1e3)]),
            dict(scenarios=[dict(name="a", n=100, fs=1e3), dict(name="a", n=100, fs=1e3)]),
            dict(scenarios=[dict(name="a", n=100, fs=1e3, pink_fit="maybe")]),
        ],
    )
    def test_invalid(self, d):
        with pytest.raises(ValueError):
            config_from_dict(d)

    def test_config_hash_stable(self):
        assert bundled_config("baseline-desk").config_hash == bundled_config("baseline-desk").config_hash
        assert bundled_config("baseline-desk").config_hash != bundled_config("baseline-desk", replicates=3).config_hash


def test_synthesis_failure_names_replicate():
    scen = Scenario("huge", oscillator(10.0), 10**12, 1e7)
    cfg = StudyConfig(scenarios=(scen,), replicates=1)
    with pytest.raises(StudyError, match="replicate 0"):
        run_replicate(cfg, scen, 0)


def test_replicate_seeds_are_distinct():
    cfg = _small_cfg(estimators=("LP",))
    a = run_replicate(cfg, cfg.scenarios[0], 0)[0]
    b = run_replicate(cfg, cfg.scenarios[0], 1)[0]
    assert a["Q"] != b["Q"]
    assert repr(run_replicate(cfg, cfg.scenarios[0], 0)[0]) == repr(a)


class TestAsymptoticBias:
    @pytest.mark.parametrize("q", [10.0, 100.0])
    def test_exact_without_pink_unbinned(self, q):
        ratios = asymptotic_bias(oscillator(q, A_f=0.0, alpha=0.55), "LP", bin_size=1, n=5_000_000)
        np.testing.assert_allclose(ratios, 1.0, atol=1e-6)

    def test_exact_without_pink_binned(self):
        # bins are fitted at their mean frequency, so a curved truth is reproduced only to ~1e-6
        ratios = asymptotic_bias(oscillator(10.0, A_f=0.0, alpha=0.55), "LP", bin_size=100)
        np.testing.assert_allclose(ratios, 1.0, atol=1e-5)

    def test_pink_biases_low_q(self):
        f, q, k = asymptotic_bias(oscillator(10.0, A_f=1e7, alpha=0.55), "LP")
        assert abs(f - 1) < 0.01
        assert q < 0.95


class TestBinSweep:
    def test_b1_lp_is_log_regression(self):
        th = oscillator(10.0)
        p = in_range(th, 40_000, seed=4)
        res = bin_sweep(p, [1], methods=("LP",))[1]["LP"]
        assert isinstance(res, FitResult) and res.converged

        z = np.log(p.ordinates) + np.euler_gamma

        def resid(x):
            return z - np.log(p.fs * np.exp(x[0]) * shape(p.freqs, np.exp(x[1:])))

        pp = to_profiled(th)
        x0 = np.log([pp.tau * 1.3, pp.f0 * 1.001, pp.gamma * 0.8, pp.R_w * 1.5])
        ref = least_squares(resid, x0, method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14)
        got = res.profiled
        np.testing.assert_allclose(np.exp(ref.x), [got.tau, *got.eta], rtol=1e-6)

    def test_failures_recorded(self):
        p = in_range(oscillator(10.0), 20_000, seed=1)
        sweep = bin_sweep(p, [50, 10_000], methods=("NLS", "LP"))
        assert isinstance(sweep[50]["LP"], FitResult)
        assert isinstance(sweep[10_000]["LP"], str)
        rows = sweep_table(sweep)
        assert len(rows) == 4
        assert [r["converged"] for r in rows if r["bin_size"] == 10_000] == [False, False]

    def test_rows_written(self, tmp_path):
        p = in_range(oscillator(10.0), 20_000, seed=1)
        rows = sweep_table(bin_sweep(p, [20, 40]))
        write_rows(rows, tmp_path / "s.csv")
        assert len((tmp_path / "s.csv").read_text().splitlines()) == 5


def test_pink_ignored_scenario_inflates_nls():
    # reduced replicate count of the pink comparison: the misspecified fits
    # are biased, the jointly fitted ones are not
    scen = (
        Scenario("joint", oscillator(10.0, A_f=1e7, alpha=0.55), 100_000, FS, pink_fit="joint"),
        Scenario("ignore", oscillator(10.0, A_f=1e7, alpha=0.55), 100_000, FS, pink_fit="ignore"),
    )
    s = run_study(StudyConfig(scenarios=scen, replicates=10, estimators=("LP", "MLE"), master_seed=3))
    assert s.row("joint", "LP", "Q")["n_failed"] == 0
    assert abs(s.row("joint", "LP", "Q")["rel_bias"]) < 0.05
    assert s.row("ignore", "LP", "Q")["rel_bias"] < -0.05
