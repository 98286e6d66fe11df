import json
import logging

import numpy as np
import pytest

from condcover.errors import InvalidInputError
from condcover.harness import (
    ExperimentConfig,
    TrialRecord,
    emit_summary,
    read_records_csv,
    records_to_csv,
    run_experiment,
    run_trial,
    summary_lookup,
    verify_bound,
    write_results,
)
from condcover.harness.verify import (
    VERIFY_KINDS,
    default_params,
    group_coverage_trial,
    group_scales,
    lemma8_fit,
    uniform_order_statistics,
)


def rec(trial, rate, group="marginal", setting="n/d=10", total=10):
    return TrialRecord("gaussian-linreg", setting, trial, "adaptive", "none", group,
                       int(round(rate * total)), total, rate, 1.0, 1.0)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig("gaussian-linreg")
        assert cfg.corrections == ("none", "naive", "scaling")
        assert cfg.methods == ("adaptive",)

    def test_from_dict_single_correction(self):
        cfg = ExperimentConfig.from_dict({"experiment": "slices", "correction": "naive", "trials": 3})
        assert cfg.corrections == ("naive",) and cfg.trials == 3

    def test_roundtrip(self):
        cfg = ExperimentConfig("sinusoid", trials=2, settings=(100,), params={"k": 3})
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("doc", [
        {"experiment": "nope"},
        {"experiment": "slices", "trials": 0},
        {"experiment": "slices", "alpha_des": 1.0},
        {"experiment": "slices", "correction": "magic"},
        {"experiment": "sinusoid", "methods": ["adaptive"]},
        {"experiment": "slices", "colour": "red"},
    ])
    def test_invalid(self, doc):
        with pytest.raises(InvalidInputError):
            ExperimentConfig.from_dict(doc)


class TestRunTrial:
    def test_single_cell_record_count(self):
        cfg = ExperimentConfig("gaussian-linreg", trials=1, corrections=("none",), settings=(10,), params={"d": 4})
        recs = run_trial(cfg, 0)
        assert len(recs) == 1
        r = recs[0]
        assert (r.setting, r.method, r.correction, r.group) == ("n/d=10", "adaptive", "none", "marginal")
        assert r.total == 1000 and r.rate == r.covered_count / r.total

    def test_static_only_single_record(self):
        cfg = ExperimentConfig("gaussian-linreg", trials=1, methods=("static",), settings=(10,), seed=11)
        recs = run_trial(cfg, 0)
        assert [(r.method, r.correction, r.group) for r in recs] == [("static", "enlarged", "marginal")]

    def test_three_corrections_table_shape(self):
        cfg = ExperimentConfig("gaussian-linreg", trials=4, settings=(20,))
        recs = run_experiment(cfg)
        assert len(recs) == 4 * 3 * 1
        assert {(r.trial_id, r.correction) for r in recs} == {(t, c) for t in range(4)
                                                             for c in ("none", "naive", "scaling")}

    def test_sinusoid_800_has_five_bins_and_marginal(self):
        cfg = ExperimentConfig("sinusoid", trials=1, methods=("two-sided",), settings=(800,))
        assert [r.group for r in run_trial(cfg, 0)] == ["marginal"] + [f"bin{i}" for i in range(5)]

    def test_sinusoid_groups_add_up(self):
        cfg = ExperimentConfig("sinusoid", trials=1, methods=("two-sided",), settings=(200,), params={"k": 4})
        recs = run_trial(cfg, 0)
        assert [r.group for r in recs] == ["marginal", "bin0", "bin1", "bin2", "bin3"]
        marg, bins = recs[0], recs[1:]
        assert sum(b.total for b in bins) == marg.total
        assert sum(b.covered_count for b in bins) == marg.covered_count
        mixed = sum(b.total / marg.total * b.rate for b in bins)
        assert mixed == pytest.approx(marg.rate, abs=1e-12)

    def test_sinusoid_residual_response_narrows_bands(self):
        base = dict(experiment="sinusoid", trials=1, methods=("two-sided",), settings=(400,))
        raw = run_trial(ExperimentConfig(**base), 0)[0]
        resid = run_trial(ExperimentConfig(**base, params={"response": "residual"}), 0)[0]
        assert resid.width_mean < raw.width_mean

    def test_sinusoid_bad_response(self):
        cfg = ExperimentConfig("sinusoid", trials=1, settings=(100,), params={"response": "log"})
        with pytest.raises(InvalidInputError):
            run_trial(cfg, 0)

    def test_infeasible_correction_skipped_and_logged(self, caplog):
        cfg = ExperimentConfig("gaussian-linreg", trials=1, corrections=("none", "naive"), settings=(2,),
                               params={"d": 5})
        with caplog.at_level(logging.WARNING, logger="condcover.harness"):
            recs = run_trial(cfg, 0)
        assert [r.correction for r in recs] == ["none"]
        assert "skipped" in caplog.text

    def test_static_and_full_grid_on_slices(self):
        cfg = ExperimentConfig("slices", trials=1, methods=("static", "full-grid"), settings=(200,),
                               params={"d": 6, "d0": 2, "n_test": 200}, grid_points=64)
        recs = run_trial(cfg, 0)
        cells = {(r.method, r.correction) for r in recs}
        assert cells == {("static", "enlarged"), ("full-grid", "none")}
        assert {r.group for r in recs} == {"marginal", "slice0>", "slice0<", "slice1>", "slice1<"}
        assert all(r.width_mean >= 0 for r in recs if r.width_mean is not None)

    def test_bound_verify_records(self):
        cfg = ExperimentConfig("bound-verify", trials=1, settings=("prop2",), params={"inner_trials": 200})
        recs = run_trial(cfg, 0)
        assert recs and all(r.setting == "prop2" for r in recs)


class TestRunExperiment:
    CFG = dict(experiment="gaussian-linreg", trials=3, corrections=("none",), settings=(10,), params={"d": 4})

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_experiment(ExperimentConfig(**self.CFG, output_path=str(a)))
        run_experiment(ExperimentConfig(**self.CFG, output_path=str(b)))
        assert a.read_bytes() == b.read_bytes()
        meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
        assert meta["config"]["trials"] == 3 and "created_at" in meta
        assert (tmp_path / "a.csv.timings.csv").exists()

    def test_workers_do_not_change_results(self):
        one = run_experiment(ExperimentConfig(**self.CFG))
        two = run_experiment(ExperimentConfig(**self.CFG, workers=2))
        assert records_to_csv(one) == records_to_csv(two)

    def test_trials_are_ordered(self):
        recs = run_experiment(ExperimentConfig(**self.CFG))
        assert [r.trial_id for r in recs] == [0, 1, 2]


class TestRecords:
    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            TrialRecord("e", "s", 0, "m", "c", "g", 5, 3, 1.0)

    def test_csv_roundtrip(self, tmp_path):
        recs = [rec(0, 0.9), TrialRecord("sinusoid", "n_val=50", 1, "full-grid", "none", "bin0", 0, 0, None)]
        path = tmp_path / "r.csv"
        write_results(path, recs)
        assert read_records_csv(path) == recs
        assert path.read_text().splitlines()[0].startswith("schema_version,experiment")

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text(records_to_csv([rec(0, 0.9)]).replace("\n1,", "\n99,"))
        with pytest.raises(ValueError):
            read_records_csv(path)


class TestSummary:
    def test_identical_rates_have_zero_std(self):
        rows = emit_summary([rec(t, 0.9) for t in range(5)])
        row = summary_lookup(rows, "n/d=10", "adaptive", "none")
        assert (row.mean, row.std, row.median, row.count) == (pytest.approx(0.9), 0.0, 0.9, 5)

    def test_two_settings_two_blocks(self):
        recs = [rec(t, r, setting=s) for t, r in enumerate([0.8, 1.0]) for s in ("n/d=40", "n/d=10")]
        rows = [r for r in emit_summary(recs) if r.metric == "rate"]
        assert [r.setting for r in rows] == ["n/d=10", "n/d=40"]
        assert rows[0].mean == pytest.approx(0.9) and rows[0].std == pytest.approx(0.1)

    def test_uncorrected_below_scaling(self):
        # n/d = 10 is the smallest grid ratio where the scaling correction is feasible for d = 20
        cfg = ExperimentConfig("gaussian-linreg", trials=30, corrections=("none", "scaling"), settings=(10,))
        rows = emit_summary(run_experiment(cfg))
        none = summary_lookup(rows, "n/d=10", "adaptive", "none").mean
        scaled = summary_lookup(rows, "n/d=10", "adaptive", "scaling").mean
        assert none < scaled

    def test_marginal_sorted_first(self):
        recs = [rec(0, 0.5, group="bin0"), rec(0, 0.5)]
        assert emit_summary(recs)[0].group == "marginal"

    def test_empty(self):
        with pytest.raises(ValueError):
            emit_summary([])

    def test_missing_cell(self):
        with pytest.raises(KeyError):
            summary_lookup(emit_summary([rec(0, 0.9)]), "n/d=5", "adaptive", "none")


class TestVerify:
    def test_order_statistics_shape_and_range(self):
        u = uniform_order_statistics(20, 5, 7, 0, "t")
        assert u.shape == (7,) and np.all((0 < u) & (u < 1))

    def test_order_statistic_mean(self):
        # k-th of n uniforms has mean k/(n+1)
        u = uniform_order_statistics(9, 3, 4000, 1, "mean")
        assert u.mean() == pytest.approx(0.3, abs=4 * np.sqrt(0.3 * 0.7 / 11 / 4000))

    def test_group_scales(self):
        np.testing.assert_allclose(group_scales(3), [1.0, 1.5, 2.0])

    def test_group_coverage_near_nominal(self):
        cov = group_coverage_trial(4000, np.array([0.5, 0.5]), 0.1, 0, 0, "gc")
        np.testing.assert_allclose(cov, 0.9, atol=0.03)

    def test_lemma8_fit_is_consistent(self):
        fit = lemma8_fit(0, 0)
        assert fit.interp <= fit.d

    @pytest.mark.parametrize("kind", VERIFY_KINDS)
    def test_each_kind_passes(self, kind):
        trials = 100 if kind in ("corollary3", "lemma8") else 500
        v = verify_bound(kind, trials=trials)
        assert v.passed, v.as_dict()
        assert json.dumps(v.as_dict())

    def test_prop2_gamma_override(self):
        v = verify_bound("prop2", {"gamma": 0.1}, trials=500)
        assert v.params["gamma"] == 0.1 and v.passed
        fail = np.exp(-2 * default_params("prop2")["n"] * 0.01)
        assert v.checks[0].nominal == pytest.approx(fail, rel=1e-12)
        assert v.nominal_rate == pytest.approx(1 - fail)
        assert v.holds_rate == 1.0

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            verify_bound("nope")

    def test_unknown_param(self):
        with pytest.raises(InvalidInputError):
            verify_bound("prop2", {"bogus": 1})
