import io
import math

import numpy as np
import pytest

from ogpm.core import Interval
from ogpm.estimation import (
    ConfigError,
    Dataset,
    DatasetError,
    EstimationReport,
    ExperimentConfig,
    Normalize,
    arc_distance,
    circular_mean,
    estimate_distribution,
    estimate_mean,
    histogram,
    load_csv_dataset,
    parse_config,
    read_reports_csv,
    run_experiment,
    synthetic_dataset,
    trial_rng,
    write_reports_csv,
)
from ogpm.mechanisms import REGISTRY, identity

UNIT = Interval.unit()
CIRCLE = Interval.circle()


class TestDatasets:
    @pytest.mark.parametrize("kind", ["uniform", "gaussian", "vonmises"])
    @pytest.mark.parametrize("dom", [UNIT, CIRCLE])
    def test_synthetic_in_domain(self, kind, dom):
        d = synthetic_dataset(kind, 2000, dom, seed=1)
        assert len(d) == 2000 and dom.contains(d.values)
        assert np.all(d.values < dom.hi)

    def test_seeded(self):
        a = synthetic_dataset("gaussian", 100, seed=3).values
        assert np.array_equal(a, synthetic_dataset("gaussian", 100, seed=3).values)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            synthetic_dataset("cauchy", 10)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.array([0.2, 1.5]), UNIT)
        with pytest.raises(ValueError):
            Dataset(np.array([0.2, np.nan]), UNIT)

    def test_csv_unit(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,value\n1,10\n2,20\n3,30\n")
        d = load_csv_dataset(p, "value")
        assert d.values[0] == 0 and d.values[1] == pytest.approx(0.5) and d.values[2] < 1

    def test_csv_circle(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("value\n-1\n7\n")
        d = load_csv_dataset(p, "value", Normalize.TO_CIRCLE)
        assert d.values == pytest.approx([2 * math.pi - 1, 7 - 2 * math.pi])

    def test_csv_errors(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("value\n0.1\nabc\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_csv_dataset(p, "value")
        with pytest.raises(DatasetError, match="column"):
            load_csv_dataset(p, "other")
        p.write_text("value\n")
        with pytest.raises(DatasetError):
            load_csv_dataset(p, "value")
        p.write_text("value\n0.5\n2\n")
        with pytest.raises(DatasetError):
            load_csv_dataset(p, "value", Normalize.NONE, UNIT)
        with pytest.raises(FileNotFoundError):
            load_csv_dataset(tmp_path / "missing.csv", "value")


class TestEstimators:
    def test_histogram(self):
        h = histogram(np.array([-0.5, 0.05, 0.55, 1.2]), UNIT, 2)
        assert list(h) == [0.5, 0.5]

    def test_identity_is_exact(self):
        d = synthetic_dataset("gaussian", 1000, seed=0)
        assert estimate_distribution(d, identity(UNIT), 1.0, seed=0).l1 == 0
        assert estimate_mean(d, identity(UNIT), 1.0, seed=0).abs_err == 0

    def test_circular_mean(self):
        mu, deg = circular_mean([0.1, 2 * math.pi - 0.1])
        assert not deg and arc_distance(mu, 0.0) < 1e-12
        assert circular_mean([0.0, math.pi])[1]

    def test_arc_distance(self):
        assert arc_distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)

    def test_circular_mean_estimate(self):
        d = synthetic_dataset("vonmises", 10_000, CIRCLE, seed=0)
        e = estimate_mean(d, REGISTRY["ogpm-circular"], 4.0, seed=1)
        assert e.abs_err < 0.1 and not e.degenerate

    def test_unbiased_mean(self):
        d = synthetic_dataset("uniform", 10_000, seed=0)
        errs = [estimate_mean(d, REGISTRY["ogpm-u"], 2.0, seed=s).abs_err for s in range(20)]
        assert np.mean(errs) < 0.02


class TestExperiment:
    def test_parse_config(self):
        cfg = parse_config("mechanisms = ogpm, pm-c  # two\nepsilons=1,2\ntrials=3\n\n")
        assert cfg.mechanisms == ("ogpm", "pm-c") and cfg.epsilons == (1.0, 2.0)
        assert cfg.trials == 3

    @pytest.mark.parametrize("text", ["mechanisms=ogpm\nepsilons=-1", "foo=1", "novalue",
                                      "mechanisms=ogpm\nepsilons=1\ntrials=x",
                                      "mechanisms=ogpm\nepsilons=1\ntasks=median",
                                      "epsilons=1"])
    def test_bad_config(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_unknown_mechanism(self):
        cfg = ExperimentConfig(("nope",), (1.0,), n=10, trials=1)
        with pytest.raises(ConfigError):
            run_experiment(cfg)

    def test_trial_rng_order_free(self):
        a = trial_rng(5, 3).random()
        trial_rng(5, 0).random()
        assert trial_rng(5, 3).random() == a

    def test_run_and_round_trip(self):
        cfg = ExperimentConfig(("ogpm", "sw-c"), (1.0, 4.0), n=500, trials=3, seed=7)
        reps = run_experiment(cfg)
        assert len(reps) == 8
        assert reps == run_experiment(cfg)
        buf = io.StringIO()
        write_reports_csv(reps, buf)
        buf.seek(0)
        assert read_reports_csv(buf) == reps

    def test_circle_adapts_baselines(self):
        cfg = ExperimentConfig(("ogpm", "pm-c"), (2.0,), tasks=("mean",), domain="circle",
                               dataset="synthetic:vonmises", n=500, trials=2)
        assert all(r.error_mean <= math.pi for r in run_experiment(cfg))

    def test_report_validation(self):
        with pytest.raises(ValueError):
            EstimationReport("m", 1.0, "mean", -1.0, 0.0, 1, 0)
        with pytest.raises(ValueError):
            EstimationReport("m", 1.0, "mean", 1.0, 0.0, 0, 0)
