import math
import warnings

import numpy as np
import pytest
from scipy import stats

from pepselect.modelspace import ModelPrior
from pepselect.priors import PriorSpec
from pepselect.simgen import (DEPENDENT_WEIGHTS, EFFECTS, INTERCEPT, NOISE_SD, Method, NormalStream,
                              ScenarioConfig, generate, run_study)


def _truth(p):
    b = np.zeros(p)
    for j, v in EFFECTS.items():
        b[j - 1] = v
    return b


class TestNormalStream:
    def test_uniform_open_interval(self):
        u = NormalStream(1).uniform(100_000)
        assert 0 < u.min() and u.max() < 1
        assert stats.kstest(u, "uniform").pvalue > 1e-3

    def test_normal(self):
        z = NormalStream(2).normal(100_000)
        assert stats.kstest(z, "norm").pvalue > 1e-3

    def test_same_seed_same_words(self):
        np.testing.assert_array_equal(NormalStream(5).normal((3, 4)), NormalStream(5).normal((3, 4)))

    def test_row_major_draw_order(self):
        a = NormalStream(9).normal((3, 4))
        b = NormalStream(9).normal(12)
        np.testing.assert_array_equal(a.ravel(), b)


class TestScenarioConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(scenario=3)
        with pytest.raises(ValueError):
            ScenarioConfig(p=12)
        with pytest.raises(ValueError):
            ScenarioConfig(scenario=2, p=14)

    def test_replicate_seed(self):
        assert ScenarioConfig(seed=6).replicate_seed(3) == 5


class TestScenario1:
    def test_deterministic(self):
        cfg = ScenarioConfig(1, n=50, p=15, seed=4)
        a, b = generate(cfg, 2), generate(cfg, 2)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        assert not np.array_equal(generate(cfg, 3).y, a.y)
        assert a.names[0] == "X1" and a.names[-1] == "X15"

    def test_first_draws_are_covariates(self):
        cfg = ScenarioConfig(1, n=5, p=15, seed=7)
        ds = generate(cfg)
        z = NormalStream(7).normal(5 * 15 + 5)
        np.testing.assert_array_equal(ds.X.ravel(), z[:75])
        np.testing.assert_allclose(ds.y, INTERCEPT + ds.X @ _truth(15) + NOISE_SD * z[75:], rtol=1e-13)

    def test_law_of_large_numbers(self):
        ds = generate(ScenarioConfig(1, n=100_000, p=15, seed=1))
        assert ds.y.mean() == pytest.approx(INTERCEPT, abs=0.05)
        resid = ds.y - INTERCEPT - ds.X @ _truth(15)
        assert resid.std() == pytest.approx(NOISE_SD, abs=0.05)
        np.testing.assert_allclose(ds.X.std(axis=0), 1.0, atol=0.02)
        fit = np.linalg.lstsq(np.column_stack([np.ones(ds.n), ds.X]), ds.y, rcond=None)[0]
        np.testing.assert_allclose(fit[1:], _truth(15), atol=0.05)


class TestScenario2:
    def test_dependent_block(self):
        ds = generate(ScenarioConfig(2, n=100_000, p=15, seed=2))
        c = np.asarray(DEPENDENT_WEIGHTS)
        want = c[-1] / math.sqrt(1 + c @ c)
        for j in range(10, 15):
            assert np.corrcoef(ds.X[:, j], ds.X[:, 4])[0, 1] == pytest.approx(want, abs=0.03)
        assert abs(np.corrcoef(ds.X[:, 5], ds.X[:, 10])[0, 1]) < 0.03
        resid = ds.X[:, 10:15] - (ds.X[:, :5] @ c)[:, None]
        np.testing.assert_allclose(resid.std(axis=0), 1.0, atol=0.02)

    def test_nonstandard_width_warns(self):
        with pytest.warns(UserWarning, match="nonstandard"):
            ds = generate(ScenarioConfig(2, n=20, p=17, seed=0))
        assert ds.p == 17


class TestStudy:
    def test_small_study(self, tmp_path):
        cfg = ScenarioConfig(1, n=50, p=13, replicates=2, seed=0)
        methods = (Method("PEP", PriorSpec("PEP"), ModelPrior()),
                   Method("I", PriorSpec("Intrinsic"), ModelPrior("UniformOnDimension")))
        res = run_study(cfg, methods)
        assert res.inclusion.shape == (2, 2, 13)
        assert res.mean_dim.shape == (2, 2)
        assert not res.failed
        assert np.all((res.inclusion >= 0) & (res.inclusion <= 1))
        assert res.median_inclusion("PEP", 0) > 0.9
        f = tmp_path / "study.csv"
        res.write_csv(f)
        lines = f.read_text().splitlines()
        assert lines[0] == "replicate,method,covariate,inclusion_prob"
        assert len(lines) == 1 + 2 * 2 * 13
        res.write_dims_csv(tmp_path / "dims.csv")
        assert len((tmp_path / "dims.csv").read_text().splitlines()) == 5

    def test_threads_do_not_change_results(self):
        cfg = ScenarioConfig(1, n=40, p=13, replicates=2, seed=1)
        methods = (Method("PEP", PriorSpec("PEP")),)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = run_study(cfg, methods, threads=1)
            b = run_study(cfg, methods, threads=2)
        np.testing.assert_array_equal(a.inclusion, b.inclusion)
