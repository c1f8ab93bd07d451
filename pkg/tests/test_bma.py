import math
import warnings

import numpy as np
import pytest

from pepselect.bma import (BmaError, CvConfig, bma_lps, bma_predict_closed, bma_predict_mcmc,
                           bma_r2, bma_rmse, model_shrinkage)
from pepselect.data import Dataset, ModelId, centre
from pepselect.modelspace import ModelPrior, build_table, enumerate_models
from pepselect.priors import PriorSpec
from pepselect.samplers import ChainTrace, SamplerConfig, batch_means_se, run_chain
from pepselect.simgen import ScenarioConfig, generate

from conftest import make_dataset


def const_trace(p, masks, beta, sigma2):
    rows = len(masks)
    return ChainTrace(p, 1, np.arange(1, rows + 1), np.asarray(masks, dtype=np.int64),
                      np.full(rows, float(sigma2)), np.full(rows, 10.0), np.zeros(rows),
                      np.tile(np.asarray(beta, dtype=float), (rows, 1)), "GibbsVS")


@pytest.fixture
def ds3c():
    return centre(make_dataset(n=40, p=3, seed=11, coef=(0.9, 0.0, -0.4)))


class TestClosedPrediction:
    def test_null_model_predicts_mean(self, ds3c):
        tab = build_table([0], [0.0], 3, ModelPrior())
        X_new = np.random.default_rng(0).standard_normal((5, 3))
        np.testing.assert_allclose(bma_predict_closed(tab, ds3c, PriorSpec("PEP"), X_new), ds3c.y.mean())

    def test_no_shrinkage_gives_ols(self, ds3c):
        m = ModelId.from_indices([0, 2], 3)
        tab = build_table([m.mask], [0.0], 3, ModelPrior())
        X_new = np.random.default_rng(1).standard_normal((4, 3))
        X1 = np.column_stack([np.ones(ds3c.n), ds3c.X[:, [0, 2]]])
        b = np.linalg.lstsq(X1, ds3c.y, rcond=None)[0]
        want = b[0] + X_new[:, [0, 2]] @ b[1:]
        got = bma_predict_closed(tab, ds3c, PriorSpec("PEP"), X_new, shrinkage=1.0)
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_linear_in_new_rows(self, ds3c):
        tab = enumerate_models(ds3c, PriorSpec("PEP"))
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((2, 3))
        f = lambda x: bma_predict_closed(tab, ds3c, PriorSpec("PEP"), x)[0] - ds3c.y.mean()  # noqa: E731
        assert f(2 * a - 3 * b) == pytest.approx(2 * f(a) - 3 * f(b), rel=1e-10)

    def test_requires_centred(self, ds3):
        tab = enumerate_models(ds3, PriorSpec("PEP"))
        with pytest.raises(BmaError, match="centred"):
            bma_predict_closed(tab, ds3, PriorSpec("PEP"), np.zeros((1, 3)))

    def test_column_check(self, ds3c):
        tab = enumerate_models(ds3c, PriorSpec("PEP"))
        with pytest.raises(BmaError):
            bma_predict_closed(tab, ds3c, PriorSpec("PEP"), np.zeros((1, 2)))

    def test_shrinkage_in_unit_interval(self, ds3c):
        for fam in ("PEP", "HyperG", "FixedG"):
            tab = enumerate_models(ds3c, PriorSpec(fam))
            ew = model_shrinkage(tab, ds3c, PriorSpec(fam))
            assert np.all((ew >= 0) & (ew < 1))

    @pytest.mark.slow
    def test_agrees_with_long_gibbs(self, ds3c):
        spec = PriorSpec("PEP")
        tab = enumerate_models(ds3c, spec)
        X_new = np.array([[1.0, -0.5, 0.3], [-1.2, 0.8, 1.5]])
        closed = bma_predict_closed(tab, ds3c, spec, X_new)
        tr = run_chain(ds3c, spec, ModelPrior(), SamplerConfig(100_000, 5_000, seed=4, algorithm="GibbsVS"))
        b0 = tr.beta[:, :1]
        be = tr.beta[:, 1:] * tr.gamma
        series = b0 + be @ X_new.T
        for j in range(2):
            se = batch_means_se(series[:, j])
            assert abs(series[:, j].mean() - closed[j]) < 3 * se + 1e-12
        np.testing.assert_allclose(bma_predict_mcmc(tr, ds3c, X_new), series.mean(axis=0), rtol=1e-12)


class TestMcmcPrediction:
    def test_identical_states(self, ds3c):
        beta = [2.0, 0.5, 7.0, -1.0]
        tr = const_trace(3, [0b101] * 10, beta, 1.0)
        X_new = np.array([[1.0, 2.0, 3.0]])
        # excluded slot (X2) is masked out
        assert bma_predict_mcmc(tr, ds3c, X_new)[0] == pytest.approx(2.0 + 0.5 - 3.0)

    def test_needs_beta(self, ds3c):
        tr = const_trace(3, [0], [0, 0, 0, 0], 1.0)
        tr.beta = None
        with pytest.raises(BmaError):
            bma_predict_mcmc(tr, ds3c, np.zeros((1, 3)))

    def test_thinning_invariance(self, ds3c):
        spec = PriorSpec("PEP")
        X_new = np.array([[0.7, 0.1, -0.9]])
        full = run_chain(ds3c, spec, ModelPrior(), SamplerConfig(30_000, 2_000, seed=5, algorithm="GibbsVS"))
        thin = run_chain(ds3c, spec, ModelPrior(), SamplerConfig(30_000, 2_000, seed=6, algorithm="GibbsVS", thin=5))
        s = (full.beta[:, :1] + (full.beta[:, 1:] * full.gamma) @ X_new.T)[:, 0]
        se = batch_means_se(s)
        a, b = bma_predict_mcmc(full, ds3c, X_new)[0], bma_predict_mcmc(thin, ds3c, X_new)[0]
        assert abs(a - b) < 4 * se * math.sqrt(1 + 5)


class TestR2Rmse:
    def test_r2_zero_when_sigma_is_sample_variance(self, ds3c):
        sy2 = np.var(ds3c.y, ddof=1)
        r = bma_r2(const_trace(3, [0] * 5, [0, 0, 0, 0], sy2), ds3c)
        np.testing.assert_allclose(r.series, 0.0, atol=1e-14)

    def test_r2_limit(self, ds3c):
        assert bma_r2(const_trace(3, [0] * 5, [0, 0, 0, 0], 1e-14), ds3c).mean == pytest.approx(1.0)

    def test_rmse_zero_at_truth(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((30, 2))
        ds = Dataset(1.0 + X @ [2.0, -1.0], X)
        tr = const_trace(2, [0b11] * 4, [1.0, 2.0, -1.0], 1e-20)
        assert bma_rmse(tr, ds, np.random.default_rng(0)).mean < 1e-8

    def test_rmse_null_model_analytic(self, ds3c):
        # E(y_i - yrep_i)^2 = (y_i - ybar)^2 + sigma2 averaged over i
        sy2 = np.var(ds3c.y, ddof=1)
        tr = const_trace(3, [0] * 4000, [ds3c.y.mean(), 0, 0, 0], sy2)
        r = bma_rmse(tr, ds3c, np.random.default_rng(1))
        want = math.sqrt(sy2 * (ds3c.n - 1) / ds3c.n + sy2)
        assert r.mean == pytest.approx(want, rel=0.01)

    def test_needs_sigma(self, ds3c):
        tr = const_trace(3, [0] * 3, [0, 0, 0, 0], 1.0)
        tr.sigma2 = np.full(3, np.nan)
        with pytest.raises(BmaError):
            bma_r2(tr, ds3c)


class TestLps:
    def test_fold_assignment(self):
        folds = CvConfig(folds=5, seed=3).assign(23)
        assert sorted(np.concatenate(folds).tolist()) == list(range(23))
        assert sorted(len(f) for f in folds) == [4, 4, 5, 5, 5]
        assert all(np.array_equal(a, b) for a, b in zip(folds, CvConfig(5, 3).assign(23)))

    def test_too_many_folds(self):
        with pytest.raises(ValueError):
            CvConfig(folds=13).assign(12)

    @pytest.mark.parametrize("predictive", ["ratio", "exact"])
    def test_leave_one_out(self, predictive):
        ds = make_dataset(n=12, p=2, seed=4, coef=(1.0, 0.0))
        res = bma_lps(ds, PriorSpec("PEP"), ModelPrior(), CvConfig(folds=12), predictive=predictive)
        assert res.scores.shape == (12,) and not res.failed
        assert np.all(np.isfinite(res.scores))

    def test_predictable_data(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((30, 2))
        e = rng.standard_normal(30)
        tight = bma_lps(Dataset(1 + X @ [1.0, -2.0] + 1e-4 * e, X), PriorSpec("PEP"), ModelPrior(),
                        CvConfig(folds=5))
        noisy = bma_lps(Dataset(1 + X @ [1.0, -2.0] + e, X), PriorSpec("PEP"), ModelPrior(),
                        CvConfig(folds=5))
        # the residual shrinkage bias (1 - w) x'beta, not the noise, bounds the density
        assert tight.mean < -3.0
        assert noisy.mean > 1.0

    def test_fold_relabel_invariance(self, ds3, monkeypatch):
        a = bma_lps(ds3, PriorSpec("PEP"), ModelPrior(), CvConfig(folds=3, seed=1))
        perm = np.random.default_rng(0).permutation(ds3.n)
        # same partition expressed on permuted rows
        dp = Dataset(ds3.y[perm], ds3.X[perm])
        folds_p = [np.sort(np.argsort(perm)[f]) for f in a.folds]
        monkeypatch.setattr(CvConfig, "assign", lambda self, n: folds_p)
        b = bma_lps(dp, PriorSpec("PEP"), ModelPrior(), CvConfig(folds=3, seed=1))
        np.testing.assert_allclose(b.scores, a.scores, rtol=1e-9)

    def test_ratio_and_exact_are_close(self, ds4):
        a = bma_lps(ds4, PriorSpec("PEP"), ModelPrior(), CvConfig(folds=4))
        b = bma_lps(ds4, PriorSpec("PEP"), ModelPrior(), CvConfig(folds=4), predictive="exact")
        np.testing.assert_allclose(a.scores, b.scores, atol=0.1)

    @pytest.mark.slow
    def test_exact_agrees_with_gibbs(self, ds4):
        cv = CvConfig(folds=4, seed=2)
        ex = bma_lps(ds4, PriorSpec("PEP"), ModelPrior(), cv, predictive="exact")
        gb = bma_lps(ds4, PriorSpec("PEP"), ModelPrior(), cv, engine="gibbs",
                     sampler=SamplerConfig(60_000, 5_000, seed=2, algorithm="GibbsVS"))
        for k in range(4):
            assert abs(ex.scores[k] - gb.scores[k]) < 3 * gb.mc_se[k], (k, ex.scores[k], gb.scores[k], gb.mc_se[k])

    def test_bad_arguments(self, ds4):
        with pytest.raises(ValueError):
            bma_lps(ds4, PriorSpec("PEP"), ModelPrior(), CvConfig(), engine="bas")
        with pytest.raises(ValueError):
            bma_lps(ds4, PriorSpec("PEP"), ModelPrior(), CvConfig(), predictive="plugin")


@pytest.mark.slow
def test_model_prior_orders_fit():
    """Uniform model prior fits closer than uniform-on-dimension in most replicates."""
    cfg = ScenarioConfig(1, n=50, p=15, replicates=20, seed=0)
    r2_wins = rmse_wins = 0
    for r in range(cfg.replicates):
        ds = generate(cfg, r)
        out = {}
        for kind in ("Uniform", "UniformOnDimension"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                tr = run_chain(ds, PriorSpec("PEP"), ModelPrior(kind),
                               SamplerConfig(3_000, 500, seed=r, algorithm="GibbsVS"))
            out[kind] = (bma_r2(tr, ds).mean, bma_rmse(tr, ds, np.random.default_rng(r)).mean)
        assert 0 < out["Uniform"][0] < 1
        r2_wins += out["Uniform"][0] > out["UniformOnDimension"][0]
        rmse_wins += out["Uniform"][1] < out["UniformOnDimension"][1]
    print(f"R2 wins {r2_wins}/20, RMSE wins {rmse_wins}/20")
    assert r2_wins > 10
    assert rmse_wins > 10
