import math

import numpy as np
import pytest

from pepselect.data import ModelId
from pepselect.modelspace import ModelPrior, enumerate_models
from pepselect.posterior import posterior_g_moments, posterior_w_moments
from pepselect.priors import PriorSpec
from pepselect.samplers import (ChainState, SamplerConfig, batch_means_se, bvs_step, merge_traces,
                                model_frequencies, read_trace_binary, run_chain, run_chains,
                                run_fixed_gibbs, total_variation, trace_summaries,
                                write_trace_binary, write_trace_csv)
from pepselect.data import ols_stats


def _exact(ds, spec, prior=ModelPrior()):
    tab = enumerate_models(ds, spec, prior)
    return {int(m): float(q) for m, q in zip(tab.masks, tab.prob)}


class TestBvsStep:
    def _state(self):
        return ChainState(ModelId.from_bits("010"))

    def test_always_accept(self):
        rng = np.random.default_rng(0)
        c = {}
        s = bvs_step(self._state(), 0, lambda st, pr: 5.0, rng, c)
        assert s.gamma.bits == "110"
        assert c == {"proposed": 1, "accepted": 1}

    def test_never_accept(self):
        rng = np.random.default_rng(0)
        s = self._state()
        for _ in range(100):
            s = bvs_step(s, 2, lambda st, pr: -math.inf, rng)
        assert s.gamma.bits == "010"

    def test_acceptance_rate(self):
        rng = np.random.default_rng(1)
        c = {}
        for _ in range(20_000):
            bvs_step(self._state(), 1, lambda st, pr: math.log(0.3), rng, c)
        assert c["accepted"] / c["proposed"] == pytest.approx(0.3, abs=0.015)

    def test_failing_ratio_is_skipped(self):
        def bad(st, pr):
            raise ValueError("no")
        c = {}
        s = bvs_step(self._state(), 1, bad, np.random.default_rng(0), c)
        assert s.gamma.bits == "010" and c["skipped"] == 1

    def test_index_checked(self):
        with pytest.raises(IndexError):
            bvs_step(self._state(), 3, lambda st, pr: 0.0, np.random.default_rng(0))

    def test_detailed_balance_two_covariates(self):
        # target over 4 models; the flip kernel with MH ratios must reproduce it
        target = np.array([0.1, 0.2, 0.3, 0.4])
        ratio = lambda st, pr: math.log(target[pr.mask] / target[st.gamma.mask])  # noqa: E731
        rng = np.random.default_rng(2)
        s = ChainState(ModelId.null(2))
        counts = np.zeros(4)
        for t in range(60_000):
            s = bvs_step(s, t % 2, ratio, rng)
            counts[s.gamma.mask] += 1
        np.testing.assert_allclose(counts / counts.sum(), target, atol=0.01)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(iterations=10, burnin=10)
        with pytest.raises(ValueError):
            SamplerConfig(algorithm="RJ")
        with pytest.raises(ValueError):
            SamplerConfig(thin=0)
        with pytest.raises(ValueError):
            SamplerConfig(seed=-1)

    def test_n_keep(self):
        assert SamplerConfig(1000, 100, thin=7).n_keep == 128


@pytest.mark.parametrize("algorithm", ["MC3", "MC3_given_g", "GibbsVS"])
class TestChains:
    def test_length_and_determinism(self, ds4, algorithm):
        cfg = SamplerConfig(600, 100, seed=9, algorithm=algorithm, thin=3)
        a = run_chain(ds4, PriorSpec("PEP"), ModelPrior(), cfg)
        b = run_chain(ds4, PriorSpec("PEP"), ModelPrior(), cfg)
        assert len(a) == cfg.n_keep == 166
        # iterations are numbered 1..T; the first kept one is burnin + thin
        assert a.iteration[0] == 103 and np.all(np.diff(a.iteration) == 3)
        assert a.iteration[-1] <= 600
        np.testing.assert_array_equal(a.masks, b.masks)
        np.testing.assert_array_equal(a.g, b.g)
        c = run_chain(ds4, PriorSpec("PEP"), ModelPrior(), cfg, stream=1)
        assert not np.array_equal(a.masks, c.masks) or not np.array_equal(a.g, c.g)

    def test_matches_enumeration(self, ds4, algorithm):
        cfg = SamplerConfig(20_000, 2_000, seed=3, algorithm=algorithm)
        tr = run_chain(ds4, PriorSpec("PEP"), ModelPrior(), cfg)
        assert total_variation(model_frequencies(tr), _exact(ds4, PriorSpec("PEP"))) < 0.04

    def test_random_scan(self, ds4, algorithm):
        cfg = SamplerConfig(20_000, 2_000, seed=4, algorithm=algorithm, scan="random")
        spec = PriorSpec("Intrinsic")
        tr = run_chain(ds4, spec, ModelPrior("UniformOnDimension"), cfg)
        exact = _exact(ds4, spec, ModelPrior("UniformOnDimension"))
        assert total_variation(model_frequencies(tr), exact) < 0.04

    def test_fix_model(self, ds4, algorithm):
        start = ModelId.from_indices([0, 2], 4)
        cfg = SamplerConfig(300, 0, seed=1, algorithm=algorithm, fix_model=True, start=start)
        tr = run_chain(ds4, PriorSpec("PEP"), ModelPrior(), cfg)
        assert np.all(tr.masks == start.mask)


class TestQuadratureFamilies:
    def test_mc3_hyper_g(self, ds4):
        spec = PriorSpec("HyperG")
        tr = run_chain(ds4, spec, ModelPrior(), SamplerConfig(20_000, 2_000, seed=5))
        assert total_variation(model_frequencies(tr), _exact(ds4, spec)) < 0.04

    def test_gibbs_robust(self, ds4):
        spec = PriorSpec("Robust")
        tr = run_chain(ds4, spec, ModelPrior(), SamplerConfig(20_000, 2_000, seed=6, algorithm="GibbsVS"))
        assert total_variation(model_frequencies(tr), _exact(ds4, spec)) < 0.04


def test_mc3_given_g_respects_support(ds4):
    # intrinsic: the support bound n/(k1+1) moves with the model
    cfg = SamplerConfig(3000, 0, seed=2, algorithm="MC3_given_g")
    tr = run_chain(ds4, PriorSpec("Intrinsic"), ModelPrior(), cfg)
    k1 = tr.gamma.sum(axis=1) + 1
    assert np.all(tr.g >= ds4.n / (k1 + 1))


def test_pseudoprior_scale_does_not_change_target(ds4):
    spec = PriorSpec("PEP")
    exact = _exact(ds4, spec)
    for scale in (0.3, 4.0):
        cfg = SamplerConfig(20_000, 2_000, seed=7, algorithm="GibbsVS", pseudoprior_scale=scale)
        tr = run_chain(ds4, spec, ModelPrior(), cfg)
        assert total_variation(model_frequencies(tr), exact) < 0.04


def test_conditional_gvs_mode(ds4):
    spec = PriorSpec("PEP")
    cfg = SamplerConfig(20_000, 2_000, seed=8, algorithm="GibbsVS", gvs_mode="conditional")
    tr = run_chain(ds4, spec, ModelPrior(), cfg)
    assert total_variation(model_frequencies(tr), _exact(ds4, spec)) < 0.05


def test_gibbs_g_draws_match_moments(ds4):
    m = ModelId.from_indices([0, 2], 4)
    spec = PriorSpec("PEP")
    cfg = SamplerConfig(40_000, 2_000, seed=10, algorithm="GibbsVS", fix_model=True, start=m)
    tr = run_chain(ds4, spec, ModelPrior(), cfg)
    st = ols_stats(ds4, m)
    w = tr.g / (1 + tr.g)
    assert abs(w.mean() - posterior_w_moments(st, spec, 1)) < 4 * batch_means_se(w)
    assert abs(tr.g.mean() - posterior_g_moments(st, spec, 1)) < 4 * batch_means_se(tr.g)


def test_fixed_gibbs_short_run(ds4):
    m = ModelId.from_indices([0, 1, 2, 3], 4)
    spec = PriorSpec("PEP")
    d = run_fixed_gibbs(ds4, m, spec, 20_000, 1_000, seed=3)
    st = ols_stats(ds4, m)
    assert abs(d.w.mean() - posterior_w_moments(st, spec, 1)) < 4 * batch_means_se(d.w)
    p = run_fixed_gibbs(ds4, m, spec, 20_000, 1_000, seed=3, printed=True)
    assert abs(p.w.mean() - posterior_w_moments(st, spec, 1)) > 4 * batch_means_se(p.w)


class TestTraceIo:
    def _trace(self, ds4, algorithm="GibbsVS"):
        return run_chain(ds4, PriorSpec("PEP"), ModelPrior(), SamplerConfig(400, 100, seed=2, algorithm=algorithm))

    def test_binary_round_trip(self, ds4, tmp_path):
        tr = self._trace(ds4)
        f = tmp_path / "t.bin"
        write_trace_binary(tr, f)
        back = read_trace_binary(f)
        np.testing.assert_array_equal(back.masks, tr.masks)
        np.testing.assert_array_equal(back.iteration, tr.iteration)
        np.testing.assert_array_equal(back.g, tr.g)
        np.testing.assert_array_equal(back.sigma2, tr.sigma2)
        np.testing.assert_array_equal(back.beta, tr.beta)

    def test_binary_rejects_garbage(self, tmp_path):
        f = tmp_path / "x.bin"
        f.write_bytes(b"nope" * 10)
        with pytest.raises(ValueError):
            read_trace_binary(f)

    def test_csv(self, ds4, tmp_path):
        tr = self._trace(ds4, "MC3")
        f = tmp_path / "t.csv"
        write_trace_csv(tr, f)
        lines = f.read_text().splitlines()
        assert lines[0] == "iteration,gamma,sigma2,g,log_evidence"
        assert len(lines) == 301
        it, gam, *_ = lines[1].split(",")
        assert int(it) == 101 and len(gam) == 4

    def test_merge_and_summaries(self, ds4):
        cfg = SamplerConfig(500, 100, seed=2)
        traces = run_chains(ds4, PriorSpec("PEP"), ModelPrior(), cfg, n_chains=3)
        merged = merge_traces(traces)
        assert len(merged) == 1200
        assert merged.counters["proposed"] == 3 * 500 * 4
        s = trace_summaries(merged)
        assert s.dim_posterior.sum() == pytest.approx(1.0)
        assert sum(s.visit_counts.values()) == 1200


def test_batch_means_iid():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert batch_means_se(x) == pytest.approx(1 / math.sqrt(100_000), rel=0.25)


def test_total_variation():
    assert total_variation({1: 0.5, 2: 0.5}, {2: 0.5, 3: 0.5}) == pytest.approx(0.5)
    assert total_variation({1: 1.0}, {1: 1.0}) == 0.0
