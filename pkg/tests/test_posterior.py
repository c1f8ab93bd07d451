import math

import numpy as np
import pytest
from scipy import integrate, stats

from pepselect.data import ModelId, OlsStats
from pepselect.evidence import log_evidence, log_ml_given_g
from pepselect.posterior import (ChParams, GPosteriorSampler, LogGridSampler, MomentError,
                                 ch_log_density, collapsed_sigma2, cond_beta_0, cond_beta_e,
                                 cond_beta_joint, cond_sigma2, cond_u_ch,
                                 log_marginal_posterior_g, marginal_posterior_g, model_context,
                                 posterior_expectation, posterior_g_moments, posterior_g_summary,
                                 posterior_g_tail_slope, posterior_w_density, posterior_w_mean,
                                 posterior_w_mean_batch, posterior_w_moments, sample_ch)
from pepselect.priors import PriorError, PriorSpec, log_prior_g_fn
from pepselect.specfun import integrate_log

from conftest import make_dataset


def stats_of(n, k0, k1, r10):
    return OlsStats(None, math.nan, math.nan, r10, n, k0, k1)


@pytest.fixture
def ctx():
    ds = make_dataset(n=30, p=4, seed=21)
    return model_context(ds, ModelId.from_indices([0, 2, 3], 4))


class TestConditionals:
    def test_beta_e_brute_force(self, ctx):
        b0 = np.array([0.7])
        s2, g = 1.3, 12.0
        prec = ctx.xtxe / s2 + ctx.ve_inv / (g * s2)
        mean = np.linalg.solve(prec, ctx.Xe.T @ (ctx.y - ctx.X0 @ b0) / s2)
        c = cond_beta_e(ctx, b0, s2, g)
        np.testing.assert_allclose(c.mean, mean, rtol=1e-10)
        np.testing.assert_allclose(c.cov, np.linalg.inv(prec), rtol=1e-10)
        assert c.shrink_w == pytest.approx(g / (1 + g))

    def test_beta_e_limits(self, ctx):
        b0 = ctx.beta0_hat
        big = cond_beta_e(ctx, b0, 1.0, 1e12)
        np.testing.assert_allclose(big.mean, ctx.betae_hat - ctx.xe_on_0 @ b0, rtol=1e-8)
        np.testing.assert_allclose(big.cov, np.linalg.inv(ctx.xtxe), rtol=1e-8)
        small = cond_beta_e(ctx, b0, 1.0, 1e-12)
        assert np.abs(small.mean).max() < 1e-9

    def test_beta_0(self, ctx):
        be = np.array([0.3, -0.2, 0.1])
        mean, cov = cond_beta_0(ctx, be, 2.0)
        want = np.linalg.lstsq(ctx.X0, ctx.y - ctx.Xe @ be, rcond=None)[0]
        np.testing.assert_allclose(mean, want, rtol=1e-10)
        np.testing.assert_allclose(cov, 2.0 / ctx.n, rtol=1e-12)

    def test_joint_conditions_to_beta_e(self, ctx):
        s2, g = 0.8, 5.0
        mu, S = cond_beta_joint(ctx, s2, g)
        b0 = np.array([1.1])
        k0 = ctx.k0
        S00, S0e, See = S[:k0, :k0], S[:k0, k0:], S[k0:, k0:]
        cm = mu[k0:] + S0e.T @ np.linalg.solve(S00, b0 - mu[:k0])
        cc = See - S0e.T @ np.linalg.solve(S00, S0e)
        c = cond_beta_e(ctx, b0, s2, g)
        np.testing.assert_allclose(c.mean, cm, rtol=1e-9)
        np.testing.assert_allclose(c.cov, cc, rtol=1e-9)

    def test_sigma2_rate(self, ctx):
        b0, be, g = np.array([0.9]), np.array([0.5, 0.0, -0.3]), 7.0
        shape, rate = cond_sigma2(ctx, b0, be, g)
        r = ctx.y - ctx.X0 @ b0 - ctx.Xe @ be
        assert shape == pytest.approx((ctx.n + 3) / 2)
        assert rate == pytest.approx(0.5 * (r @ r + be @ ctx.ve_inv @ be / g), rel=1e-12)
        _, rate_p = cond_sigma2(ctx, b0, be, g, printed=True)
        assert rate_p != pytest.approx(rate)

    def test_collapsed_sigma2(self, ctx):
        s = ctx.stats
        g = 4.0
        shape, rate = collapsed_sigma2(s, g)
        assert shape == pytest.approx((s.n - 1) / 2)
        assert 2 * rate == pytest.approx(s.rss0 - g / (1 + g) * (s.rss0 - s.rss), rel=1e-12)

    def test_ch_parameters(self, ctx):
        spec = PriorSpec("PEP")
        be = np.array([0.5, 0.0, -0.3])
        ch = cond_u_ch(ctx, be, 1.5, spec)
        a, b = (30 - 4) / 2, (30 - 4) / 2
        assert (ch.p, ch.q, ch.delta) == pytest.approx((b, a + 1.5, 30.0))
        assert ch.s == pytest.approx(-(be @ ctx.ve_inv @ be) / (2 * 30 * 1.5))
        assert cond_u_ch(ctx, be, 1.5, spec, printed=True).q == pytest.approx(ch.q + 2)
        with pytest.raises(PriorError):
            cond_u_ch(ctx, be, 1.5, PriorSpec("HyperG"))


class TestCh:
    @pytest.mark.parametrize("s", [-40.0, -1.0, 0.0, 3.0])
    def test_normalised(self, s):
        P = ChParams(2.5, 4.0, s)
        total = integrate.quad(lambda u: math.exp(ch_log_density(P, u)), 0, 1, epsabs=1e-13)[0]
        assert total == pytest.approx(1.0, rel=1e-9)

    def test_zero_tilt_is_beta(self):
        P = ChParams(2.5, 4.0, 0.0)
        u = np.linspace(0.05, 0.95, 7)
        np.testing.assert_allclose(ch_log_density(P, u), stats.beta(2.5, 4.0).logpdf(u), rtol=1e-10)

    def test_sampler(self):
        P = ChParams(3.0, 20.0, -30.0)
        draws = sample_ch(P, np.random.default_rng(5), 20_000)
        u = np.linspace(0, 1, 200_001)
        cum = integrate.cumulative_trapezoid(np.exp(ch_log_density(P, u)), u, initial=0.0)
        assert cum[-1] == pytest.approx(1.0, rel=1e-6)
        assert stats.kstest(draws, lambda x: np.interp(x, u, cum)).pvalue > 1e-3


class TestLogGridSampler:
    def test_normal(self):
        smp = LogGridSampler(lambda z: -0.5 * (z - 40.0) ** 2, hint=0.0)
        assert smp.log_norm == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-5)
        d = smp.sample(np.random.default_rng(0), 20_000)
        assert stats.kstest(d - 40.0, "norm").pvalue > 1e-3

    def test_exponential_tail_exact(self):
        # logistic density: exponential tails on both sides, total mass 1
        # the log-linear cells carry an O(h^2) error at the curved peak
        smp = LogGridSampler(lambda z: z - 2 * np.logaddexp(0.0, z), hint=5.0)
        assert smp.log_norm == pytest.approx(0.0, abs=1e-4)


GRID_SPECS = [PriorSpec("PEP"), PriorSpec("Intrinsic"), PriorSpec("EPP"), PriorSpec("HyperG"),
              PriorSpec("Robust")]


class TestMarginalPosteriorG:
    @pytest.mark.parametrize("spec", GRID_SPECS, ids=lambda s: s.family)
    def test_normalised(self, spec):
        st = stats_of(40, 1, 4, 0.4)
        s = GPosteriorSampler(st, spec).s
        f = lambda v: float(log_marginal_posterior_g(st, spec, s + v))  # noqa: E731
        assert integrate_log(f, 0.0, math.inf).value == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("g", [31.0, 100.0, 3000.0])
    def test_bayes_rule(self, g):
        st, spec = stats_of(30, 1, 3, 0.5), PriorSpec("PEP")
        post = marginal_posterior_g(st, spec, g).log_magnitude
        lp = log_prior_g_fn(spec, 1, 3, 30, 4)(g)
        bf = log_evidence(st, spec).log_bf_vs_ref
        assert post + bf == pytest.approx(lp + log_ml_given_g(st, g), rel=1e-10)

    def test_zero_below_support(self):
        st, spec = stats_of(30, 1, 3, 0.5), PriorSpec("PEP")
        assert marginal_posterior_g(st, spec, 29.0).sign == 0
        with pytest.raises(PriorError):
            log_marginal_posterior_g(st, PriorSpec("FixedG"), 1.0)


class TestMoments:
    @pytest.mark.parametrize("spec", [PriorSpec("PEP"), PriorSpec("Intrinsic"),
                                      PriorSpec("PEP", d0=1, d1=2, n_star=20, delta=4.0)],
                             ids=["pep", "intrinsic", "pep-d"])
    @pytest.mark.parametrize("k1,r10", [(2, 0.9), (5, 0.3), (8, 0.6)])
    def test_against_quadrature(self, spec, k1, r10):
        st = stats_of(40, 1, k1, r10)
        for kappa in (1, 2):
            w_q = posterior_expectation(st, spec, lambda g: kappa * (math.log(g) - math.log1p(g)))
            assert posterior_w_moments(st, spec, kappa) == pytest.approx(w_q, rel=1e-7)
            try:
                g_c = posterior_g_moments(st, spec, kappa)
            except MomentError:
                continue
            g_q = posterior_expectation(st, spec, lambda g: kappa * math.log(g))
            assert g_c == pytest.approx(g_q, rel=1e-6)

    def test_infinite_moment(self):
        # intrinsic: a = 1/2, so E(g^2) needs ke/2 > 3/2
        with pytest.raises(MomentError):
            posterior_g_moments(stats_of(40, 1, 3, 0.5), PriorSpec("Intrinsic"), 2)

    def test_summary_marks_missing_variance(self):
        s = posterior_g_summary(stats_of(40, 1, 3, 0.5), PriorSpec("Intrinsic"))
        assert math.isnan(s.var_g) and math.isfinite(s.mean_g)
        assert s.moment_exists_up_to == 1

    def test_batch_matches_scalar(self):
        spec = PriorSpec("PEP")
        k1, r10 = np.array([1, 2, 4, 7]), np.array([1.0, 0.7, 0.3, 0.2])
        got = posterior_w_mean_batch(50, 1, k1, r10, spec)
        for i in range(4):
            assert got[i] == pytest.approx(posterior_w_mean(stats_of(50, 1, int(k1[i]), r10[i]), spec),
                                           rel=1e-12)

    def test_w_support(self):
        st, spec = stats_of(30, 1, 3, 0.5), PriorSpec("PEP")
        lo = 30 / 31
        assert posterior_w_density(st, spec, lo - 1e-6).sign == 0
        assert posterior_w_density(st, spec, lo + 1e-3).sign == 1
        assert posterior_w_density(st, spec, 1.0).sign == 0

    def test_w_mean_above_prior_lower_bound(self):
        st = stats_of(30, 1, 3, 0.2)
        assert 30 / 31 < posterior_w_mean(st, PriorSpec("PEP")) < 1

    def test_sampler_mean(self):
        st, spec = stats_of(40, 1, 6, 0.3), PriorSpec("PEP")
        g = GPosteriorSampler(st, spec).sample(np.random.default_rng(8), 40_000)
        w = g / (1 + g)
        assert w.mean() == pytest.approx(posterior_w_mean(st, spec), abs=4 * w.std() / 200)
        assert g.mean() == pytest.approx(posterior_g_moments(st, spec, 1), abs=4 * g.std() / 200)

    def test_tail_slopes(self):
        st = stats_of(40, 1, 4, 0.4)
        # hyper-g: prior tail g^-(a_h/2) times likelihood tail g^(-ke/2)
        assert posterior_g_tail_slope(st, PriorSpec("HyperG")) == pytest.approx(-1.5 - 1.5, abs=1e-3)
        assert posterior_g_tail_slope(st, PriorSpec("Benchmark"), 8) == pytest.approx(-1.01 - 1.5, abs=1e-3)


def test_fixed_g_posterior_expectation():
    st = stats_of(30, 1, 3, 0.5)
    assert posterior_expectation(st, PriorSpec("FixedG", g_fixed=9.0), math.log) == pytest.approx(9.0)
