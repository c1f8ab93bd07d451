"""Bayesian model averaging: point predictions, R^2 and RMSE series, and
cross-validated log predictive scores."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import INTERCEPT_ONLY, Dataset, OlsStats, Reference
from .evidence import log_reference_marginal
from .modelspace import EnumerationError, ModelPrior, PosteriorTable, enumerate_models
from .posterior import GPosteriorSampler, posterior_w_mean, posterior_w_mean_batch
from .priors import PriorSpec, fixed_g
from .samplers import ChainTrace, SamplerConfig, batch_means_se, run_gibbs_vs
from .specfun import DEFAULT_QUAD, QuadratureSpec

CENTRE_TOL = 1e-8


class BmaError(ValueError):
    """Inputs unsuitable for the requested averaging."""


# ---------------------------------------------------------------------------
# predictions


def _check_centred(ds: Dataset):
    scale = np.maximum(np.abs(ds.X).max(axis=0), 1.0)
    if not np.all(np.abs(ds.X.mean(axis=0)) <= CENTRE_TOL * scale):
        raise BmaError("closed-form averaging needs centred covariates; use data.centre()")


def model_shrinkage(table: PosteriorTable, ds: Dataset, spec: PriorSpec,
                    quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """E(w | y, M) for every row of the table."""
    q = ds.p - len(table.reference_columns)
    k0 = 1 + len(table.reference_columns)
    if spec.pep_shaped:
        return posterior_w_mean_batch(ds.n, k0, table.k1, table.r10, spec, quad)
    if spec.family == "FixedG":
        g = fixed_g(spec, ds.n)
        return np.full(len(table), g / (1.0 + g))
    out = np.empty(len(table))
    for i in range(len(table)):
        st = OlsStats(None, math.nan, math.nan, float(table.r10[i]), ds.n, k0, int(table.k1[i]))
        out[i] = posterior_w_mean(st, spec, q, quad) if table.k1[i] > k0 else 0.0
    return out


def bma_predict_closed(table: PosteriorTable, ds: Dataset, spec: PriorSpec, X_new,
                       shrinkage: float | None = None,
                       quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Model-averaged point prediction with closed-form shrinkage.

    y_hat = ybar + sum_l pi(M_l | y) E(w | y, M_l) X_new[:, M_l] beta_hat_l,
    where beta_hat_l is the least-squares fit on centred covariates. ``X_new``
    must be centred with the training means. ``shrinkage`` overrides every
    E(w | y, M_l) (e.g. 1 to switch shrinkage off).

    Raises
    ------
    BmaError
        Non-centred training covariates, a non-intercept reference model, or
        a column mismatch.
    """
    if table.reference_columns:
        raise BmaError("closed-form averaging assumes an intercept-only reference model")
    _check_centred(ds)
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != ds.p:
        raise BmaError(f"X_new has {X_new.shape[1]} columns, expected {ds.p}")
    ew = (np.full(len(table), float(shrinkage)) if shrinkage is not None
          else model_shrinkage(table, ds, spec, quad))
    G = ds.X.T @ ds.X
    c = ds.X.T @ (ds.y - ds.y.mean())
    coef = np.zeros(ds.p)
    for i in range(len(table)):
        if table.prob[i] == 0 or table.masks[i] == 0:
            continue
        idx = list(table.model(i).included)
        b = np.linalg.solve(G[np.ix_(idx, idx)], c[idx])
        coef[idx] += table.prob[i] * ew[i] * b
    return ds.y.mean() + X_new @ coef


def _masked_beta(trace: ChainTrace):
    if trace.beta is None:
        raise BmaError(f"{trace.algorithm or 'this'} trace carries no coefficient draws")
    gam = trace.gamma.astype(float)
    return trace.beta[:, :trace.k0], trace.beta[:, trace.k0:] * gam


def _x0(reference: Reference, X):
    return np.column_stack([np.ones(X.shape[0])] + [X[:, j] for j in reference.columns])


def prediction_series(trace: ChainTrace, X_new, reference: Reference = INTERCEPT_ONLY) -> np.ndarray:
    """(rows, m) linear predictions X1_new beta^(t) under the visited models."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != trace.p:
        raise BmaError(f"X_new has {X_new.shape[1]} columns, expected {trace.p}")
    b0, be = _masked_beta(trace)
    return b0 @ _x0(reference, X_new).T + be @ X_new.T


def bma_predict_mcmc(trace: ChainTrace, ds: Dataset, X_new,
                     reference: Reference = INTERCEPT_ONLY) -> np.ndarray:
    """Average over kept iterations of the linear predictor of the visited model.

    ``X_new`` must be on the same footing as ``ds.X`` (centred with the
    training means when ``ds`` is centred).
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != ds.p:
        raise BmaError(f"X_new has {X_new.shape[1]} columns, expected {ds.p}")
    b0, be = _masked_beta(trace)
    return _x0(reference, X_new) @ b0.mean(axis=0) + X_new @ be.mean(axis=0)


# ---------------------------------------------------------------------------
# fit summaries


@dataclass(eq=False)
class SeriesResult:
    series: np.ndarray
    mean: float


def bma_r2(trace: ChainTrace, ds: Dataset) -> SeriesResult:
    """R^2(t) = 1 - sigma2(t) / S_y^2 with S_y^2 the unbiased sample variance."""
    if not np.all(np.isfinite(trace.sigma2)):
        raise BmaError("trace carries no sigma2 draws")
    sy2 = float(np.var(ds.y, ddof=1))
    s = 1.0 - trace.sigma2 / sy2
    return SeriesResult(s, float(s.mean()))


def bma_rmse(trace: ChainTrace, ds: Dataset, rng: np.random.Generator,
             reference: Reference = INTERCEPT_ONLY, chunk: int = 4096) -> SeriesResult:
    """Root mean squared error of replicated responses drawn from the predictive.

    For each kept iteration y_rep ~ N(X1 beta^(t), sigma2^(t)) and
    RMSE(t) = sqrt(mean_i (y_i - y_rep_i)^2).
    """
    if not np.all(np.isfinite(trace.sigma2)):
        raise BmaError("trace carries no sigma2 draws")
    b0, be = _masked_beta(trace)
    X0 = _x0(reference, ds.X)
    out = np.empty(len(trace))
    for lo in range(0, len(trace), chunk):
        hi = min(lo + chunk, len(trace))
        mu = b0[lo:hi] @ X0.T + be[lo:hi] @ ds.X.T
        yrep = mu + np.sqrt(trace.sigma2[lo:hi])[:, None] * rng.standard_normal(mu.shape)
        out[lo:hi] = np.sqrt(np.mean((ds.y[None, :] - yrep) ** 2, axis=1))
    return SeriesResult(out, float(out.mean()))


# ---------------------------------------------------------------------------
# cross-validated log predictive score


@dataclass(frozen=True)
class CvConfig:
    folds: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least two folds")

    def assign(self, n: int) -> list[np.ndarray]:
        """Seeded permutation of 0..n-1 cut into near-equal contiguous blocks."""
        if self.folds > n:
            raise ValueError(f"{self.folds} folds for {n} observations leaves empty folds")
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        perm = rng.permutation(n)
        return [np.sort(b) for b in np.array_split(perm, self.folds)]


@dataclass(eq=False)
class LpsResult:
    scores: np.ndarray
    mean: float
    sd: float
    folds: list
    mc_se: np.ndarray
    failed: tuple[int, ...] = ()


def _subset(ds: Dataset, idx, shift) -> Dataset:
    return Dataset(ds.y[idx], ds.X[idx] - shift, ds.names, False, (), ds.response_name)


def _pin(spec: PriorSpec, n_train: int) -> PriorSpec:
    return spec if spec.n_ref is not None else spec.with_(n_ref=n_train)


def _lps_fold_enum(ds, train, test, spec, prior, reference, quad):
    shift = ds.X[train].mean(axis=0)
    dtr = _subset(ds, train, shift)
    sp = _pin(spec, len(train))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tab = enumerate_models(dtr, sp, prior, reference, quad=quad)
    X0tr = np.column_stack([np.ones(len(train))] + [dtr.X[:, j] for j in reference.columns])
    lm0 = log_reference_marginal(dtr.y, X0tr, sp.d0)
    ev_tr = dict(zip(tab.masks.tolist(), tab.log_evidence))
    lpi = dict(zip(tab.masks.tolist(), np.log(tab.prob)))
    scores = []
    for i in test:
        rows = np.append(train, i)
        daug = _subset(ds, rows, shift)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ta = enumerate_models(daug, sp, prior, reference, quad=quad)
        X0a = np.column_stack([np.ones(rows.size)] + [daug.X[:, j] for j in reference.columns])
        lma = log_reference_marginal(daug.y, X0a, sp.d0)
        terms = [lpi[m] + e + lma - ev_tr[m] - lm0
                 for m, e in zip(ta.masks.tolist(), ta.log_evidence) if m in ev_tr]
        scores.append(float(special.logsumexp(terms)))
    return -float(np.mean(scores)), math.nan


def _lps_fold_exact(ds, train, test, spec, prior, reference, quad):
    """Held-out densities integrated against the training posterior of each model.

    With centred training covariates and an intercept-only reference, the
    predictive given g is Student-t with nu = n - 1 + d0 degrees of freedom,
    location ybar + w x'beta_hat and scale^2 = S(w)/nu (1 + 1/n + w x'(X'X)^-1 x),
    where S(w) = RSS0 (1 - w (1 - R10)). The g-integral uses Simpson's rule on
    the sampler grid of log(g - s).
    """
    if reference.columns:
        raise BmaError("the exact predictive needs an intercept-only reference model")
    shift = ds.X[train].mean(axis=0)
    dtr = _subset(ds, train, shift)
    sp = _pin(spec, len(train))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tab = enumerate_models(dtr, sp, prior, reference, quad=quad)
    n = len(train)
    nu = n - 1 + sp.d0
    yt = ds.y[test]
    Xte = ds.X[test] - shift
    ybar = dtr.y.mean()
    rss0 = float(((dtr.y - ybar) ** 2).sum())
    G = dtr.X.T @ dtr.X
    c = dtr.X.T @ (dtr.y - ybar)
    dens = np.zeros(len(test))
    for r in range(len(tab)):
        if tab.prob[r] < 1e-14:
            continue
        idx = list(tab.model(r).included)
        if not idx:
            sc = np.sqrt(rss0 / nu * (1 + 1.0 / n))
            dens += tab.prob[r] * _t_pdf(yt, nu, ybar, sc)
            continue
        st = OlsStats(None, math.nan, math.nan, float(tab.r10[r]), n, 1, int(tab.k1[r]))
        Gi = G[np.ix_(idx, idx)]
        bh = np.linalg.solve(Gi, c[idx])
        xb = Xte[:, idx] @ bh
        h = np.einsum("ij,ij->i", Xte[:, idx], np.linalg.solve(Gi, Xte[:, idx].T).T)
        if sp.family == "FixedG":
            gg = np.array([fixed_g(sp, n)])
            wts = np.ones(1)
        else:
            smp = GPosteriorSampler(st, sp, ds.p)
            gg = smp.s + np.exp(smp.grid.z)
            wts = _simpson_weights(gg.size) * np.exp(smp.grid.lz - smp.grid.lz.max())
            wts = wts / wts.sum()
        w = gg / (1.0 + gg)
        S = rss0 * (1.0 - w * (1.0 - float(tab.r10[r])))
        loc = ybar + w[:, None] * xb[None, :]
        sc = np.sqrt(S[:, None] / nu * (1.0 + 1.0 / n + w[:, None] * h[None, :]))
        dens += tab.prob[r] * (wts @ _t_pdf(yt[None, :], nu, loc, sc))
    return -float(np.mean(np.log(dens))), math.nan


def _t_pdf(x, nu, loc, scale):
    z = (x - loc) / scale
    lc = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    return np.exp(lc - 0.5 * (nu + 1) * np.log1p(z * z / nu)) / scale


def _simpson_weights(m: int) -> np.ndarray:
    if m % 2 == 0:
        # composite Simpson needs an odd node count; fold the last interval into a trapezoid
        w = np.zeros(m)
        w[:m - 1] = _simpson_weights(m - 1)
        w[m - 2] += 0.5
        w[m - 1] += 0.5
        return w
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _lps_fold_gibbs(ds, train, test, spec, prior, reference, quad, cfg):
    shift = ds.X[train].mean(axis=0)
    dtr = _subset(ds, train, shift)
    sp = _pin(spec, len(train))
    cfg = cfg if cfg.algorithm == "GibbsVS" else SamplerConfig(
        cfg.iterations, cfg.burnin, cfg.seed, "GibbsVS", cfg.thin)
    tr = run_gibbs_vs(dtr, sp, prior, cfg, reference, quad)
    Xte = ds.X[test] - shift
    mu = prediction_series(tr, Xte, reference)
    s2 = tr.sigma2[:, None]
    F = np.exp(-0.5 * (ds.y[test][None, :] - mu) ** 2 / s2) / np.sqrt(2 * math.pi * s2)
    fbar = F.mean(axis=0)
    score = -float(np.mean(np.log(fbar)))
    lin = -(F / fbar).mean(axis=1)
    try:
        se = batch_means_se(lin)
    except ValueError:
        se = math.nan
    return score, se


def bma_lps(ds: Dataset, spec: PriorSpec, prior: ModelPrior, cv: CvConfig,
            engine: str = "enumeration", sampler: SamplerConfig | None = None,
            predictive: str = "ratio",
            reference: Reference = INTERCEPT_ONLY, threads: int = 1,
            quad: QuadratureSpec = DEFAULT_QUAD) -> LpsResult:
    """Cross-validated BMA log predictive score, -(1/n_V) sum_i log f(y_i | y_train).

    The enumeration engine with ``predictive="ratio"`` evaluates each
    held-out density as the ratio of marginal likelihoods with and without
    the held-out point (n-dependent hyper-parameters pinned at the training
    size), averaged over the training posterior model probabilities. Because
    the prior scale of beta_e depends on the design, adding a row also moves
    the prior, so this ratio is not exactly the training-posterior predictive;
    ``predictive="exact"`` integrates the conditional Student-t predictive
    against the training posterior of g instead. The gibbs engine averages
    the normal density over GibbsVS draws fitted to the training fold and
    also reports a batch-means standard error per fold.
    """
    if engine not in ("enumeration", "gibbs"):
        raise ValueError("engine must be 'enumeration' or 'gibbs'")
    if predictive not in ("ratio", "exact"):
        raise ValueError("predictive must be 'ratio' or 'exact'")
    folds = cv.assign(ds.n)
    allidx = np.arange(ds.n)
    cfg = sampler or SamplerConfig(20_000, 2_000, cv.seed, "GibbsVS")

    def one(k):
        test = folds[k]
        train = np.setdiff1d(allidx, test)
        try:
            if engine == "enumeration" and predictive == "exact":
                return _lps_fold_exact(ds, train, test, spec, prior, reference, quad)
            if engine == "enumeration":
                return _lps_fold_enum(ds, train, test, spec, prior, reference, quad)
            return _lps_fold_gibbs(ds, train, test, spec, prior, reference, quad, cfg)
        except (EnumerationError, np.linalg.LinAlgError, ValueError) as exc:
            warnings.warn(f"fold {k} failed: {exc}", stacklevel=2)
            return math.nan, math.nan

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(one, range(len(folds))))
    else:
        res = [one(k) for k in range(len(folds))]
    scores = np.array([r[0] for r in res])
    se = np.array([r[1] for r in res])
    ok = np.isfinite(scores)
    failed = tuple(int(k) for k in np.nonzero(~ok)[0])
    good = scores[ok]
    mean = float(good.mean()) if good.size else math.nan
    sd = float(good.std(ddof=1)) if good.size > 1 else math.nan
    return LpsResult(scores, mean, sd, folds, se, failed)
