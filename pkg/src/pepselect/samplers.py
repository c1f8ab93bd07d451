"""Model-search MCMC: MC3 on marginal likelihoods, MC3 conditional on g, and
Gibbs variable selection with pseudopriors, plus a fixed-model Gibbs sampler.

All chains draw from ``numpy.random.Generator(Philox(key=seed))`` and are
sequential, so a (seed, config, data) triple reproduces a trace exactly.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from .data import (INTERCEPT_ONLY, Dataset, ModelId, OlsStats, RankDeficientError, Reference,
                   format_float, ols_stats)
from .evidence import EvidenceError, log_evidence, log_ml_given_g
from .modelspace import ModelPrior, log_model_prior_sizes
from .posterior import (GPosteriorSampler, LogGridSampler, collapsed_sigma2, cond_beta_joint,
                        cond_sigma2, cond_u_ch, model_context, sample_g_ch)
from .priors import PriorError, PriorSpec, fixed_g, log_prior_g_fn, support_lower
from .specfun import DEFAULT_QUAD, QuadratureSpec

ALGORITHMS = ("MC3", "MC3_given_g", "GibbsVS")
TRACE_MAGIC = b"PEPT1"


class SamplerError(RuntimeError):
    """A chain could not continue."""


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings.

    ``scan`` is "systematic" (covariates in order) or "random" (a fresh
    permutation each iteration). ``fix_model`` disables the BVS moves so the
    chain samples the parameters of the starting model only. ``gvs_mode``
    selects the within-model block of GibbsVS: "collapsed" draws g from its
    marginal, then sigma2 given g, then beta; "conditional" cycles the full
    conditionals (beta | sigma2, g), (sigma2 | beta, g), (g | beta, sigma2).
    """

    iterations: int = 100_000
    burnin: int = 10_000
    seed: int = 0
    algorithm: str = "MC3"
    thin: int = 1
    scan: str = "systematic"
    fix_model: bool = False
    start: ModelId | None = None
    gvs_mode: str = "collapsed"
    pseudoprior_scale: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not self.iterations > self.burnin >= 0:
            raise ValueError("need iterations > burnin >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.scan not in ("systematic", "random"):
            raise ValueError("scan must be 'systematic' or 'random'")
        if self.gvs_mode not in ("collapsed", "conditional"):
            raise ValueError("gvs_mode must be 'collapsed' or 'conditional'")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.pseudoprior_scale > 0:
            raise ValueError("pseudoprior_scale must be positive")

    @property
    def n_keep(self) -> int:
        return (self.iterations - self.burnin) // self.thin


@dataclass
class ChainState:
    gamma: ModelId
    beta: np.ndarray | None = None
    sigma2: float = math.nan
    g: float = math.nan


@dataclass(eq=False)
class ChainTrace:
    """Kept iterations of one chain.

    ``beta`` has one row per kept iteration holding the k0 reference
    coefficients followed by all p covariate slots (excluded slots carry the
    pseudoprior draw); it is None for chains that do not sample beta.
    """

    p: int
    k0: int
    iteration: np.ndarray
    masks: np.ndarray
    sigma2: np.ndarray
    g: np.ndarray
    log_evidence: np.ndarray
    beta: np.ndarray | None = None
    algorithm: str = ""
    counters: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.masks.size)

    @property
    def gamma(self) -> np.ndarray:
        """(rows, p) 0/1 matrix of inclusion indicators."""
        return ((self.masks[:, None] >> np.arange(self.p)) & 1).astype(np.int8)

    def model(self, i: int) -> ModelId:
        return ModelId(int(self.masks[i]), self.p)


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(stream) << 64)))


# ---------------------------------------------------------------------------
# BVS step


def bvs_step(state: ChainState, j: int, ratio_fn: Callable[[ChainState, ModelId], float],
             rng: np.random.Generator, counters: dict | None = None) -> ChainState:
    """Propose flipping covariate ``j`` and accept with probability min(1, A_j).

    ``ratio_fn(state, proposed)`` returns log A_j. A failing ratio skips the
    step and increments ``counters['skipped']``.
    """
    if not 0 <= j < state.gamma.p:
        raise IndexError(f"covariate index {j} out of range")
    prop = state.gamma.flip(j)
    c = counters if counters is not None else {}
    c["proposed"] = c.get("proposed", 0) + 1
    try:
        la = float(ratio_fn(state, prop))
    except (ArithmeticError, ValueError, EvidenceError, np.linalg.LinAlgError):
        c["skipped"] = c.get("skipped", 0) + 1
        return state
    if la >= 0 or math.log(rng.random()) < la:
        c["accepted"] = c.get("accepted", 0) + 1
        return replace(state, gamma=prop)
    return state


# ---------------------------------------------------------------------------
# per-model caches


class _Models:
    """Lazily computed per-model quantities shared by the samplers."""

    def __init__(self, ds: Dataset, spec: PriorSpec, prior: ModelPrior,
                 reference: Reference, quad: QuadratureSpec):
        self.ds, self.spec, self.prior, self.ref, self.quad = ds, spec, prior, reference, quad
        self.free = reference.free(ds.p)
        self.q = len(self.free)
        self.n = ds.n
        self.k0 = reference.k0
        self._stats: dict[int, OlsStats | None] = {}
        self._ev: dict[int, float] = {}
        self._gs: dict[int, GPosteriorSampler] = {}
        self._lpg: dict[int, Callable[[float], float]] = {}
        self._methods: dict[str, int] = {}
        self._lmp = log_model_prior_sizes(prior, np.arange(self.q + 1), self.q)

    def size(self, mask: int) -> int:
        return bin(mask).count("1")

    def log_model_prior(self, mask: int) -> float:
        return float(self._lmp[self.size(mask)])

    def stats(self, mask: int) -> OlsStats | None:
        if mask not in self._stats:
            try:
                st = ols_stats(self.ds, ModelId(mask, self.ds.p), self.ref)
            except RankDeficientError:
                st = None
            self._stats[mask] = st
        return self._stats[mask]

    def log_ev(self, mask: int) -> float:
        if mask not in self._ev:
            st = self.stats(mask)
            if st is None:
                self._ev[mask] = -math.inf
            else:
                try:
                    r = log_evidence(st, self.spec, self.quad, self.q)
                    self._ev[mask] = r.log_bf_vs_ref
                    self._methods[r.method] = self._methods.get(r.method, 0) + 1
                except (EvidenceError, PriorError):
                    self._ev[mask] = -math.inf
        return self._ev[mask]

    def log_prior_g(self, k1: int, g: float) -> float:
        if self.spec.family == "FixedG":
            return 0.0
        if k1 not in self._lpg:
            try:
                self._lpg[k1] = log_prior_g_fn(self.spec, self.k0, k1, self.n, self.q)
            except PriorError:
                self._lpg[k1] = lambda g: -math.inf
        return self._lpg[k1](g)

    def g_sampler(self, mask: int) -> GPosteriorSampler:
        if mask not in self._gs:
            st = self.stats(mask)
            if st is None:
                raise SamplerError(f"chain reached an invalid model {ModelId(mask, self.ds.p)}")
            self._gs[mask] = GPosteriorSampler(st, self.spec, self.q)
        return self._gs[mask]

    def g_start(self, mask: int) -> float:
        if self.spec.family == "FixedG":
            return fixed_g(self.spec, self.n)
        k1 = self.k0 + self.size(mask)
        g0 = float(self.n)
        if self.log_prior_g(k1, g0) == -math.inf:
            g0 = 1.5 * support_lower(self.spec, self.k0, k1, self.n, self.q)
        return g0


def _start_mask(cfg: SamplerConfig, models: _Models, p: int) -> int:
    if cfg.start is not None:
        if cfg.start.p != p:
            raise ValueError("start model has the wrong number of covariates")
        return cfg.start.mask
    return sum(1 << j for j in models.free)


def _scan(cfg: SamplerConfig, free, rng):
    if cfg.scan == "random":
        return [free[i] for i in rng.permutation(len(free))]
    return free


class _Recorder:
    def __init__(self, cfg: SamplerConfig, nbeta: int = 0):
        m = cfg.n_keep
        self.cfg = cfg
        self.it = np.zeros(m, dtype=np.int64)
        self.masks = np.zeros(m, dtype=np.int64)
        self.sigma2 = np.full(m, np.nan)
        self.g = np.full(m, np.nan)
        self.lev = np.full(m, np.nan)
        self.beta = np.zeros((m, nbeta)) if nbeta else None
        self.i = 0

    def keep(self, t: int) -> bool:
        return t > self.cfg.burnin and (t - self.cfg.burnin) % self.cfg.thin == 0

    def put(self, t, mask, lev, sigma2=math.nan, g=math.nan, beta=None):
        i = self.i
        self.it[i], self.masks[i], self.lev[i] = t, mask, lev
        self.sigma2[i], self.g[i] = sigma2, g
        if beta is not None:
            self.beta[i] = beta
        self.i += 1

    def trace(self, p, k0, algorithm, counters) -> ChainTrace:
        return ChainTrace(p, k0, self.it, self.masks, self.sigma2, self.g, self.lev, self.beta,
                          algorithm, dict(counters))


# ---------------------------------------------------------------------------
# MC3


def run_mc3(ds: Dataset, spec: PriorSpec, prior: ModelPrior, cfg: SamplerConfig,
            reference: Reference = INTERCEPT_ONLY, quad: QuadratureSpec = DEFAULT_QUAD,
            stream: int = 0) -> ChainTrace:
    """Metropolis search over models using marginal likelihoods (one flip per covariate)."""
    M = _Models(ds, spec, prior, reference, quad)
    rng = _rng(cfg.seed, stream)
    state = ChainState(ModelId(_start_mask(cfg, M, ds.p), ds.p))
    counters: dict = {"proposed": 0, "accepted": 0, "skipped": 0}

    def lpost(mask):
        return M.log_ev(mask) + M.log_model_prior(mask)

    def ratio(st, prop):
        a = lpost(prop.mask)
        b = lpost(st.gamma.mask)
        if a == -math.inf:
            return -math.inf
        return a - b

    rec = _Recorder(cfg)
    for t in range(1, cfg.iterations + 1):
        if not cfg.fix_model:
            for j in _scan(cfg, M.free, rng):
                state = bvs_step(state, j, ratio, rng, counters)
        if rec.keep(t):
            rec.put(t, state.gamma.mask, M.log_ev(state.gamma.mask))
    counters["evidence_methods"] = dict(M._methods)
    return rec.trace(ds.p, M.k0, "MC3", counters)


# ---------------------------------------------------------------------------
# MC3 conditional on g


def run_mc3_given_g(ds: Dataset, spec: PriorSpec, prior: ModelPrior, cfg: SamplerConfig,
                    reference: Reference = INTERCEPT_ONLY, quad: QuadratureSpec = DEFAULT_QUAD,
                    stream: int = 0) -> ChainTrace:
    """Alternate g ~ f(g | y, M) and flips accepted on f(y | g, M) pi_M(g) pi(M).

    Proposals whose hyper-prior puts zero density on the current g are
    rejected and counted in ``counters['support_rejections']``.
    """
    M = _Models(ds, spec, prior, reference, quad)
    rng = _rng(cfg.seed, stream)
    mask0 = _start_mask(cfg, M, ds.p)
    state = ChainState(ModelId(mask0, ds.p), g=M.g_start(mask0))
    counters: dict = {"proposed": 0, "accepted": 0, "skipped": 0, "support_rejections": 0}
    d0 = spec.d0

    def lcond(mask, g):
        st = M.stats(mask)
        if st is None or st.k1 >= M.n:
            return -math.inf
        lp = M.log_prior_g(st.k1, g)
        if lp == -math.inf:
            return -math.inf
        return log_ml_given_g(st, g, d0) + lp + M.log_model_prior(mask)

    def ratio(st, prop):
        a = lcond(prop.mask, st.g)
        if a == -math.inf:
            if M.stats(prop.mask) is not None:
                counters["support_rejections"] += 1
            return -math.inf
        return a - lcond(st.gamma.mask, st.g)

    rec = _Recorder(cfg)
    for t in range(1, cfg.iterations + 1):
        g = M.g_sampler(state.gamma.mask).sample(rng)
        state = replace(state, g=float(g))
        if not cfg.fix_model:
            for j in _scan(cfg, M.free, rng):
                state = bvs_step(state, j, ratio, rng, counters)
        if rec.keep(t):
            rec.put(t, state.gamma.mask, M.log_ev(state.gamma.mask), g=state.g)
    counters["evidence_methods"] = dict(M._methods)
    return rec.trace(ds.p, M.k0, "MC3_given_g", counters)


# ---------------------------------------------------------------------------
# Gibbs variable selection


class _GvsModel:
    """Matrices of one model for the GibbsVS within-model block."""

    def __init__(self, X1: np.ndarray, y: np.ndarray, Gproj: np.ndarray, k0: int):
        self.xtx = X1.T @ X1
        self.xty = X1.T @ y
        ke = X1.shape[1] - k0
        self.T = np.zeros_like(self.xtx)
        self.T[k0:, k0:] = Gproj
        self.ke = ke


def _pseudoprior(ds: Dataset, reference: Reference, free, scale: float):
    """Normal pseudoprior (mean, sd) per covariate from the full-model fit.

    Falls back to one-covariate fits when the full model is not estimable.
    """
    n = ds.n
    X0 = np.column_stack([np.ones(n)] + [ds.X[:, j] for j in reference.columns])
    mean = np.zeros(ds.p)
    sd = np.ones(ds.p)
    Xf = np.column_stack([X0, ds.X[:, list(free)]])
    k = Xf.shape[1]
    full_ok = k < n and np.linalg.matrix_rank(Xf) == k
    if full_ok:
        coef, *_ = np.linalg.lstsq(Xf, ds.y, rcond=None)
        r = ds.y - Xf @ coef
        s2 = float(r @ r) / (n - k)
        cov = np.linalg.inv(Xf.T @ Xf) * s2
        for i, j in enumerate(free):
            mean[j] = coef[X0.shape[1] + i]
            sd[j] = math.sqrt(cov[X0.shape[1] + i, X0.shape[1] + i])
    else:
        for j in free:
            Xj = np.column_stack([X0, ds.X[:, j]])
            coef, *_ = np.linalg.lstsq(Xj, ds.y, rcond=None)
            r = ds.y - Xj @ coef
            s2 = float(r @ r) / max(n - Xj.shape[1], 1)
            cov = np.linalg.inv(Xj.T @ Xj) * s2
            mean[j] = coef[-1]
            sd[j] = math.sqrt(cov[-1, -1])
    sd = np.where(sd > 0, sd, 1.0) * scale
    return mean, sd


def run_gibbs_vs(ds: Dataset, spec: PriorSpec, prior: ModelPrior, cfg: SamplerConfig,
                 reference: Reference = INTERCEPT_ONLY, quad: QuadratureSpec = DEFAULT_QUAD,
                 stream: int = 0) -> ChainTrace:
    """Gibbs variable selection over (gamma, beta, sigma2, g).

    The flip of covariate j keeps beta, sigma2 and g and is accepted on the
    ratio of likelihood, N(beta_e; 0, g sigma2 Ve), pi_M(g), pi(M) and the
    pseudoprior of the coefficient that enters or leaves. The starting point
    is the full model with all coefficients zero.

    Raises
    ------
    SamplerError
        If a within-model block fails twice in a row (the second attempt
        jitters sigma2 by a factor 1 + 1e-8).
    """
    M = _Models(ds, spec, prior, reference, quad)
    rng = _rng(cfg.seed, stream)
    n, p, k0 = ds.n, ds.p, M.k0
    y = np.asarray(ds.y, dtype=float)
    X0 = np.column_stack([np.ones(n)] + [ds.X[:, j] for j in reference.columns])
    Q0, _ = np.linalg.qr(X0)
    Xr = ds.X - Q0 @ (Q0.T @ ds.X)
    Gfull = Xr.T @ Xr
    pm, psd = _pseudoprior(ds, reference, M.free, cfg.pseudoprior_scale)
    log_psd = np.log(psd)
    half_log_2pi = 0.5 * math.log(2 * math.pi)
    fixedg = spec.family == "FixedG"
    use_ch = spec.pep_shaped and cfg.gvs_mode == "conditional"

    gvs_cache: dict[int, _GvsModel] = {}
    logdet_cache: dict[int, float] = {}
    ctx_cache: dict = {}

    def cols(mask):
        return [j for j in range(p) if (mask >> j) & 1]

    def gvs_model(mask):
        if mask not in gvs_cache:
            c = cols(mask)
            X1 = np.column_stack([X0, ds.X[:, c]]) if c else X0
            gvs_cache[mask] = _GvsModel(X1, y, Gfull[np.ix_(c, c)], k0)
        return gvs_cache[mask]

    def half_logdet(mask):
        if mask not in logdet_cache:
            c = cols(mask)
            if not c:
                logdet_cache[mask] = 0.0
            else:
                sgn, ld = np.linalg.slogdet(Gfull[np.ix_(c, c)])
                logdet_cache[mask] = 0.5 * ld if sgn > 0 and len(c) + k0 < n else -math.inf
        return logdet_cache[mask]

    def log_pseudo(j, b):
        z = (b - pm[j]) / psd[j]
        return -half_log_2pi - log_psd[j] - 0.5 * z * z

    mask = _start_mask(cfg, M, p)
    beta = np.zeros(k0 + p)
    sigma2 = float(np.var(y, ddof=1))
    g = M.g_start(mask)
    counters: dict = {"proposed": 0, "accepted": 0, "skipped": 0, "support_rejections": 0,
                      "jitter_retries": 0}

    def draw_block(mask, sigma2, g, beta, jitter):
        """Within-model update of (g, sigma2, beta_gamma) and the pseudoprior slots."""
        c = cols(mask)
        st = M.stats(mask)
        if st is None:
            raise SamplerError(f"chain reached an invalid model {ModelId(mask, p)}")
        mdl = gvs_model(mask)
        if cfg.gvs_mode == "collapsed":
            g = float(M.g_sampler(mask).sample(rng))
            shape, rate = collapsed_sigma2(st, g, spec.d0)
            sigma2 = rate / rng.gamma(shape) * jitter
            b1 = _draw_beta(mdl, sigma2, g, rng)
        else:
            b1 = _draw_beta(mdl, sigma2, g, rng)
            if mask not in ctx_cache:
                ctx_cache[mask] = model_context(ds, ModelId(mask, p), reference)
            ctx = ctx_cache[mask]
            shape, rate = cond_sigma2(ctx, b1[:k0], b1[k0:], g, spec.d0)
            sigma2 = rate / rng.gamma(shape) * jitter
            if not fixedg:
                if use_ch:
                    g = sample_g_ch(cond_u_ch(ctx, b1[k0:], sigma2, spec), rng)
                else:
                    g = _draw_g_generic(M, st.k1, b1[k0:], mdl.T[k0:, k0:], sigma2, rng)
        beta = beta.copy()
        beta[:k0] = b1[:k0]
        for i, j in enumerate(c):
            beta[k0 + j] = b1[k0 + i]
        for j in M.free:
            if not (mask >> j) & 1:
                beta[k0 + j] = pm[j] + psd[j] * rng.standard_normal()
        return sigma2, g, beta

    rec = _Recorder(cfg, k0 + p)
    for t in range(1, cfg.iterations + 1):
        try:
            sigma2, g, beta = draw_block(mask, sigma2, g, beta, 1.0)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            counters["jitter_retries"] += 1
            try:
                sigma2, g, beta = draw_block(mask, sigma2, g, beta, 1.0 + 1e-8)
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                raise SamplerError(f"iteration {t}: within-model update failed twice ({exc})") from exc

        if not cfg.fix_model:
            c = cols(mask)
            bcov = np.zeros(p)
            bcov[c] = beta[k0 + np.array(c, dtype=int)] if c else 0.0
            resid = y - X0 @ beta[:k0] - ds.X @ bcov
            u = Xr @ bcov
            rss = float(resid @ resid)
            uu = float(u @ u)
            size = len(c)
            gs2 = g * sigma2
            lpg_cur = M.log_prior_g(k0 + size, g)

            for j in _scan(cfg, M.free, rng):
                counters["proposed"] += 1
                bj = beta[k0 + j]
                adding = not (mask >> j) & 1
                sgn = 1.0 if adding else -1.0
                xj = ds.X[:, j]
                resid_new = resid - sgn * bj * xj
                u_new = u + sgn * bj * Xr[:, j]
                rss_new = float(resid_new @ resid_new)
                uu_new = float(u_new @ u_new)
                new_mask = mask ^ (1 << j)
                new_size = size + (1 if adding else -1)
                hld_new = half_logdet(new_mask)
                lpg_new = M.log_prior_g(k0 + new_size, g)
                if hld_new == -math.inf:
                    continue
                if lpg_new == -math.inf:
                    counters["support_rejections"] += 1
                    continue
                la = -(rss_new - rss) / (2.0 * sigma2)
                # N(beta_e; 0, g sigma2 Ve) with |Ve|^(-1/2) = |G|^(1/2)
                la += (-(new_size - size) * 0.5 * math.log(2 * math.pi * gs2)
                       + hld_new - half_logdet(mask) - (uu_new - uu) / (2.0 * gs2))
                la += lpg_new - lpg_cur
                la += M.log_model_prior(new_mask) - M.log_model_prior(mask)
                la += -log_pseudo(j, bj) if adding else log_pseudo(j, bj)
                if la >= 0 or math.log(rng.random()) < la:
                    counters["accepted"] += 1
                    mask, resid, u, rss, uu = new_mask, resid_new, u_new, rss_new, uu_new
                    size, lpg_cur = new_size, lpg_new
        if rec.keep(t):
            rec.put(t, mask, M.log_ev(mask), sigma2, g, beta)
    counters["evidence_methods"] = dict(M._methods)
    return rec.trace(p, k0, "GibbsVS", counters)


def _draw_beta(mdl: _GvsModel, sigma2: float, g: float, rng) -> np.ndarray:
    """beta_gamma ~ N(P^-1 X1'y, sigma2 P^-1) with P = X1'X1 + T1/g."""
    P = mdl.xtx + mdl.T / g
    L = linalg.cholesky(P, lower=True)
    mean = linalg.cho_solve((L, True), mdl.xty)
    z = rng.standard_normal(P.shape[0])
    return mean + math.sqrt(sigma2) * linalg.solve_triangular(L, z, lower=True, trans="T")


def _draw_g_generic(M: _Models, k1: int, be, vinv, sigma2, rng) -> float:
    """g | beta_e, sigma2 by a grid on log(g - s) for families without a CH form."""
    ke = be.size
    qf = float(be @ vinv @ be) if ke else 0.0
    s = support_lower(M.spec, M.k0, k1, M.n, M.q)
    lp = log_prior_g_fn(M.spec, M.k0, k1, M.n, M.q)

    def logf(z):
        g = s + np.exp(z)
        out = np.array([lp(v) for v in np.atleast_1d(g)])
        return out - 0.5 * ke * np.log(g) - qf / (2.0 * g * sigma2) + z

    grid = LogGridSampler(logf, hint=math.log(max(float(M.n), 1.0)), n_grid=512)
    return float(s + math.exp(grid.sample(rng)))


def run_chain(ds: Dataset, spec: PriorSpec, prior: ModelPrior, cfg: SamplerConfig,
              reference: Reference = INTERCEPT_ONLY, quad: QuadratureSpec = DEFAULT_QUAD,
              stream: int = 0) -> ChainTrace:
    fn = {"MC3": run_mc3, "MC3_given_g": run_mc3_given_g, "GibbsVS": run_gibbs_vs}[cfg.algorithm]
    return fn(ds, spec, prior, cfg, reference, quad, stream)


def run_chains(ds: Dataset, spec: PriorSpec, prior: ModelPrior, cfg: SamplerConfig,
               n_chains: int, threads: int = 1, reference: Reference = INTERCEPT_ONLY,
               quad: QuadratureSpec = DEFAULT_QUAD) -> list[ChainTrace]:
    """Independent chains on streams 0..n_chains-1 of the configured seed."""
    def one(c):
        return run_chain(ds, spec, prior, cfg, reference, quad, stream=c)

    if threads > 1 and n_chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, range(n_chains)))
    return [one(c) for c in range(n_chains)]


def merge_traces(traces: list[ChainTrace]) -> ChainTrace:
    if not traces:
        raise ValueError("nothing to merge")
    t0 = traces[0]
    beta = None if t0.beta is None else np.vstack([t.beta for t in traces])
    counters: dict = {}
    for t in traces:
        for k, v in t.counters.items():
            if isinstance(v, int):
                counters[k] = counters.get(k, 0) + v
    return ChainTrace(t0.p, t0.k0, np.concatenate([t.iteration for t in traces]),
                      np.concatenate([t.masks for t in traces]),
                      np.concatenate([t.sigma2 for t in traces]),
                      np.concatenate([t.g for t in traces]),
                      np.concatenate([t.log_evidence for t in traces]), beta, t0.algorithm,
                      counters)


# ---------------------------------------------------------------------------
# fixed-model Gibbs on the full conditionals


@dataclass(eq=False)
class FixedModelDraws:
    g: np.ndarray
    w: np.ndarray
    sigma2: np.ndarray
    beta: np.ndarray


def run_fixed_gibbs(ds: Dataset, m: ModelId, spec: PriorSpec, iterations: int, burnin: int,
                    seed: int, reference: Reference = INTERCEPT_ONLY,
                    printed: bool = False) -> FixedModelDraws:
    """Cycle (beta | sigma2, g), (sigma2 | beta, g), (u | beta, sigma2) on one model.

    ``printed=True`` swaps in the comparison variants of the sigma2 and u
    conditionals.
    """
    if not spec.pep_shaped:
        raise PriorError("the CH step needs a PEP-shaped family")
    if not iterations > burnin >= 0:
        raise ValueError("need iterations > burnin >= 0")
    ctx = model_context(ds, m, reference)
    rng = _rng(seed)
    k0 = ctx.k0
    sigma2 = float(ctx.stats.rss) / max(ctx.n - ctx.X1.shape[1], 1)
    g = float(ds.n)
    keep = iterations - burnin
    out_g = np.empty(keep)
    out_s = np.empty(keep)
    out_b = np.empty((keep, ctx.X1.shape[1]))
    for t in range(iterations):
        mean, cov = cond_beta_joint(ctx, sigma2, g)
        L = np.linalg.cholesky(cov)
        b = mean + L @ rng.standard_normal(mean.size)
        shape, rate = cond_sigma2(ctx, b[:k0], b[k0:], g, spec.d0, printed=printed)
        sigma2 = rate / rng.gamma(shape)
        g = sample_g_ch(cond_u_ch(ctx, b[k0:], sigma2, spec, printed=printed), rng)
        if t >= burnin:
            i = t - burnin
            out_g[i], out_s[i], out_b[i] = g, sigma2, b
    return FixedModelDraws(out_g, out_g / (1.0 + out_g), out_s, out_b)


def batch_means_se(x, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    if m < 2:
        raise ValueError("series too short for batch means")
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(b.std(ddof=1) / math.sqrt(n_batches))


# ---------------------------------------------------------------------------
# summaries and I/O


@dataclass(eq=False)
class TraceSummary:
    inclusion_probs: np.ndarray
    dim_posterior: np.ndarray
    log_g_edges: np.ndarray | None
    log_g_density: np.ndarray | None
    visit_counts: dict[str, int]


def trace_summaries(trace: ChainTrace, reference: Reference = INTERCEPT_ONLY) -> TraceSummary:
    """Monte Carlo inclusion probabilities, dimension histogram, log g histogram, visits."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    gam = trace.gamma
    incl = gam.mean(axis=0).astype(float)
    for j in reference.columns:
        incl[j] = 1.0
    q = trace.p - len(reference.columns)
    sizes = gam.sum(axis=1)
    dim = np.bincount(sizes, minlength=q + 1)[: q + 1] / float(len(trace))
    edges = dens = None
    if np.all(np.isfinite(trace.g)) and np.all(trace.g > 0):
        lg = np.log(trace.g)
        lo, hi = float(lg.min()), float(lg.max())
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        dens, edges = np.histogram(lg, bins=100, range=(lo, hi), density=True)
    masks, counts = np.unique(trace.masks, return_counts=True)
    visits = {ModelId(int(m), trace.p).bits: int(c) for m, c in zip(masks, counts)}
    return TraceSummary(incl, dim, edges, dens, visits)


def model_frequencies(trace: ChainTrace) -> dict[int, float]:
    masks, counts = np.unique(trace.masks, return_counts=True)
    return {int(m): c / float(len(trace)) for m, c in zip(masks, counts)}


def write_trace_csv(trace: ChainTrace, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,gamma,sigma2,g,log_evidence\n")
        for i in range(len(trace)):
            fh.write(f"{int(trace.iteration[i])},{trace.model(i).bits},"
                     f"{format_float(trace.sigma2[i])},{format_float(trace.g[i])},"
                     f"{format_float(trace.log_evidence[i])}\n")


def write_trace_binary(trace: ChainTrace, path: str | Path) -> None:
    """Little-endian framing: magic, (rows, p, nbeta) as uint64, then float64 rows of
    iteration, p gamma indicators, sigma2, g, log evidence and nbeta coefficients."""
    rows, p = len(trace), trace.p
    nbeta = 0 if trace.beta is None else trace.beta.shape[1]
    body = np.empty((rows, 1 + p + 3 + nbeta), dtype="<f8")
    body[:, 0] = trace.iteration
    body[:, 1:1 + p] = trace.gamma
    body[:, 1 + p] = trace.sigma2
    body[:, 2 + p] = trace.g
    body[:, 3 + p] = trace.log_evidence
    if nbeta:
        body[:, 4 + p:] = trace.beta
    with Path(path).open("wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<QQQ", rows, p, nbeta))
        fh.write(body.tobytes())


def read_trace_binary(path: str | Path, k0: int = 1) -> ChainTrace:
    raw = Path(path).read_bytes()
    if raw[:5] != TRACE_MAGIC:
        raise ValueError("not a PEPT1 trace file")
    rows, p, nbeta = struct.unpack("<QQQ", raw[5:29])
    body = np.frombuffer(raw[29:], dtype="<f8")
    width = 1 + p + 3 + nbeta
    if body.size != rows * width:
        raise ValueError("truncated trace file")
    body = body.reshape(rows, width)
    gam = body[:, 1:1 + p].astype(np.int64)
    masks = (gam << np.arange(p)).sum(axis=1) if p else np.zeros(rows, dtype=np.int64)
    beta = body[:, 4 + p:].copy() if nbeta else None
    return ChainTrace(int(p), k0, body[:, 0].astype(np.int64), masks.astype(np.int64),
                      body[:, 1 + p].copy(), body[:, 2 + p].copy(), body[:, 3 + p].copy(), beta)


def total_variation(p1: dict[int, float], p2: dict[int, float]) -> float:
    keys = set(p1) | set(p2)
    return 0.5 * sum(abs(p1.get(k, 0.0) - p2.get(k, 0.0)) for k in keys)
