"""Conditional and marginal posteriors of a single model under the g-mixture priors.

The conditionals follow from the mixture representation

    beta_e | sigma2, g ~ N(0, g sigma2 Ve),   pi(beta_0, sigma) ~ sigma^-(1+d0),

with Ve^-1 = Xe^T (I - P0) Xe. For the PEP-shaped families the shrinkage
and hyper-parameter moments reduce to ratios of Appell F1 values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .data import (INTERCEPT_ONLY, Dataset, ModelId, OlsStats, Reference, design,
                   ols_stats, ve_inverse)
from .evidence import (R10_FLOOR, _log_ml_given_g_vec, _pep_f1_args, log_evidence,
                       log_ml_given_g)
from .priors import (PriorError, PriorSpec, fixed_g, log_prior_excess_fn,
                     log_prior_excess_vec, pep_ab, resolve_delta)
from .specfun import (DEFAULT_QUAD, LogValue, QuadratureSpec, _log_euler_f1, gauss_2f1,
                      integrate_log, kummer_m)


class MomentError(ValueError):
    """A requested posterior moment does not exist."""


# ---------------------------------------------------------------------------
# model context


@dataclass(frozen=True, eq=False)
class ModelContext:
    """Matrices of one model that the Gibbs conditionals reuse.

    ``beta0_hat`` regresses y on X0 alone and ``betae_hat`` on Xe alone, as
    in the displayed conditional means; ``beta_hat1`` is the joint fit.
    """

    y: np.ndarray
    X0: np.ndarray
    Xe: np.ndarray
    X1: np.ndarray
    stats: OlsStats
    ve_inv: np.ndarray
    xtx1: np.ndarray
    xtx0: np.ndarray
    xtxe: np.ndarray
    beta0_hat: np.ndarray
    betae_hat: np.ndarray
    x0_on_e: np.ndarray  # (X0'X0)^-1 X0'Xe
    xe_on_0: np.ndarray  # (Xe'Xe)^-1 Xe'X0

    @property
    def n(self) -> int:
        return self.X1.shape[0]

    @property
    def k0(self) -> int:
        return self.X0.shape[1]

    @property
    def ke(self) -> int:
        return self.Xe.shape[1]

    @property
    def t1(self) -> np.ndarray:
        k0, ke = self.k0, self.ke
        T = np.zeros((k0 + ke, k0 + ke))
        T[k0:, k0:] = self.ve_inv
        return T


def model_context(ds: Dataset, m: ModelId, reference: Reference = INTERCEPT_ONLY) -> ModelContext:
    X0, Xe = design(ds, m, reference)
    stats = ols_stats(ds, m, reference)
    X1 = np.column_stack([X0, Xe])
    y = np.asarray(ds.y, dtype=float)
    xtx0 = X0.T @ X0
    xtxe = Xe.T @ Xe
    beta0_hat = np.linalg.solve(xtx0, X0.T @ y)
    if Xe.shape[1]:
        betae_hat = np.linalg.solve(xtxe, Xe.T @ y)
        x0_on_e = np.linalg.solve(xtx0, X0.T @ Xe)
        xe_on_0 = np.linalg.solve(xtxe, Xe.T @ X0)
    else:
        betae_hat = np.zeros(0)
        x0_on_e = np.zeros((X0.shape[1], 0))
        xe_on_0 = np.zeros((0, X0.shape[1]))
    return ModelContext(y, X0, Xe, X1, stats, ve_inverse(ds, m, reference), X1.T @ X1,
                        xtx0, xtxe, beta0_hat, betae_hat, x0_on_e, xe_on_0)


def _w_pair(g: float) -> tuple[float, float]:
    # w and 1 - w without cancellation for large g
    return g / (1.0 + g), 1.0 / (1.0 + g)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# full conditionals


@dataclass(frozen=True, eq=False)
class ConditionalBetaE:
    mean: np.ndarray
    cov: np.ndarray
    shrink_w: float
    W: np.ndarray


def cond_beta_e(ctx: ModelContext, beta0, sigma2: float, g: float) -> ConditionalBetaE:
    """Normal full conditional of beta_e given beta_0, sigma2 and g.

    The mean is W_e beta~_e with beta~_e = betae_hat - (Xe'Xe)^-1 Xe'X0 beta_0
    and W_e = (w Xe'Xe + (1-w) Ve^-1)^-1 w Xe'Xe.
    """
    if not (g > 0 and sigma2 > 0):
        raise ValueError("g and sigma2 must be positive")
    w, omw = _w_pair(g)
    beta_t = ctx.betae_hat - ctx.xe_on_0 @ np.asarray(beta0, dtype=float)
    M = w * ctx.xtxe + omw * ctx.ve_inv
    W = np.linalg.solve(M, w * ctx.xtxe)
    cov = _sym(W @ np.linalg.inv(ctx.xtxe) * sigma2)
    return ConditionalBetaE(W @ beta_t, cov, w, W)


def cond_beta_0(ctx: ModelContext, beta_e, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    """Normal full conditional of the reference coefficients."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    mean = ctx.beta0_hat - ctx.x0_on_e @ np.asarray(beta_e, dtype=float)
    return mean, _sym(np.linalg.inv(ctx.xtx0) * sigma2)


def cond_beta_joint(ctx: ModelContext, sigma2: float, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Joint normal conditional of (beta_0, beta_e): mean W1 beta_hat1, cov W1 (X1'X1)^-1 sigma2."""
    if not (g > 0 and sigma2 > 0):
        raise ValueError("g and sigma2 must be positive")
    w, omw = _w_pair(g)
    M = w * ctx.xtx1 + omw * ctx.t1
    W1 = np.linalg.solve(M, w * ctx.xtx1)
    cov = _sym(W1 @ np.linalg.inv(ctx.xtx1) * sigma2)
    return W1 @ ctx.stats.beta_hat, cov


def cond_sigma2(ctx: ModelContext, beta0, beta_e, g: float, d0: float = 0.0,
                printed: bool = False) -> tuple[float, float]:
    """Inverse-gamma (shape, rate) of sigma2 given the coefficients and g.

    The rate is (S(beta) + beta_e' Ve^-1 beta_e / g) / 2 with S the residual
    sum of squares at the conditioned coefficients. ``printed=True`` returns
    the variant with the OLS residual sum and no 1/g factor, kept only for
    comparison runs.
    """
    if not g > 0:
        raise ValueError("g must be positive")
    be = np.asarray(beta_e, dtype=float)
    shape = 0.5 * (ctx.n + ctx.ke + d0)
    q = float(be @ ctx.ve_inv @ be) if ctx.ke else 0.0
    if printed:
        return shape, 0.5 * (ctx.stats.rss + q)
    r = ctx.y - ctx.X0 @ np.asarray(beta0, dtype=float) - ctx.Xe @ be
    return shape, 0.5 * (float(r @ r) + q / g)


def collapsed_sigma2(stats: OlsStats, g: float, d0: float = 0.0) -> tuple[float, float]:
    """Inverse-gamma (shape, rate) of sigma2 given g with all coefficients integrated out."""
    shape = 0.5 * (stats.n - stats.k0 + d0)
    if stats.k1 == stats.k0:
        return shape, 0.5 * stats.rss0
    r10 = max(stats.r10, R10_FLOOR)
    return shape, 0.5 * stats.rss0 * (1.0 + g * r10) / (1.0 + g)


@dataclass(frozen=True)
class ChParams:
    """Confluent hypergeometric law f(u) ~ u^(p-1) (1-u)^(q-1) exp(-s u) on (0, 1).

    ``delta`` maps u back to g = delta / (1 - u).
    """

    p: float
    q: float
    s: float
    delta: float = 1.0


def cond_u_ch(ctx: ModelContext, beta_e, sigma2: float, spec: PriorSpec,
              printed: bool = False) -> ChParams:
    """CH full conditional of u = 1 - delta/g for the PEP-shaped families.

    ``printed=True`` adds 2 to the second parameter (comparison only).
    """
    if not spec.pep_shaped:
        raise PriorError(f"CH conditional needs a PEP-shaped family, not {spec.family}")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    n, k1 = ctx.n, ctx.k0 + ctx.ke
    a, b = pep_ab(spec, n, k1)
    delta = resolve_delta(spec, n, k1)
    be = np.asarray(beta_e, dtype=float)
    q = float(be @ ctx.ve_inv @ be) if ctx.ke else 0.0
    qq = a + 0.5 * ctx.ke + (2.0 if printed else 0.0)
    return ChParams(b, qq, -q / (2.0 * delta * sigma2), delta)


def ch_log_density(params: ChParams, u) -> np.ndarray:
    """Normalized CH log density, with the constant B(p, q) M(p, p+q, -s)."""
    u = np.asarray(u, dtype=float)
    lc = special.betaln(params.p, params.q) + kummer_m(params.p, params.p + params.q,
                                                       -params.s).log_magnitude
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ((params.p - 1) * np.log(u) + (params.q - 1) * np.log1p(-u)
               - params.s * u - lc)
    return np.where((u > 0) & (u < 1), out, -np.inf)


# ---------------------------------------------------------------------------
# grid sampler


class LogGridSampler:
    """Inverse-CDF sampler for a univariate density given as a vectorised log density on R.

    The density is tabulated on ``n_grid`` points covering the region within
    ``cut`` log units of the mode and treated as log-linear inside each cell,
    so exponential tails are represented exactly.
    """

    def __init__(self, logf: Callable[[np.ndarray], np.ndarray], hint: float = 0.0,
                 n_grid: int = 2048, cut: float = 36.0, coarse_step: float = 0.5):
        self._logf = logf
        self.cut = cut
        lo, hi = self._bracket(hint, coarse_step)
        for _ in range(4):
            z, lz = self._tabulate(lo, hi, n_grid)
            mass = self._cells(z, lz)
            if mass.max() <= mass.sum() / 64:
                break
            # peak narrower than a few cells: zoom in
            keep = np.nonzero(lz >= lz.max() - cut)[0]
            lo = z[max(keep[0] - 1, 0)]
            hi = z[min(keep[-1] + 1, z.size - 1)]
        self.z = z
        self.lz = lz
        self._mass = mass
        self._cum = np.cumsum(mass)
        self.log_norm = float(self._shift + math.log(self._cum[-1]))

    def _eval(self, z):
        v = np.asarray(self._logf(z), dtype=float)
        return np.where(np.isnan(v), -np.inf, v)

    def _bracket(self, hint: float, step: float) -> tuple[float, float]:
        half = 64
        z = hint + step * np.arange(-half, half + 1)
        for _ in range(64):
            v = self._eval(z)
            if not np.isfinite(v).any() or np.nanmax(v) == -np.inf:
                raise ValueError("log density is -inf on the whole search window")
            i = int(np.argmax(v))
            if i == 0:
                z = z - step * half
                continue
            if i == z.size - 1:
                z = z + step * half
                continue
            vmax = v[i]
            keep = np.nonzero(v >= vmax - self.cut)[0]
            # tails still above the cut at a window edge: extend that side
            if keep[0] == 0:
                z = np.concatenate([z[0] - step * np.arange(half, 0, -1), z])
                continue
            if keep[-1] == z.size - 1:
                z = np.concatenate([z, z[-1] + step * np.arange(1, half + 1)])
                continue
            return float(z[keep[0] - 1]), float(z[keep[-1] + 1])
        raise ValueError("could not bracket the density mass")

    def _tabulate(self, lo, hi, n):
        z = np.linspace(lo, hi, n)
        lz = self._eval(z)
        self._shift = float(lz.max())
        return z, np.maximum(lz, self._shift - 700.0)

    def _cells(self, z, lz):
        h = np.diff(z)
        l0 = lz[:-1] - self._shift
        l1 = lz[1:] - self._shift
        d = l1 - l0
        e0 = np.exp(l0)
        small = np.abs(d) < 1e-10
        ds = np.where(small, 1.0, d)
        return np.where(small, h * e0, h * e0 * np.expm1(ds) / ds)

    def sample(self, rng: np.random.Generator, size=None):
        """Draw on the z scale."""
        r = rng.random(size) * self._cum[-1]
        i = np.minimum(np.searchsorted(self._cum, r, side="right"), self._mass.size - 1)
        frac = (r - (self._cum[i] - self._mass[i])) / self._mass[i]
        frac = np.clip(frac, 0.0, 1.0)
        d = self.lz[i + 1] - self.lz[i]
        small = np.abs(d) < 1e-10
        ds = np.where(small, 1.0, d)
        x = np.where(small, frac, np.log1p(frac * np.expm1(ds)) / ds)
        out = self.z[i] + x * (self.z[i + 1] - self.z[i])
        return float(out) if size is None else out


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def ch_sampler(params: ChParams, **kw) -> LogGridSampler:
    """Grid sampler on z = logit(u); draws map to g = delta (1 + e^z)."""
    p, q, s = params.p, params.q, params.s

    def logf(z):
        ls, lc = _log_sigmoid(z), _log_sigmoid(-z)
        return p * ls + q * lc - s * np.exp(ls)

    return LogGridSampler(logf, hint=math.log(p / q), **kw)


def sample_ch(params: ChParams, rng: np.random.Generator, size=None):
    """Draw u from the CH law."""
    z = ch_sampler(params).sample(rng, size)
    return special.expit(z)


def sample_g_ch(params: ChParams, rng: np.random.Generator) -> float:
    """Draw g = delta/(1-u) with u from the CH law, computed as delta (1 + e^z)."""
    z = ch_sampler(params).sample(rng)
    return params.delta * (1.0 + math.exp(z))


class GPosteriorSampler:
    """Draws from the marginal posterior of g for one model.

    The grid runs over z = log(g - s), where s is the support bound of the
    hyper-prior; for the PEP-shaped families this is a monotone transform of
    delta/g. FixedG returns its point mass.
    """

    def __init__(self, stats: OlsStats, spec: PriorSpec, p_total: int | None = None):
        self.fixed = None
        if spec.family == "FixedG":
            self.fixed = fixed_g(spec, stats.n)
            return
        s, lp = log_prior_excess_vec(spec, stats.k0, stats.k1, stats.n, p_total or 0)
        self.s = s
        n, k0, k1, r10, d0 = stats.n, stats.k0, stats.k1, stats.r10, spec.d0

        def logf(z):
            v = np.exp(z)
            return _log_ml_given_g_vec(n, k0, k1, r10, s + v, d0) + lp(v) + z

        self.grid = LogGridSampler(logf, hint=math.log(max(float(n), 1.0)))

    def sample(self, rng: np.random.Generator, size=None):
        if self.fixed is not None:
            return self.fixed if size is None else np.full(size, self.fixed)
        z = self.grid.sample(rng, size)
        return self.s + np.exp(z)


# ---------------------------------------------------------------------------
# marginal posterior of g and its moments


def _pep_consts(stats: OlsStats, spec: PriorSpec):
    if not spec.pep_shaped:
        raise PriorError(f"closed-form moments need a PEP-shaped family, not {spec.family}")
    a, b = pep_ab(spec, stats.n, stats.k1)
    return a, b, resolve_delta(spec, stats.n, stats.k1)


def log_marginal_posterior_g(stats: OlsStats, spec: PriorSpec, g, p_total: int | None = None,
                             quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Vectorised log posterior density of g; -inf outside the hyper-prior support."""
    g = np.asarray(g, dtype=float)
    if spec.family == "FixedG":
        raise PriorError("FixedG has a point-mass posterior for g")
    s, lp = log_prior_excess_vec(spec, stats.k0, stats.k1, stats.n, p_total or 0)
    lev = log_evidence(stats, spec, quad, p_total).log_bf_vs_ref
    v = g - s
    with np.errstate(invalid="ignore"):
        out = (_log_ml_given_g_vec(stats.n, stats.k0, stats.k1, stats.r10,
                                   np.maximum(g, 0.0), spec.d0) + lp(v) - lev)
    if stats.k1 == stats.k0:
        out = lp(v)
    return np.where(v > 0, out, -np.inf)


def marginal_posterior_g(stats: OlsStats, spec: PriorSpec, g: float,
                         p_total: int | None = None) -> LogValue:
    """Posterior density of g given the model, as a LogValue (sign 0 off the support).

    For the PEP-shaped families this is

        C2 (1+g)^A (1+g R10)^-B (g-delta)^(b-1) g^-(a+b),

    with C2 = delta^a / (B(a, b) BF10) and BF10 the closed-form evidence.
    """
    lv = float(log_marginal_posterior_g(stats, spec, g, p_total))
    if lv == -math.inf:
        return LogValue(-math.inf, 0)
    return LogValue(lv, 1)


def posterior_g_moments(stats: OlsStats, spec: PriorSpec, kappa: int,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """E(g^kappa | y, M) for the PEP-shaped families.

    delta^kappa B(b, ke/2+a-kappa)/B(b, ke/2+a) F1(kappa)/F1(0), where F1(kappa)
    lowers the c parameter by kappa.

    Raises
    ------
    MomentError
        If ke/2 + a <= kappa (the moment is infinite).
    """
    if kappa == 0:
        return 1.0
    a, b, delta = _pep_consts(stats, spec)
    ke = stats.k1 - stats.k0
    if not 0.5 * ke + a > kappa:
        raise MomentError(f"E(g^{kappa}) is infinite: needs ke/2 + a > {kappa}")
    if ke == 0:
        return math.exp(kappa * math.log(delta) + special.betaln(a - kappa, b)
                        - special.betaln(a, b))
    args0 = _pep_f1_args(stats.n, stats.k0, stats.k1, stats.r10, delta, a, b, spec.d0)
    argsk = _pep_f1_args(stats.n, stats.k0, stats.k1, stats.r10, delta, a, b, spec.d0,
                         kappa_g=kappa)
    lf = _log_f1_pair(args0, argsk, quad)
    return math.exp(kappa * math.log(delta) + special.betaln(b, 0.5 * ke + a - kappa)
                    - special.betaln(b, 0.5 * ke + a) + lf[1] - lf[0])


def posterior_w_moments(stats: OlsStats, spec: PriorSpec, kappa: int,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """E(w^kappa | y, M) = (delta/(delta+1))^kappa F1~(kappa)/F1~(0) for the PEP-shaped families.

    F1~(kappa) raises the second b parameter (-A) by kappa.
    """
    if kappa == 0:
        return 1.0
    a, b, delta = _pep_consts(stats, spec)
    if stats.k1 == stats.k0:
        return gauss_2f1(float(kappa), a, a + b, -1.0 / delta, quad).value
    args0 = _pep_f1_args(stats.n, stats.k0, stats.k1, stats.r10, delta, a, b, spec.d0)
    argsk = _pep_f1_args(stats.n, stats.k0, stats.k1, stats.r10, delta, a, b, spec.d0,
                         kappa_w=kappa)
    lf = _log_f1_pair(args0, argsk, quad)
    return math.exp(kappa * (math.log(delta) - math.log1p(delta)) + lf[1] - lf[0])


def _log_f1_pair(args0, args1, quad):
    cols = [np.array([u, v], dtype=float) for u, v in zip(args0, args1)]
    lf, _, st = _log_euler_f1(*cols[:6], cols[6], cols[7], quad)
    if np.any(st != 0):
        raise MomentError("F1 quadrature did not converge for a posterior moment")
    return lf


def posterior_w_mean_batch(n: int, k0: int, k1, r10, spec: PriorSpec,
                           quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """E(w | y, M) for many PEP-shaped models at once (used by model averaging)."""
    k1 = np.asarray(k1, dtype=float)
    r10 = np.asarray(r10, dtype=float)
    out = np.empty(k1.shape)
    uk = np.unique(k1)
    ab = {k: pep_ab(spec, n, int(k)) for k in uk}
    dl = {k: resolve_delta(spec, n, int(k)) for k in uk}
    a = np.array([ab[k][0] for k in k1])
    b = np.array([ab[k][1] for k in k1])
    delta = np.array([dl[k] for k in k1])
    null = k1 == k0
    for i in np.nonzero(null)[0]:
        out[i] = gauss_2f1(1.0, a[i], a[i] + b[i], -1.0 / delta[i], quad).value
    idx = np.nonzero(~null)[0]
    if idx.size:
        A0 = _pep_f1_args(n, k0, k1[idx], r10[idx], delta[idx], a[idx], b[idx], spec.d0)
        A1 = _pep_f1_args(n, k0, k1[idx], r10[idx], delta[idx], a[idx], b[idx], spec.d0,
                          kappa_w=1.0)
        m = idx.size
        cols = [np.concatenate([np.broadcast_to(u, m), np.broadcast_to(v, m)]).astype(float)
                for u, v in zip(A0, A1)]
        lf, _, st = _log_euler_f1(*cols[:6], cols[6], cols[7], quad)
        if np.any(st != 0):
            raise MomentError("F1 quadrature did not converge for E(w|y)")
        out[idx] = np.exp(np.log(delta[idx]) - np.log1p(delta[idx]) + lf[m:] - lf[:m])
    return out


def posterior_expectation(stats: OlsStats, spec: PriorSpec, log_h: Callable[[float], float],
                          p_total: int | None = None,
                          quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """E(h(g) | y, M) for a positive function h, by quadrature; works for every family."""
    if spec.family == "FixedG":
        return math.exp(log_h(fixed_g(spec, stats.n)))
    s, lp = log_prior_excess_fn(spec, stats.k0, stats.k1, stats.n, p_total or 0)
    d0 = spec.d0

    def f(v):
        g = s + v
        return log_ml_given_g(stats, g, d0) + lp(v) + log_h(g)

    def f0(v):
        return log_ml_given_g(stats, s + v, d0) + lp(v)

    num = integrate_log(f, 0.0, math.inf, quad).log_magnitude
    den = integrate_log(f0, 0.0, math.inf, quad).log_magnitude
    return math.exp(num - den)


def posterior_g_tail_slope(stats: OlsStats, spec: PriorSpec, p_total: int | None = None,
                           far: float = 1e12) -> float:
    """d log p(g | y, M) / d log g far in the right tail.

    E(g^kappa | y, M) is finite when the slope plus kappa is below -1; the
    quadrature families have no closed-form existence rule, so this is how
    the moment summaries decide.
    """
    s, lp = log_prior_excess_fn(spec, stats.k0, stats.k1, stats.n, p_total or 0)

    def f(g):
        return log_ml_given_g(stats, g, spec.d0) + lp(g - s)

    return (f(100.0 * far) - f(far)) / math.log(100.0)


def posterior_w_mean(stats: OlsStats, spec: PriorSpec, p_total: int | None = None,
                     quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """E(w | y, M): closed form for PEP-shaped families, quadrature otherwise."""
    if spec.pep_shaped:
        return posterior_w_moments(stats, spec, 1, quad)
    return posterior_expectation(stats, spec, lambda g: math.log(g) - math.log1p(g),
                                 p_total, quad)


def log_posterior_w_density(stats: OlsStats, spec: PriorSpec, w, p_total: int | None = None):
    """Vectorised log posterior density of w = g/(g+1); -inf outside its support."""
    w = np.asarray(w, dtype=float)
    inside = (w > 0) & (w < 1)
    ws = np.where(inside, w, 0.5)
    g = ws / (1.0 - ws)
    out = log_marginal_posterior_g(stats, spec, g, p_total) - 2.0 * np.log1p(-ws)
    return np.where(inside, out, -np.inf)


def posterior_w_density(stats: OlsStats, spec: PriorSpec, w: float,
                        p_total: int | None = None) -> LogValue:
    """Posterior density of w; exactly zero outside [delta/(delta+1), 1) for PEP-shaped families."""
    lv = float(log_posterior_w_density(stats, spec, w, p_total))
    return LogValue(lv, 1) if lv > -math.inf else LogValue(-math.inf, 0)


@dataclass(frozen=True)
class GPosteriorSummary:
    mean_g: float
    var_g: float
    mean_w: float
    var_w: float
    moment_exists_up_to: int


def posterior_g_summary(stats: OlsStats, spec: PriorSpec,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> GPosteriorSummary:
    """Posterior means and variances of g and w; g entries are nan when infinite."""
    a, b, delta = _pep_consts(stats, spec)
    top = 0.5 * stats.ke + a
    kmax = int(math.ceil(top)) - 1
    m1 = posterior_g_moments(stats, spec, 1, quad) if kmax >= 1 else math.nan
    m2 = posterior_g_moments(stats, spec, 2, quad) if kmax >= 2 else math.nan
    w1 = posterior_w_moments(stats, spec, 1, quad)
    w2 = posterior_w_moments(stats, spec, 2, quad)
    return GPosteriorSummary(m1, max(m2 - m1 * m1, 0.0) if kmax >= 2 else math.nan,
                             w1, max(w2 - w1 * w1, 0.0), kmax)
