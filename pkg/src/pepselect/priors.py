"""Hyper-priors on g and prior summaries of the shrinkage factor w = g/(g+1).

Every proper family except Zellner-Siow is a shifted generalized beta
prime (SGBP) law

    f(g) = p ((g-s)/q)^(bp-1) (1 + ((g-s)/q)^p)^(-a-b) / (q B(a, b)),  g >= s,

so that t = 1 / (1 + ((g-s)/q)^p) ~ Beta(a, b). The PEP-shaped families
(PEP, EPP, intrinsic) have p = 1 and q = s = delta, giving g = delta / t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import special

from .specfun import LogValue, gauss_2f1, log_beta

FAMILIES = ("PEP", "EPP", "Intrinsic", "HyperG", "HyperGN", "Robust", "Benchmark",
            "MG", "FixedG", "ZellnerSiow")
PEP_SHAPED = ("PEP", "EPP", "Intrinsic")


class PriorError(ValueError):
    """Invalid prior configuration or a family constraint violated."""


@dataclass(frozen=True)
class PriorSpec:
    """Prior family and hyper-parameters.

    ``None`` means "use the family default", which may depend on the model
    (e.g. the intrinsic power delta = n/(k1+1)). ``n_star`` may also be the
    string ``"minimal"`` for the per-model minimal training size k1 + 1.

    ``n_ref`` replaces the sample size wherever a default depends on n
    (delta = n*, hyper-g/n scale, robust shift, benchmark, Zellner-Siow and
    fixed g). Pinning it keeps the prior unchanged when the same model is
    scored on a subset and a superset of the data.
    """

    family: str = "PEP"
    delta: float | None = None
    n_star: int | str | None = None
    d0: float = 0.0
    d1: float = 0.0
    a_h: float = 3.0
    a_r: float = 0.5
    b_r: float = 1.0
    rho_1r: float | None = None
    c_b: float = 0.01
    a_mg: float | None = None
    b_mg: float | None = None
    q_mg: int | None = None
    g_fixed: float | None = None
    n_ref: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PriorError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.d0 < 0 or self.d1 < 0:
            raise PriorError("d0 and d1 must be nonnegative")
        if self.delta is not None and not self.delta > 0:
            raise PriorError("delta must be positive")
        if isinstance(self.n_star, str) and self.n_star != "minimal":
            raise PriorError("n_star must be an integer or 'minimal'")
        if self.family == "HyperG" or self.family == "HyperGN":
            if not self.a_h > 2:
                raise PriorError("hyper-g requires a_h > 2")
        if self.c_b <= 0:
            raise PriorError("c_b must be positive")
        if self.g_fixed is not None and not self.g_fixed > 0:
            raise PriorError("g_fixed must be positive")
        if self.n_ref is not None and not self.n_ref > 0:
            raise PriorError("n_ref must be positive")

    @property
    def pep_shaped(self) -> bool:
        return self.family in PEP_SHAPED

    def with_(self, **kw) -> "PriorSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class SgbpParams:
    a: float
    b: float
    p: float = 1.0
    q: float = 1.0
    s: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.p > 0 and self.q > 0):
            raise PriorError(f"SGBP parameters must be positive, got {self}")
        if not self.s >= 0:
            raise PriorError(f"SGBP shift must be nonnegative, got {self.s}")

    @property
    def pep_shaped(self) -> bool:
        return self.p == 1.0 and self.q == self.s


@dataclass(frozen=True)
class ShrinkagePriorSummary:
    mean_w: float
    var_w: float
    mean_w_approx: float
    sd_w_approx: float

    @property
    def sd_w(self) -> float:
        return math.sqrt(max(self.var_w, 0.0))


# ---------------------------------------------------------------------------
# per-model resolution


def _n(spec: PriorSpec, n: int) -> float:
    return float(spec.n_ref) if spec.n_ref is not None else float(n)


def resolve_n_star(spec: PriorSpec, n: int, k1: int) -> float:
    if spec.family == "Intrinsic":
        return k1 + 1
    ns = spec.n_star
    if ns is None:
        ns = "minimal" if spec.family == "EPP" else _n(spec, n)
    if ns == "minimal":
        return k1 + 1
    return float(ns)


def resolve_delta(spec: PriorSpec, n: int, k1: int) -> float:
    if spec.family == "EPP":
        return 1.0
    if spec.family == "Intrinsic":
        return _n(spec, n) / (k1 + 1)
    return float(spec.delta) if spec.delta is not None else _n(spec, n)


def pep_ab(spec: PriorSpec, n: int, k1: int) -> tuple[float, float]:
    """Beta parameters of t = delta/g for the PEP-shaped families."""
    ns = resolve_n_star(spec, n, k1)
    a = 0.5 * (ns + spec.d0 - k1)
    b = 0.5 * (ns + spec.d1 - spec.d0 - k1)
    if not (a > 0 and b > 0):
        raise PriorError(
            f"training size n*={ns} too small for k1={k1} (needs n*+d0-k1>0 and n*+d1-d0-k1>0)")
    return a, b


def mixing_params(spec: PriorSpec, k0: int, k1: int, n: int, p_total: int) -> SgbpParams:
    """SGBP parameters of the hyper-prior on g for a model of size k1.

    Raises
    ------
    PriorError
        For FixedG and Zellner-Siow (no SGBP representation) and for
        family constraints such as q_mg < n - 1.
    """
    if not 0 < k0 <= k1 < n:
        raise PriorError(f"invalid dimensions k0={k0}, k1={k1}, n={n}")
    fam = spec.family
    nr = _n(spec, n)
    if fam in PEP_SHAPED:
        a, b = pep_ab(spec, n, k1)
        d = resolve_delta(spec, n, k1)
        return SgbpParams(a, b, 1.0, d, d)
    if fam == "HyperG":
        return SgbpParams(spec.a_h / 2 - 1, 1.0, 1.0, 1.0, 0.0)
    if fam == "HyperGN":
        return SgbpParams(spec.a_h / 2 - 1, 1.0, 1.0, nr, 0.0)
    if fam == "Robust":
        rho = spec.rho_1r if spec.rho_1r is not None else 1.0 / (k0 + k1)
        q = rho * (spec.b_r + nr)
        return SgbpParams(spec.a_r, 1.0, 1.0, q, q - spec.b_r)
    if fam == "Benchmark":
        return SgbpParams(spec.c_b, spec.c_b * max(nr, p_total ** 2), 1.0, 1.0, 0.0)
    if fam == "MG":
        q_mg = spec.q_mg if spec.q_mg is not None else k1 - k0
        if not q_mg < nr - 1:
            raise PriorError(f"MG prior requires q_mg < n-1 (q_mg={q_mg}, n={nr:g})")
        a_mg = spec.a_mg if spec.a_mg is not None else -0.75
        b_mg = spec.b_mg if spec.b_mg is not None else (nr - q_mg - 5) / 2 - 0.25
        return SgbpParams(a_mg + 1, b_mg + 1, 1.0, 1.0, 0.0)
    raise PriorError(f"family {fam} has no SGBP mixing distribution")


def support_lower(spec: PriorSpec, k0: int, k1: int, n: int, p_total: int) -> float:
    if spec.family == "ZellnerSiow":
        return 0.0
    if spec.family == "FixedG":
        return fixed_g(spec, n)
    return mixing_params(spec, k0, k1, n, p_total).s


def fixed_g(spec: PriorSpec, n: int) -> float:
    return float(spec.g_fixed) if spec.g_fixed is not None else _n(spec, n)


# ---------------------------------------------------------------------------
# densities and sampling


def log_density_g(params: SgbpParams, g: float) -> LogValue:
    """SGBP log density; sign 0 outside the support."""
    if g < params.s:
        return LogValue(-math.inf, 0)
    return LogValue(_log_sgbp(params, g), 1)


def _log_sgbp(P: SgbpParams, g: float) -> float:
    x = (g - P.s) / P.q
    if x <= 0:
        if P.b * P.p < 1:
            return math.inf
        if P.b * P.p > 1:
            return -math.inf
        return math.log(P.p) - math.log(P.q) - log_beta(P.a, P.b)
    lx = math.log(x)
    # log(1 + x^p) computed without overflow
    l1 = P.p * lx + math.log1p(math.exp(-P.p * lx)) if P.p * lx > 0 else math.log1p(math.exp(P.p * lx))
    return (math.log(P.p) + (P.b * P.p - 1) * lx - (P.a + P.b) * l1
            - math.log(P.q) - log_beta(P.a, P.b))


def log_prior_g_fn(spec: PriorSpec, k0: int, k1: int, n: int, p_total: int) -> Callable[[float], float]:
    """Log hyper-prior density of g for a model, as a plain function.

    Works for every proper family, including Zellner-Siow.
    """
    s, fv = log_prior_excess_fn(spec, k0, k1, n, p_total)

    def f(g: float) -> float:
        v = g - s
        if v <= 0:
            return -math.inf
        return fv(v)

    return f


def log_prior_excess_fn(spec: PriorSpec, k0: int, k1: int, n: int,
                        p_total: int) -> tuple[float, Callable[[float], float]]:
    """Support bound s and the log density of g written as a function of v = g - s.

    Quadrature over v avoids the cancellation in g - s when g sits just
    above a large shift.
    """
    if spec.family == "FixedG":
        raise PriorError("FixedG is a point mass; branch on it explicitly")
    if spec.family == "ZellnerSiow":
        nr = _n(spec, n)
        c = 0.5 * math.log(nr / 2.0) - special.gammaln(0.5)

        def zs(g: float) -> float:
            if g <= 0:
                return -math.inf
            return c - 1.5 * math.log(g) - nr / (2.0 * g)

        return 0.0, zs
    P = mixing_params(spec, k0, k1, n, p_total)
    lb = log_beta(P.a, P.b)
    lp, lq = math.log(P.p), math.log(P.q)

    def sgbp(v: float) -> float:
        if v <= 0:
            return -math.inf
        lx = math.log(v) - lq
        t = P.p * lx
        l1 = t + math.log1p(math.exp(-t)) if t > 0 else math.log1p(math.exp(t))
        return lp + (P.b * P.p - 1) * lx - (P.a + P.b) * l1 - lq - lb

    return P.s, sgbp


def log_prior_excess_vec(spec: PriorSpec, k0: int, k1: int, n: int,
                         p_total: int) -> tuple[float, Callable[[np.ndarray], np.ndarray]]:
    """Array version of :func:`log_prior_excess_fn`, for grid evaluation."""
    if spec.family == "FixedG":
        raise PriorError("FixedG is a point mass; branch on it explicitly")
    if spec.family == "ZellnerSiow":
        nr = _n(spec, n)
        c = 0.5 * math.log(nr / 2.0) - special.gammaln(0.5)

        def zs(v):
            v = np.asarray(v, dtype=float)
            with np.errstate(divide="ignore"):
                return np.where(v > 0, c - 1.5 * np.log(v) - nr / (2.0 * v), -np.inf)

        return 0.0, zs
    P = mixing_params(spec, k0, k1, n, p_total)
    lb = log_beta(P.a, P.b)
    lp, lq = math.log(P.p), math.log(P.q)

    def sgbp(v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(v) - lq
            out = lp + (P.b * P.p - 1) * lx - (P.a + P.b) * np.logaddexp(0.0, P.p * lx) - lq - lb
        return np.where(v > 0, out, -np.inf)

    return P.s, sgbp


def sample_g(params: SgbpParams, rng: np.random.Generator, size=None):
    """Draw from SGBP by g = s + q ((1-t)/t)^(1/p) with t ~ Beta(a, b)."""
    t = rng.beta(params.a, params.b, size=size)
    # (1-t)/t with t near 0 overflows to inf only when t underflows
    r = (1.0 - t) / t
    return params.s + params.q * r ** (1.0 / params.p)


def sgbp_cdf(params: SgbpParams, g):
    """P(G <= g) = 1 - I_t(a, b) with t = 1/(1 + ((g-s)/q)^p).

    The complement form keeps precision far in the right tail, where 1 - t
    rounds to 1.
    """
    g = np.asarray(g, dtype=float)
    x = np.clip((g - params.s) / params.q, 0.0, None)
    with np.errstate(divide="ignore", over="ignore"):
        t = 1.0 / (1.0 + x ** params.p)
    return special.betaincc(params.a, params.b, t)


def sgbp_ppf(params: SgbpParams, u):
    omt = special.betaincinv(params.b, params.a, np.asarray(u, dtype=float))
    return params.s + params.q * (omt / (1.0 - omt)) ** (1.0 / params.p)


# ---------------------------------------------------------------------------
# prior of the shrinkage factor


def taylor_w_approx(a: float, b: float, delta: float) -> tuple[float, float]:
    """Second-order delta-method mean and sd of w = delta/(delta + t), t ~ Beta(a, b)."""
    if not (a > 0 and b > 0 and delta > 0):
        raise PriorError("taylor_w_approx requires a, b, delta > 0")
    mu = a / (a + b)
    var_t = a * b / ((a + b) ** 2 * (a + b + 1))
    w = delta / (delta + mu)
    d1 = -delta / (delta + mu) ** 2
    d2 = 2 * delta / (delta + mu) ** 3
    return w + 0.5 * d2 * var_t, abs(d1) * math.sqrt(var_t)


def prior_w_moments(params: SgbpParams) -> ShrinkagePriorSummary:
    """Exact prior mean and variance of w via 2F1 at z = -1/delta, plus the Taylor values."""
    if not params.pep_shaped:
        raise PriorError("prior_w_moments needs p = 1 and q = s")
    d = params.q
    m1 = gauss_2f1(1.0, params.a, params.a + params.b, -1.0 / d).value
    m2 = gauss_2f1(2.0, params.a, params.a + params.b, -1.0 / d).value
    ma, sa = taylor_w_approx(params.a, params.b, d)
    return ShrinkagePriorSummary(m1, max(m2 - m1 * m1, 0.0), ma, sa)


def inverse_t_moment(a: float, b: float) -> float:
    """E(1/t) for t ~ Beta(a, b), which needs a > 1."""
    if not a > 1:
        raise PriorError("E(1/t) is infinite unless a > 1")
    return (a + b - 1) / (a - 1)


def inverse_t_moment_table(n_star: float, k1: float, d0: float, d1: float) -> float:
    """Closed-form E(1/t) written in terms of (n*, k1, d0, d1)."""
    den = n_star + d0 - k1 - 2
    if not den > 0:
        raise PriorError("moment does not exist for these dimensions")
    return (2 * n_star + d1 - 2 * k1 - 2) / den
