"""Marginal likelihoods and Bayes factors against the reference model M0.

All evidence is reported as ``log f(y|M) - log f(y|M0)``; the reference
normalising constant cancels and is never needed for model comparison.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special

from .data import OlsStats
from .priors import (PriorError, PriorSpec, fixed_g, log_prior_excess_fn, pep_ab,
                     resolve_delta)
from .specfun import (DEFAULT_QUAD, QuadratureError, QuadratureSpec, _log_euler_f1,
                      integrate_log, laplace_log)

R10_FLOOR = 1e-300

METHODS = ("closed_form_f1", "conditional_fixed_g", "quadrature", "laplace")


class EvidenceError(RuntimeError):
    """Evidence could not be computed by any route."""


@dataclass(frozen=True)
class EvidenceResult:
    log_bf_vs_ref: float
    method: str
    diag: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# building blocks


def log_ml_given_g(stats: OlsStats, g: float, d0: float = 0.0) -> float:
    """log f(y|g, M1) - log f(y|M0) under the g-prior with fixed g."""
    if not g > 0:
        raise ValueError("g must be positive")
    if stats.k1 == stats.k0:
        return 0.0
    A = 0.5 * (stats.n + d0 - stats.k1)
    B = 0.5 * (stats.n + d0 - stats.k0)
    r10 = max(stats.r10, R10_FLOOR)
    return A * math.log1p(g) - B * math.log1p(g * r10)


def _log_ml_given_g_vec(n, k0, k1, r10, g, d0):
    A = 0.5 * (n + d0 - k1)
    B = 0.5 * (n + d0 - k0)
    return A * np.log1p(g) - B * np.log1p(g * np.maximum(r10, R10_FLOOR))


def _pep_f1_args(n, k0, k1, r10, delta, a, b, d0, kappa_g=0.0, kappa_w=0.0):
    """Parameters of the F1 factor in the PEP evidence and its moment variants.

    kappa_g shifts the c parameter (moments of g), kappa_w shifts the second
    b parameter (moments of w).
    """
    ke = k1 - k0
    A = 0.5 * (n + d0 - k1)
    B = 0.5 * (n + d0 - k0)
    dr = delta * np.maximum(r10, R10_FLOOR)
    x = 1.0 / (1.0 + dr)
    omx = dr / (1.0 + dr)
    y = 1.0 / (1.0 + delta)
    omy = delta / (1.0 + delta)
    cp = 0.5 * ke + a + b - kappa_g
    return b, B, -A + kappa_w, cp, x, y, omx, omy


def _pep_log_bf_from_f1(n, k0, k1, r10, delta, a, b, d0, logf1):
    ke = k1 - k0
    A = 0.5 * (n + d0 - k1)
    B = 0.5 * (n + d0 - k0)
    dr = delta * np.maximum(r10, R10_FLOOR)
    return (special.betaln(0.5 * ke + a, b) - special.betaln(a, b)
            + A * np.log1p(delta) - B * np.log1p(dr) + logf1)


def _diag_rss(stats: OlsStats) -> dict:
    if stats.r10 <= R10_FLOOR and stats.k1 > stats.k0:
        return {"information_consistency": "diverges to +inf as rss -> 0; evaluated at r10 floor"}
    return {}


def _check_dims(stats: OlsStats, d0: float):
    if not stats.n + d0 - stats.k0 > 0:
        raise EvidenceError("n + d0 - k0 must be positive")
    if not stats.k1 < stats.n:
        raise EvidenceError("k1 must be below n")


# ---------------------------------------------------------------------------
# closed form


def log_ml_pep_closed(stats: OlsStats, spec: PriorSpec,
                      quad: QuadratureSpec = DEFAULT_QUAD) -> EvidenceResult:
    """Closed-form PEP-family evidence through one Appell F1 evaluation.

    Falls back to a Laplace approximation of the g-integral (``method='laplace'``)
    when the F1 quadrature does not converge.
    """
    if not spec.pep_shaped:
        raise PriorError(f"closed form is only available for PEP, EPP, Intrinsic, not {spec.family}")
    _check_dims(stats, spec.d0)
    if stats.k1 == stats.k0:
        return EvidenceResult(0.0, "closed_form_f1", {})
    n, k0, k1 = stats.n, stats.k0, stats.k1
    a, b = pep_ab(spec, n, k1)
    delta = resolve_delta(spec, n, k1)
    args = _pep_f1_args(n, k0, k1, stats.r10, delta, a, b, spec.d0)
    lf, rel, st = _log_euler_f1(*args[:6], args[6], args[7], quad)
    diag = _diag_rss(stats)
    diag["f1_rel_error"] = float(rel[0])
    if st[0] == 0:
        val = _pep_log_bf_from_f1(n, k0, k1, stats.r10, delta, a, b, spec.d0, float(lf[0]))
        return EvidenceResult(float(val), "closed_form_f1", diag)
    diag["f1_status"] = int(st[0])
    return _laplace_evidence(stats, spec, diag)


def _log_integrand(stats: OlsStats, spec: PriorSpec, p_total: int | None):
    """(s, f) with f(v) the log integrand of the g-integral at g = s + v."""
    if spec.family == "Benchmark" and p_total is None:
        raise PriorError("Benchmark prior needs the total number of covariates p_total")
    s, lp = log_prior_excess_fn(spec, stats.k0, stats.k1, stats.n, p_total or 0)
    d0 = spec.d0
    A = 0.5 * (stats.n + d0 - stats.k1)
    B = 0.5 * (stats.n + d0 - stats.k0)
    r10 = max(stats.r10, R10_FLOOR)

    def f(v: float) -> float:
        g = s + v
        return A * math.log1p(g) - B * math.log1p(g * r10) + lp(v)

    return s, f


def _laplace_evidence(stats, spec, diag, p_total=None) -> EvidenceResult:
    _, f = _log_integrand(stats, spec, p_total)
    try:
        lv = laplace_log(f, 0.0, math.inf)
    except QuadratureError as exc:
        raise EvidenceError(f"evidence failed: F1 and Laplace both failed ({exc})") from exc
    return EvidenceResult(lv.log_magnitude, "laplace", diag)


# ---------------------------------------------------------------------------
# quadrature


def log_ml_quadrature(stats: OlsStats, spec: PriorSpec, quad: QuadratureSpec = DEFAULT_QUAD,
                      p_total: int | None = None) -> EvidenceResult:
    """Evidence by integrating the conditional-on-g evidence against the hyper-prior."""
    if spec.family == "FixedG":
        raise PriorError("FixedG has no mixing density; use log_ml_given_g")
    _check_dims(stats, spec.d0)
    if stats.k1 == stats.k0:
        return EvidenceResult(0.0, "quadrature", {})
    _, f = _log_integrand(stats, spec, p_total)
    diag = _diag_rss(stats)
    try:
        lv = integrate_log(f, 0.0, math.inf, quad)
    except QuadratureError as exc:
        diag["quadrature_error"] = str(exc)
        return _laplace_evidence(stats, spec, diag, p_total)
    return EvidenceResult(lv.log_magnitude, "quadrature", diag)


def log_evidence(stats: OlsStats, spec: PriorSpec, quad: QuadratureSpec = DEFAULT_QUAD,
                 p_total: int | None = None) -> EvidenceResult:
    """Default route per family: F1 closed form, fixed g, or quadrature."""
    if spec.pep_shaped:
        return log_ml_pep_closed(stats, spec, quad)
    if spec.family == "FixedG":
        _check_dims(stats, spec.d0)
        g = fixed_g(spec, stats.n)
        return EvidenceResult(log_ml_given_g(stats, g, spec.d0), "conditional_fixed_g", {"g": g})
    return log_ml_quadrature(stats, spec, quad, p_total)


def log_bayes_factor(stats1: OlsStats, stats2: OlsStats, spec: PriorSpec,
                     quad: QuadratureSpec = DEFAULT_QUAD, p_total: int | None = None) -> float:
    """log BF of M1 against M2 through their common reference."""
    if stats1.n != stats2.n or stats1.k0 != stats2.k0:
        raise ValueError("models do not share the same reference model and data")
    if not (math.isnan(stats1.rss0) or math.isnan(stats2.rss0)) and stats1.rss0 != stats2.rss0:
        raise ValueError("models do not share the same reference fit")
    e1 = log_evidence(stats1, spec, quad, p_total).log_bf_vs_ref
    e2 = log_evidence(stats2, spec, quad, p_total).log_bf_vs_ref
    return e1 - e2


# ---------------------------------------------------------------------------
# batches (enumeration)


def log_evidence_batch(n: int, k0: int, k1, r10, spec: PriorSpec, p_total: int,
                       quad: QuadratureSpec = DEFAULT_QUAD):
    """Vectorised evidence for many models sharing data and reference.

    Returns
    -------
    logbf : ndarray
    method : ndarray of str
    """
    k1 = np.asarray(k1, dtype=float)
    r10 = np.asarray(r10, dtype=float)
    out = np.zeros(k1.shape)
    method = np.empty(k1.shape, dtype=object)
    ref = k1 == k0
    if spec.family == "FixedG":
        g = fixed_g(spec, n)
        out = np.where(ref, 0.0, _log_ml_given_g_vec(n, k0, k1, r10, g, spec.d0))
        method[:] = "conditional_fixed_g"
        return out, method
    if spec.pep_shaped:
        method[:] = "closed_form_f1"
        idx = np.nonzero(~ref)[0]
        if idx.size:
            kk = k1[idx]
            ab = np.array([pep_ab(spec, n, int(k)) for k in np.unique(kk)])
            amap = dict(zip(np.unique(kk), ab))
            a = np.array([amap[k][0] for k in kk])
            b = np.array([amap[k][1] for k in kk])
            delta = np.array([resolve_delta(spec, n, int(k)) for k in kk])
            args = _pep_f1_args(n, k0, kk, r10[idx], delta, a, b, spec.d0)
            lf, rel, st = _log_euler_f1(*args[:6], args[6], args[7], quad)
            out[idx] = _pep_log_bf_from_f1(n, k0, kk, r10[idx], delta, a, b, spec.d0, lf)
            for i in np.nonzero(st != 0)[0]:
                j = idx[i]
                s = OlsStats(None, math.nan, math.nan, float(r10[j]), n, k0, int(k1[j]))
                res = _laplace_evidence(s, spec, {})
                out[j] = res.log_bf_vs_ref
                method[j] = res.method
        return out, method
    for j in range(k1.shape[0]):
        if ref[j]:
            method[j] = "quadrature"
            continue
        s = OlsStats(None, math.nan, math.nan, float(r10[j]), n, k0, int(k1[j]))
        res = log_ml_quadrature(s, spec, quad, p_total)
        out[j] = res.log_bf_vs_ref
        method[j] = res.method
    return out, method


class EvidenceCache:
    """Thread-safe memo of evidence results keyed by model."""

    def __init__(self):
        self._lock = threading.Lock()
        self._d: dict = {}

    def get_or_compute(self, key, fn):
        with self._lock:
            if key in self._d:
                return self._d[key]
        val = fn()
        with self._lock:
            return self._d.setdefault(key, val)

    def __len__(self):
        return len(self._d)

    def method_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        with self._lock:
            for v in self._d.values():
                m = getattr(v, "method", None)
                if m is not None:
                    counts[m] = counts.get(m, 0) + 1
        return counts


# ---------------------------------------------------------------------------
# reference marginal (needed only for predictive densities)


def log_reference_marginal(y: np.ndarray, X0: np.ndarray, d0: float = 0.0) -> float:
    """log f(y|M0) under the baseline prior proportional to sigma^-(1+d0).

    Only differences of this quantity between datasets that share the
    improper constant are meaningful.
    """
    n, k0 = X0.shape
    m = n - k0 + d0
    if not m > 0:
        raise ValueError("n - k0 + d0 must be positive")
    coef, *_ = np.linalg.lstsq(X0, y, rcond=None)
    r = y - X0 @ coef
    rss0 = float(r @ r)
    _, logdet = np.linalg.slogdet(X0.T @ X0)
    return ((d0 / 2 - 1) * math.log(2.0) - 0.5 * (n - k0) * math.log(math.pi)
            - 0.5 * logdet + special.gammaln(m / 2) - 0.5 * m * math.log(rss0))
