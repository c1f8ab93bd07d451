"""Log-domain special functions and quadrature.

Everything that enters an evidence or moment formula is returned on the log
scale, since marginal likelihoods overflow doubles already for n near 100.

The Appell F1 and Gauss 2F1 functions are evaluated from their Euler
integrals by the adaptive Gauss-Kronrod kernel in ``pepselect.kernels``.
``integrate_log`` is a separate route built on QUADPACK (``scipy.integrate.quad``)
and is used by the quadrature evidence path and as the oracle for the kernel.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from . import kernels


class DomainError(ValueError):
    """Parameters outside the domain of the integral representation."""


class QuadratureError(RuntimeError):
    """Quadrature failed to reach its tolerance.

    Attributes
    ----------
    estimate : LogValue
        Best available estimate.
    rel_error : float
        Estimated relative error of ``estimate``.
    """

    def __init__(self, message: str, estimate: "LogValue", rel_error: float):
        super().__init__(message)
        self.estimate = estimate
        self.rel_error = rel_error


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class LogValue:
    """A real number stored as sign and log magnitude."""

    log_magnitude: float
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")

    @classmethod
    def from_float(cls, v: float) -> "LogValue":
        if v == 0:
            return cls(-math.inf, 0)
        return cls(math.log(abs(v)), 1 if v > 0 else -1)

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# gamma and beta


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return float(special.gammaln(x))


def log_beta(a: float, b: float) -> float:
    """log B(a, b) for a, b > 0.

    Uses ``scipy.special.betaln``, which avoids the cancellation of the
    three-gamma form when a + b is large.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"log_beta requires a, b > 0, got {a!r}, {b!r}")
    return float(special.betaln(a, b))


# ---------------------------------------------------------------------------
# hypergeometric functions


def _log_euler_f1(ap, b1, b2, cp, x, y, omx=None, omy=None, quad=DEFAULT_QUAD):
    """Vectorised log F1 via the kernel. Returns (logval, relerr, status)."""
    ap = np.atleast_1d(np.asarray(ap, dtype=float))
    shape = np.broadcast(ap, b1, b2, cp, x, y).shape
    arrs = [np.ascontiguousarray(np.broadcast_to(np.asarray(v, dtype=float), shape).ravel())
            for v in (ap, b1, b2, cp, x, y)]
    ap_, b1_, b2_, cp_, x_, y_ = arrs
    omx_ = (1.0 - x_ if omx is None
            else np.ascontiguousarray(np.broadcast_to(np.asarray(omx, dtype=float), shape).ravel()))
    omy_ = (1.0 - y_ if omy is None
            else np.ascontiguousarray(np.broadcast_to(np.asarray(omy, dtype=float), shape).ravel()))
    li, rel, st = kernels.euler_f1_batch(ap_, b1_, b2_, cp_, x_, y_, omx_, omy_,
                                         quad.rel_tol, quad.abs_tol, quad.max_subdivisions)
    lv = li - special.betaln(ap_, cp_ - ap_)
    return lv.reshape(shape), rel.reshape(shape), st.reshape(shape)


def appell_f1(ap: float, b1p: float, b2p: float, cp: float, x: float, y: float,
              quad: QuadratureSpec = DEFAULT_QUAD, *, omx: float | None = None,
              omy: float | None = None) -> LogValue:
    """Appell F1(ap; b1p, b2p; cp; x, y) from its Euler integral.

    Parameters
    ----------
    ap, b1p, b2p, cp : float
        Parameters with cp > ap > 0; b1p and b2p may have any sign.
    x, y : float
        Arguments in [0, 1).
    quad : QuadratureSpec
        Tolerances for the adaptive Gauss-Kronrod kernel.
    omx, omy : float, optional
        Precomputed 1 - x and 1 - y. Pass these when x or y is within
        rounding of 1 so the near-singular factor keeps full precision.

    Returns
    -------
    LogValue
        The value is always positive on this domain.

    Raises
    ------
    DomainError
        Parameter-domain violation.
    QuadratureError
        Subdivision limit reached; carries the best estimate.
    """
    if not (cp > ap > 0):
        raise DomainError("appell_f1 requires cp > ap > 0")
    if not (0 <= x < 1 and 0 <= y < 1):
        raise DomainError("appell_f1 requires x, y in [0, 1)")
    if b1p == 0 and b2p == 0:
        return LogValue(0.0, 1)
    lv, rel, st = _log_euler_f1(ap, b1p, b2p, cp, x, y, omx, omy, quad)
    val = LogValue(float(lv[0]), 1)
    if st[0] != 0:
        raise QuadratureError("appell_f1 quadrature did not converge", val, float(rel[0]))
    return val


def gauss_2f1(a0: float, b0: float, c0: float, z: float,
              quad: QuadratureSpec = DEFAULT_QUAD) -> LogValue:
    """Gauss 2F1(a0, b0; c0; z) from its Euler integral, for c0 > b0 > 0.

    The integral representation converges for every z < 1, so the
    function accepts that range; the prior-of-w moments only need z <= 0.
    """
    if not (c0 > b0 > 0):
        raise DomainError("gauss_2f1 requires c0 > b0 > 0")
    if not z < 1:
        raise DomainError("gauss_2f1 requires z < 1")
    if z == 0 or a0 == 0:
        return LogValue(0.0, 1)
    lv, rel, st = _log_euler_f1(b0, a0, 0.0, c0, z, 0.0, None, None, quad)
    val = LogValue(float(lv[0]), 1)
    if st[0] != 0:
        raise QuadratureError("gauss_2f1 quadrature did not converge", val, float(rel[0]))
    return val


def kummer_m(a: float, b: float, z: float, quad: QuadratureSpec = DEFAULT_QUAD) -> LogValue:
    """Kummer M(a, b, z) for b > a > 0 via its Euler integral.

    Positive z goes through Kummer's transformation M(a, b, z) = e^z M(b-a, b, -z)
    so the integrand is never exponentially growing.
    """
    if not (b > a > 0):
        raise DomainError("kummer_m requires b > a > 0")
    if z == 0:
        return LogValue(0.0, 1)
    if z > 0:
        inner = kummer_m(b - a, b, -z, quad)
        return LogValue(z + inner.log_magnitude, 1)

    def fn(t):
        return (a - 1) * math.log(t) + (b - a - 1) * math.log1p(-t) + z * t

    li = integrate_log(fn, 0.0, 1.0, quad)
    return LogValue(li.log_magnitude - log_beta(a, b - a), 1)


# ---------------------------------------------------------------------------
# generic log-domain quadrature

_CUTOFF = 80.0


def _transform(lo: float, hi: float):
    """Map u in R onto (lo, hi); returns x(u) and log|dx/du|."""
    if math.isinf(lo) and math.isinf(hi):
        return (lambda u: u), (lambda u: 0.0)
    if math.isinf(hi):
        return (lambda u: lo + math.exp(u)), (lambda u: u)
    if math.isinf(lo):
        return (lambda u: hi - math.exp(u)), (lambda u: u)
    w = hi - lo

    def x_of(u):
        if u >= 0:
            e = math.exp(-u)
            return lo + w / (1.0 + e)
        e = math.exp(u)
        return lo + w * e / (1.0 + e)

    def ljac(u):
        # log of w * sigma(u) * sigma(-u)
        return math.log(w) - abs(u) - 2.0 * math.log1p(math.exp(-abs(u)))

    return x_of, ljac


def integrate_log(fn: Callable[[float], float], lo: float, hi: float,
                  quad: QuadratureSpec = DEFAULT_QUAD) -> LogValue:
    """log of the integral of exp(fn(x)) over (lo, hi).

    The interval is mapped onto the real line (logit for finite ends, log
    for a half-line), the maximum of the transformed log-integrand is
    located and subtracted, the region where it lies within ``80`` nats of
    the maximum is bracketed, and the remaining integral is split at the
    mode and handed to QUADPACK. Endpoints are never evaluated.

    Parameters
    ----------
    fn : callable
        Log-integrand, finite on the open interval.
    lo, hi : float
        Limits with lo < hi; either may be infinite.
    quad : QuadratureSpec

    Returns
    -------
    LogValue
    """
    if not lo < hi:
        raise DomainError("integrate_log requires lo < hi")
    x_of, ljac = _transform(lo, hi)

    def h(u):
        try:
            x = x_of(u)
        except OverflowError:
            return -math.inf
        if not (lo < x < hi):
            return -math.inf
        try:
            v = fn(x)
        except OverflowError:
            return -math.inf
        if math.isnan(v):
            return -math.inf
        return v + ljac(u)

    # coarse scan to locate the mode
    if math.isinf(lo) and math.isinf(hi):
        grid = np.concatenate([-np.logspace(6, -3, 200), [0.0], np.logspace(-3, 6, 200)])
    elif math.isinf(lo) or math.isinf(hi):
        # a half-line mode can sit anywhere up to exp(700)
        grid = np.concatenate([np.linspace(-60.0, 60.0, 481), np.linspace(64.0, 700.0, 160)])
    else:
        grid = np.linspace(-60.0, 60.0, 481)
    vals = np.array([h(u) for u in grid])
    if not np.any(np.isfinite(vals)):
        raise QuadratureError("integrand is -inf on the whole scan", LogValue(-math.inf, 0), math.inf)
    i = int(np.nanargmax(vals))
    a_ = grid[max(i - 1, 0)]
    b_ = grid[min(i + 1, len(grid) - 1)]
    if b_ > a_:
        res = optimize.minimize_scalar(lambda u: -h(u), bounds=(a_, b_), method="bounded",
                                       options={"xatol": 1e-10 * (1 + abs(grid[i]))})
        um = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    else:
        um = float(grid[i])
    hmax = h(um)

    def edge(direction):
        d = 0.5
        u = um
        while d < 1e7:
            u = um + direction * d
            if h(u) < hmax - _CUTOFF:
                return u
            d *= 1.5
        return u

    ulo, uhi = edge(-1.0), edge(1.0)

    def f(u):
        return math.exp(h(u) - hmax)

    total = 0.0
    err = 0.0
    converged = True
    for a, b in ((ulo, um), (um, uhi)):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                r, e = integrate.quad(f, a, b, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
                                      limit=quad.max_subdivisions)
            except integrate.IntegrationWarning:
                converged = False
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    r, e = integrate.quad(f, a, b, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
                                          limit=quad.max_subdivisions)
        total += r
        err += e
    if not total > 0:
        raise QuadratureError("non-positive integral estimate", LogValue(-math.inf, 0), math.inf)
    out = LogValue(hmax + math.log(total), 1)
    if not converged and err > max(quad.abs_tol, quad.rel_tol * total) * 10:
        raise QuadratureError("integrate_log did not converge", out, err / total)
    return out


def laplace_log(fn: Callable[[float], float], lo: float, hi: float) -> LogValue:
    """Laplace approximation to log of the integral of exp(fn) over (lo, hi).

    Applied on the same unbounded scale as ``integrate_log``.
    """
    x_of, ljac = _transform(lo, hi)

    def h(u):
        x = x_of(u)
        if not (lo < x < hi):
            return -math.inf
        return fn(x) + ljac(u)

    res = optimize.minimize_scalar(lambda u: -h(u), bracket=(-1.0, 1.0))
    um = float(res.x)
    hm = h(um)
    step = 1e-4 * (1.0 + abs(um))
    d2 = (h(um + step) - 2.0 * hm + h(um - step)) / step ** 2
    if not d2 < 0:
        raise QuadratureError("Laplace approximation: non-negative curvature",
                              LogValue(hm, 1), math.inf)
    return LogValue(hm + 0.5 * math.log(2.0 * math.pi / -d2), 1)


def logsumexp(v) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return -math.inf
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))
