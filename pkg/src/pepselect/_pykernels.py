"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

The algorithms are the same, so results agree with the compiled path to
rounding. Used when the extension is not built or when
``PEPSELECT_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import math

import numpy as np

_XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0])
_WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208980529191, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821])
_WG = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338])

# 21 nodes on [-1, 1] in ascending order with matching weights
_NODES = np.concatenate([-_XGK[:10], [0.0], _XGK[:10][::-1]])
_WK = np.concatenate([_WGK[:10], [_WGK[10]], _WGK[:10][::-1]])
_WGFULL = np.zeros(21)
for _j in range(10):
    if _j % 2 == 1:
        _WGFULL[_j] = _WG[_j // 2]
        _WGFULL[20 - _j] = _WG[_j // 2]

_EPS = 2.220446049250313e-16
_N_INIT = 8
_TAIL_CUT = 40.0


def _softplus(z):
    return np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(-np.abs(z))))


def _softplus_s(z: float) -> float:
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


class _F1:
    __slots__ = ("ap", "q", "b1", "b2", "x", "y", "omx", "omy", "shift")

    def __init__(self, ap, q, b1, b2, x, y, omx, omy):
        self.ap, self.q, self.b1, self.b2 = ap, q, b1, b2
        self.x, self.y, self.omx, self.omy = x, y, omx, omy
        self.shift = 0.0

    def psi(self, z):
        lt = -_softplus(-z)
        lomt = -_softplus(z)
        tau = np.exp(lt)
        omtau = np.exp(lomt)
        r = self.ap * lt + self.q * lomt
        if self.b1 != 0.0:
            r = r - self.b1 * self._log_one_minus(self.x, self.omx, tau, omtau)
        if self.b2 != 0.0:
            r = r - self.b2 * self._log_one_minus(self.y, self.omy, tau, omtau)
        return r

    @staticmethod
    def _log_one_minus(x, omx, tau, omtau):
        if x <= 0.5:
            return np.log1p(-x * tau)
        return np.log(omx + x * omtau)

    @staticmethod
    def _one_minus(x, omx, tau, omtau):
        if x <= 0.5:
            return 1.0 - x * tau
        return omx + x * omtau

    def psi_s(self, z: float) -> float:
        lt = -_softplus_s(-z)
        lomt = -_softplus_s(z)
        tau = math.exp(lt)
        omtau = math.exp(lomt)
        r = self.ap * lt + self.q * lomt
        if self.b1 != 0.0:
            r -= self.b1 * (math.log1p(-self.x * tau) if self.x <= 0.5
                            else math.log(self.omx + self.x * omtau))
        if self.b2 != 0.0:
            r -= self.b2 * (math.log1p(-self.y * tau) if self.y <= 0.5
                            else math.log(self.omy + self.y * omtau))
        return r

    def dpsi(self, z: float) -> float:
        tau = math.exp(-_softplus_s(-z))
        omtau = math.exp(-_softplus_s(z))
        r = self.ap * omtau - self.q * tau
        tt = tau * omtau
        if self.b1 != 0.0:
            r += self.b1 * self.x * tt / self._one_minus(self.x, self.omx, tau, omtau)
        if self.b2 != 0.0:
            r += self.b2 * self.y * tt / self._one_minus(self.y, self.omy, tau, omtau)
        return r


def _mode(P: _F1) -> float:
    lo, hi, step = -1.0, 1.0, 1.0
    while P.dpsi(lo) < 0.0 and lo > -1e4:
        hi = lo
        lo -= step
        step *= 2.0
    step = 1.0
    while P.dpsi(hi) > 0.0 and hi < 1e4:
        lo = hi
        hi += step
        step *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if P.dpsi(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def _edge(P: _F1, z0: float, pmax: float, direction: float) -> float:
    d = 1.0
    z = z0
    while d < 1e5:
        z = z0 + direction * d
        v = P.psi_s(z)
        s = P.dpsi(z) * direction
        if s < 0.0 and v - math.log(-s) < pmax - _TAIL_CUT:
            return z
        if not math.isfinite(v) and v < 0:
            return z
        d *= 1.6
    return z


def _gk21(P: _F1, a: float, b: float):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    lv = P.psi(c + h * _NODES) - P.shift
    f = np.exp(lv)
    resk = float(_WK @ f)
    resg = float(_WGFULL @ f)
    resabs = float(_WK @ np.abs(f)) * abs(h)
    mean = 0.5 * resk
    resasc = float(_WK @ np.abs(f - mean)) * abs(h)
    err = abs((resk - resg) * h)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    if resabs > 1e-290:
        err = max(50.0 * _EPS * resabs, err)
    return resk * h, err, float(lv.max())


def _integrate(P: _F1, rtol: float, atol: float, maxsub: int):
    zm = _mode(P)
    pmax = P.psi_s(zm)
    if not math.isfinite(pmax):
        return math.nan, math.inf, 2
    zlo = _edge(P, zm, pmax, -1.0)
    zhi = _edge(P, zm, pmax, 1.0)
    cap = maxsub + 2 * _N_INIT
    P.shift = pmax
    status = 1
    pr: list[float] = []
    pe: list[float] = []
    for _ in range(3):
        edges = np.concatenate([np.linspace(zlo, zm, _N_INIT + 1),
                                np.linspace(zm, zhi, _N_INIT + 1)[1:]])
        pa = list(edges[:-1])
        pb = list(edges[1:])
        pr, pe = [], []
        vmax = -math.inf
        for a, b in zip(pa, pb):
            r, e, vm = _gk21(P, a, b)
            pr.append(r)
            pe.append(e)
            vmax = max(vmax, vm)
        if vmax > 600.0:
            P.shift += vmax
            continue
        total = sum(pr)
        toterr = sum(pe)
        while True:
            tol = max(atol, rtol * abs(total))
            if toterr <= tol:
                status = 0
                break
            if len(pa) >= cap:
                status = 1
                break
            w = int(np.argmax(pe))
            a, b = pa[w], pb[w]
            m = 0.5 * (a + b)
            r1, e1, v1 = _gk21(P, a, m)
            r2, e2, v2 = _gk21(P, m, b)
            vmax = max(vmax, v1, v2)
            total += r1 + r2 - pr[w]
            toterr += e1 + e2 - pe[w]
            pb[w], pr[w], pe[w] = m, r1, e1
            pa.append(m)
            pb.append(b)
            pr.append(r2)
            pe.append(e2)
        if vmax > 600.0:
            P.shift += vmax
            continue
        break
    total = math.fsum(pr)
    toterr = sum(pe)
    if not (total > 0.0) or not math.isfinite(total):
        return math.nan, math.inf, 2
    return P.shift + math.log(total), toterr / total, status


def euler_f1_batch(ap, b1, b2, cp, x, y, omx, omy, rtol=1e-10, atol=1e-12, maxsub=200):
    """Numpy counterpart of ``_ckernels.euler_f1_batch``."""
    ap = np.asarray(ap, dtype=float)
    n = ap.shape[0]
    out = np.full(n, np.nan)
    rel = np.full(n, np.inf)
    st = np.full(n, 2, dtype=np.int8)
    for i in range(n):
        q = float(cp[i]) - float(ap[i])
        if not (ap[i] > 0.0 and q > 0.0):
            continue
        P = _F1(float(ap[i]), q, float(b1[i]), float(b2[i]), float(x[i]), float(y[i]),
                float(omx[i]), float(omy[i]))
        out[i], rel[i], st[i] = _integrate(P, rtol, atol, maxsub)
    return out, rel, st


def enumerate_rss(G, c, rss0, tol=1e-12):
    """Numpy counterpart of ``_ckernels.enumerate_rss``."""
    G = np.ascontiguousarray(G, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    p = G.shape[0]
    if p > 30:
        raise ValueError("enumeration limited to p <= 30")
    nmod = 1 << p
    rss = np.empty(nmod)
    st = np.zeros(nmod, dtype=np.int8)
    rss[0] = rss0
    L = np.zeros((p + 1, p + 1))
    v = np.zeros(p + 1)
    idx = np.zeros(p + 1, dtype=int)

    def mark(mask, start):
        rss[mask] = np.nan
        st[mask] = 1
        for j in range(start, p):
            mark(mask | (1 << j), j + 1)

    def dfs(start, k, rss_cur, mask):
        for j in range(start, p):
            lk = np.empty(k)
            for i in range(k):
                s = G[idx[i], j]
                for r in range(i):
                    s -= L[i, r] * lk[r]
                lk[i] = s / L[i, i]
            gjj = G[j, j]
            d2 = gjj
            s = c[j]
            for i in range(k):
                d2 -= lk[i] * lk[i]
                s -= lk[i] * v[i]
            m2 = mask | (1 << j)
            if not (d2 > tol * gjj):
                mark(m2, j + 1)
                continue
            d = math.sqrt(d2)
            L[k, :k] = lk
            L[k, k] = d
            vj = s / d
            v[k] = vj
            idx[k] = j
            s = max(rss_cur - vj * vj, 0.0)
            rss[m2] = s
            st[m2] = 0
            if j + 1 < p:
                dfs(j + 1, k + 1, s, m2)

    dfs(0, 0, float(rss0), 0)
    return rss, st
