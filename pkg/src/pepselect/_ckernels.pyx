# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Two routines live here and mirror ``_pykernels`` line by line:

``euler_f1_batch``
    log of the unnormalised Euler integral of the Appell F1 function,
    integrated on the logit scale with adaptive Gauss-Kronrod (10/21).
``enumerate_rss``
    residual sums of squares of every subset of a Gram system by
    depth-first Cholesky appends.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, fabs, sqrt, pow, isfinite, NAN, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double[11] XGK = [
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0]
cdef double[11] WGK = [
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208980529191, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821]
cdef double[5] WG = [
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338]

cdef double EPS = 2.220446049250313e-16
cdef int N_INIT = 8
cdef double TAIL_CUT = 40.0


cdef struct F1Par:
    double ap
    double q
    double b1
    double b2
    double x
    double y
    double omx
    double omy
    double shift


cdef inline double _softplus(double z) nogil:
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _one_minus(double x, double omx, double tau, double omtau) nogil:
    # 1 - x*tau, using the complement when x is close to 1
    if x <= 0.5:
        return 1.0 - x * tau
    return omx + x * omtau


cdef inline double _log_one_minus(double x, double omx, double tau, double omtau) nogil:
    if x <= 0.5:
        return log1p(-x * tau)
    return log(omx + x * omtau)


cdef double _psi(F1Par* P, double z) nogil:
    cdef double lt = -_softplus(-z)
    cdef double lomt = -_softplus(z)
    cdef double tau = exp(lt)
    cdef double omtau = exp(lomt)
    cdef double r = P.ap * lt + P.q * lomt
    if P.b1 != 0.0:
        r -= P.b1 * _log_one_minus(P.x, P.omx, tau, omtau)
    if P.b2 != 0.0:
        r -= P.b2 * _log_one_minus(P.y, P.omy, tau, omtau)
    return r


cdef double _dpsi(F1Par* P, double z) nogil:
    cdef double tau = exp(-_softplus(-z))
    cdef double omtau = exp(-_softplus(z))
    cdef double r = P.ap * omtau - P.q * tau
    cdef double tt = tau * omtau
    if P.b1 != 0.0:
        r += P.b1 * P.x * tt / _one_minus(P.x, P.omx, tau, omtau)
    if P.b2 != 0.0:
        r += P.b2 * P.y * tt / _one_minus(P.y, P.omy, tau, omtau)
    return r


cdef double _mode(F1Par* P) nogil:
    cdef double lo = -1.0, hi = 1.0, step = 1.0, mid
    cdef int it
    while _dpsi(P, lo) < 0.0 and lo > -1e4:
        hi = lo
        lo -= step
        step *= 2.0
    step = 1.0
    while _dpsi(P, hi) > 0.0 and hi < 1e4:
        lo = hi
        hi += step
        step *= 2.0
    for it in range(200):
        mid = 0.5 * (lo + hi)
        if _dpsi(P, mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * (1.0 + fabs(mid)):
            break
    return 0.5 * (lo + hi)


cdef double _edge(F1Par* P, double z0, double pmax, double direction) nogil:
    # step away from the mode until the remaining tail is negligible
    cdef double d = 1.0, z = z0, v, s
    while d < 1e5:
        z = z0 + direction * d
        v = _psi(P, z)
        s = _dpsi(P, z) * direction
        if s < 0.0 and v - log(-s) < pmax - TAIL_CUT:
            return z
        if not isfinite(v) and v < 0:
            return z
        d *= 1.6
    return z


cdef void _gk21(F1Par* P, double a, double b, double* res, double* err,
                double* vmax) nogil:
    cdef double c = 0.5 * (a + b), h = 0.5 * (b - a)
    cdef double fc, f1, f2, lv1, lv2, dx
    cdef double resk, resg = 0.0, resabs, resasc, mean
    cdef double[21] fv
    cdef int j
    lv1 = _psi(P, c) - P.shift
    if lv1 > vmax[0]:
        vmax[0] = lv1
    fc = exp(lv1)
    resk = WGK[10] * fc
    resabs = fabs(resk)
    fv[10] = fc
    for j in range(10):
        dx = h * XGK[j]
        lv1 = _psi(P, c - dx) - P.shift
        lv2 = _psi(P, c + dx) - P.shift
        if lv1 > vmax[0]:
            vmax[0] = lv1
        if lv2 > vmax[0]:
            vmax[0] = lv2
        f1 = exp(lv1)
        f2 = exp(lv2)
        fv[j] = f1
        fv[20 - j] = f2
        resk += WGK[j] * (f1 + f2)
        resabs += WGK[j] * (fabs(f1) + fabs(f2))
        if j % 2 == 1:
            resg += WG[j // 2] * (f1 + f2)
    mean = 0.5 * resk
    resasc = WGK[10] * fabs(fc - mean)
    for j in range(10):
        resasc += WGK[j] * (fabs(fv[j] - mean) + fabs(fv[20 - j] - mean))
    res[0] = resk * h
    resabs *= fabs(h)
    resasc *= fabs(h)
    err[0] = fabs((resk - resg) * h)
    if resasc != 0.0 and err[0] != 0.0:
        err[0] = resasc * min(1.0, pow(200.0 * err[0] / resasc, 1.5))
    if resabs > 1e-290:
        err[0] = max(50.0 * EPS * resabs, err[0])


cdef int _integrate(F1Par* P, double rtol, double atol, int maxsub,
                    double* out_log, double* out_relerr) nogil:
    cdef double zm = _mode(P)
    cdef double pmax = _psi(P, zm)
    cdef double zlo, zhi, total, toterr, tol, vmax, a, b, m, r1, e1, r2, e2
    cdef int npan, i, worst, restart, cap, status
    cdef double* pa
    cdef double* pb
    cdef double* pr
    cdef double* pe
    if not isfinite(pmax):
        return 2
    zlo = _edge(P, zm, pmax, -1.0)
    zhi = _edge(P, zm, pmax, 1.0)
    cap = maxsub + 2 * N_INIT
    pa = <double*> malloc(cap * sizeof(double))
    pb = <double*> malloc(cap * sizeof(double))
    pr = <double*> malloc(cap * sizeof(double))
    pe = <double*> malloc(cap * sizeof(double))
    P.shift = pmax
    status = 1
    for restart in range(3):
        vmax = -INFINITY
        npan = 0
        for i in range(N_INIT):
            pa[npan] = zlo + (zm - zlo) * i / N_INIT
            pb[npan] = zlo + (zm - zlo) * (i + 1) / N_INIT
            npan += 1
        for i in range(N_INIT):
            pa[npan] = zm + (zhi - zm) * i / N_INIT
            pb[npan] = zm + (zhi - zm) * (i + 1) / N_INIT
            npan += 1
        total = 0.0
        toterr = 0.0
        for i in range(npan):
            _gk21(P, pa[i], pb[i], &pr[i], &pe[i], &vmax)
            total += pr[i]
            toterr += pe[i]
        if vmax > 600.0:
            P.shift += vmax
            continue
        while True:
            tol = max(atol, rtol * fabs(total))
            if toterr <= tol:
                status = 0
                break
            if npan >= cap:
                status = 1
                break
            worst = 0
            for i in range(1, npan):
                if pe[i] > pe[worst]:
                    worst = i
            a = pa[worst]
            b = pb[worst]
            m = 0.5 * (a + b)
            _gk21(P, a, m, &r1, &e1, &vmax)
            _gk21(P, m, b, &r2, &e2, &vmax)
            total += r1 + r2 - pr[worst]
            toterr += e1 + e2 - pe[worst]
            pa[worst] = a
            pb[worst] = m
            pr[worst] = r1
            pe[worst] = e1
            pa[npan] = m
            pb[npan] = b
            pr[npan] = r2
            pe[npan] = e2
            npan += 1
        if vmax > 600.0:
            P.shift += vmax
            continue
        # re-sum to shed accumulated drift from incremental updates
        total = 0.0
        toterr = 0.0
        for i in range(npan):
            total += pr[i]
            toterr += pe[i]
        break
    free(pa)
    free(pb)
    free(pr)
    free(pe)
    if not (total > 0.0) or not isfinite(total):
        return 2
    out_log[0] = P.shift + log(total)
    out_relerr[0] = toterr / total
    return status


def euler_f1_batch(const double[::1] ap, const double[::1] b1, const double[::1] b2,
                   const double[::1] cp, const double[::1] x, const double[::1] y,
                   const double[::1] omx, const double[::1] omy,
                   double rtol=1e-10, double atol=1e-12, int maxsub=200):
    """Log Euler integral of Appell F1 for arrays of parameters.

    Returns
    -------
    logint : ndarray
        log of the integral of t^(ap-1) (1-t)^(cp-ap-1) (1-xt)^-b1 (1-yt)^-b2.
    relerr : ndarray
        Estimated relative error of the integral.
    status : ndarray of int8
        0 converged, 1 subdivision limit reached, 2 invalid or non-finite.
    """
    cdef Py_ssize_t n = ap.shape[0], i
    out = np.empty(n, dtype=np.float64)
    rel = np.empty(n, dtype=np.float64)
    st = np.empty(n, dtype=np.int8)
    cdef double[::1] ov = out
    cdef double[::1] rv = rel
    cdef signed char[::1] sv = st
    cdef F1Par P
    cdef double lv, re
    cdef int s
    with nogil:
        for i in range(n):
            P.ap = ap[i]
            P.q = cp[i] - ap[i]
            P.b1 = b1[i]
            P.b2 = b2[i]
            P.x = x[i]
            P.y = y[i]
            P.omx = omx[i]
            P.omy = omy[i]
            P.shift = 0.0
            lv = NAN
            re = INFINITY
            if P.ap > 0.0 and P.q > 0.0:
                s = _integrate(&P, rtol, atol, maxsub, &lv, &re)
            else:
                s = 2
            ov[i] = lv
            rv[i] = re
            sv[i] = s
    return out, rel, st


# ---------------------------------------------------------------------------
# subset enumeration


cdef struct DfsState:
    int p
    double* G
    double* c
    double* L
    double* v
    int* idx
    double* rss
    signed char* status
    double tol


cdef void _mark_subtree(DfsState* S, long mask, int start) nogil:
    # mask and all its extensions by covariates >= start are rank deficient
    cdef int j
    S.rss[mask] = NAN
    S.status[mask] = 1
    for j in range(start, S.p):
        _mark_subtree(S, mask | (1L << j), j + 1)


cdef void _dfs(DfsState* S, int start, int k, double rss_cur, long mask) nogil:
    cdef int p = S.p, j, i, r
    cdef double s, d2, d, vj, gjj
    cdef double* Lk = S.L + k * p
    for j in range(start, p):
        # forward substitution: L[:k,:k] l = G[idx[:k], j]
        for i in range(k):
            s = S.G[S.idx[i] * p + j]
            for r in range(i):
                s -= S.L[i * p + r] * Lk[r]
            Lk[i] = s / S.L[i * p + i]
        gjj = S.G[j * p + j]
        d2 = gjj
        s = S.c[j]
        for i in range(k):
            d2 -= Lk[i] * Lk[i]
            s -= Lk[i] * S.v[i]
        if not (d2 > S.tol * gjj):
            _mark_subtree(S, mask | (1L << j), j + 1)
            continue
        d = sqrt(d2)
        Lk[k] = d
        vj = s / d
        S.v[k] = vj
        S.idx[k] = j
        s = rss_cur - vj * vj
        if s < 0.0:
            s = 0.0
        S.rss[mask | (1L << j)] = s
        S.status[mask | (1L << j)] = 0
        if j + 1 < p:
            _dfs(S, j + 1, k + 1, s, mask | (1L << j))


def enumerate_rss(const double[:, ::1] G, const double[::1] c, double rss0, double tol=1e-12):
    """Residual sums of squares of all 2^p subsets.

    Parameters
    ----------
    G : (p, p) array
        Gram matrix of the covariates after projecting out the reference design.
    c : (p,) array
        Cross products of the projected covariates with the projected response.
    rss0 : float
        Residual sum of squares of the reference model.
    tol : float
        A column whose squared pivot falls below ``tol * G[j, j]`` marks the
        subset (and every superset reached from it) rank deficient.

    Returns
    -------
    rss : ndarray, length 2^p, indexed by bitmask (NaN where deficient)
    status : ndarray of int8 (0 ok, 1 rank deficient)
    """
    cdef int p = G.shape[0]
    if p > 30:
        raise ValueError("enumeration limited to p <= 30")
    cdef long nmod = 1L << p
    rss = np.empty(nmod, dtype=np.float64)
    st = np.zeros(nmod, dtype=np.int8)
    Gc = np.array(G, dtype=np.float64, order="C")
    cc = np.array(c, dtype=np.float64)
    Lb = np.zeros((p + 1) * (p + 1), dtype=np.float64)
    vb = np.zeros(p + 1, dtype=np.float64)
    ib = np.zeros(p + 1, dtype=np.intc)
    cdef double[::1] rv = rss
    cdef signed char[::1] sv = st
    cdef double[:, ::1] Gv = Gc
    cdef double[::1] cv = cc
    cdef double[::1] Lv = Lb
    cdef double[::1] vv = vb
    cdef int[::1] iv = ib
    cdef DfsState S
    S.p = p
    S.G = &Gv[0, 0]
    S.c = &cv[0]
    S.L = &Lv[0]
    S.v = &vv[0]
    S.idx = &iv[0]
    S.rss = &rv[0]
    S.status = &sv[0]
    S.tol = tol
    rv[0] = rss0
    with nogil:
        _dfs(&S, 0, 0, rss0, 0)
    return rss, st
