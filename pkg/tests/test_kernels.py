import itertools

import numpy as np
import pytest

from pepselect import _pykernels, kernels

try:
    from pepselect import _ckernels
except ImportError:  # pragma: no cover - compiled extension missing
    _ckernels = None


def _f1_inputs(m, seed=0):
    rng = np.random.default_rng(seed)
    ap = rng.uniform(0.3, 30, m)
    cp = ap + rng.uniform(0.3, 30, m)
    b1 = rng.uniform(-5, 30, m)
    b2 = rng.uniform(-5, 5, m)
    omx = 10 ** rng.uniform(-12, 0, m)
    omy = rng.uniform(0.05, 1, m)
    return ap, b1, b2, cp, 1 - omx, 1 - omy, omx, omy


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
class TestBackendsAgree:
    def test_f1_batch(self):
        args = _f1_inputs(60)
        c, crel, cst = _ckernels.euler_f1_batch(*args, 1e-10, 1e-12, 200)
        p, prel, pst = _pykernels.euler_f1_batch(*args, 1e-10, 1e-12, 200)
        assert np.all(cst == 0) and np.all(pst == 0)
        np.testing.assert_allclose(c, p, rtol=1e-10, atol=1e-10)

    def test_rss(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((30, 7))
        X -= X.mean(axis=0)
        y = rng.standard_normal(30)
        y -= y.mean()
        G, c = X.T @ X, X.T @ y
        rc, sc = _ckernels.enumerate_rss(G, c, y @ y)
        rp, sp = _pykernels.enumerate_rss(G, c, y @ y)
        np.testing.assert_array_equal(sc, sp)
        np.testing.assert_allclose(rc, rp, rtol=1e-12)

    def test_selected_backend(self):
        assert kernels.BACKEND == "cython"


def test_rss_brute_force():
    rng = np.random.default_rng(5)
    n, p = 25, 5
    X = rng.standard_normal((n, p))
    X -= X.mean(axis=0)
    y = rng.standard_normal(n)
    y -= y.mean()
    rss, st = kernels.enumerate_rss(X.T @ X, X.T @ y, y @ y)
    assert rss.shape == (2 ** p,)
    for mask in range(2 ** p):
        cols = [j for j in range(p) if mask >> j & 1]
        if cols:
            b = np.linalg.lstsq(X[:, cols], y, rcond=None)[0]
            r = y - X[:, cols] @ b
        else:
            r = y
        assert st[mask] == 0
        assert rss[mask] == pytest.approx(r @ r, rel=1e-10)


def test_rss_flags_collinear_subtrees():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((20, 3))
    X[:, 2] = X[:, 0] - X[:, 1]
    X -= X.mean(axis=0)
    y = rng.standard_normal(20)
    rss, st = kernels.enumerate_rss(X.T @ X, X.T @ y, y @ y)
    for mask in range(8):
        expect_bad = mask == 0b111
        assert bool(st[mask]) == expect_bad
    assert np.isnan(rss[0b111])


def test_f1_backend_matches_mpmath_sample():
    mpmath = pytest.importorskip("mpmath")
    for ap, b1, b2, cp, x, y in itertools.islice(zip(*_f1_inputs(5, seed=9)[:6]), 5):
        if x > 1 - 1e-6:
            continue
        li, _, st = kernels.euler_f1_batch(np.array([ap]), np.array([b1]), np.array([b2]),
                                           np.array([cp]), np.array([x]), np.array([y]),
                                           np.array([1 - x]), np.array([1 - y]))
        want = mpmath.log(mpmath.appellf1(ap, b1, b2, cp, x, y) * mpmath.beta(ap, cp - ap))
        assert li[0] == pytest.approx(float(want), rel=1e-9)
