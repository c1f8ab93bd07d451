import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pepselect.data import (DataError, Dataset, ModelId, RankDeficientError, Reference, centre,
                            load_csv, model_matrices, ols_stats, projected_system, ve_inverse,
                            write_csv)
from pepselect.simgen import ScenarioConfig, generate

from conftest import make_dataset


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        ds = load_csv(_write(tmp_path, "y,x1,x2\n1,2,3\n4,5,7\n7,8,8\n"), "y")
        assert (ds.n, ds.p) == (3, 2)
        assert ds.names == ("x1", "x2")
        np.testing.assert_array_equal(ds.y, [1, 4, 7])
        assert not ds.centred

    def test_response_not_first(self, tmp_path):
        ds = load_csv(_write(tmp_path, "a,resp,b\n1,2,3\n4,5,7\n7,8,8\n"), "resp")
        np.testing.assert_array_equal(ds.y, [2, 5, 8])
        assert ds.names == ("a", "b")

    def test_bad_cell_names_row_and_column(self, tmp_path):
        f = _write(tmp_path, "y,x1,x2\n1,2,3\n4,oops,5\n")
        with pytest.raises(DataError, match=r"row 2, column 'x1'"):
            load_csv(f, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "none.csv", "y")

    def test_missing_column(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(_write(tmp_path, "y,x\n1,2\n3,4\n"), "z")

    def test_nonfinite_rejected(self, tmp_path):
        with pytest.raises(DataError, match="non-finite"):
            load_csv(_write(tmp_path, "y,x\n1,2\n3,inf\n"), "y")

    def test_constant_column_warns_and_is_kept(self, tmp_path):
        with pytest.warns(UserWarning, match="constant"):
            ds = load_csv(_write(tmp_path, "y,x,c\n1,2,5\n3,4,5\n2,7,5\n"), "y")
        assert ds.p == 2
        assert ds.constant_columns == ("c",)

    def test_round_trip_is_bit_exact(self, tmp_path):
        ds = generate(ScenarioConfig(1, n=50, p=15, replicates=1, seed=11), 0)
        f = tmp_path / "s1.csv"
        write_csv(ds, f)
        back = load_csv(f, "y")
        assert back.names == ds.names
        assert np.array_equal(back.y, ds.y)
        assert np.array_equal(back.X, ds.X)


class TestDataset:
    def test_rejects_short(self):
        with pytest.raises(DataError):
            Dataset([1.0], [[1.0]])

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            Dataset([1.0, np.nan], [[1.0], [2.0]])

    def test_default_names(self):
        assert Dataset([1.0, 2.0, 3.0], np.eye(3)).names == ("X1", "X2", "X3")


class TestCentre:
    def test_simple_column(self):
        ds = centre(Dataset([1.0, 2.0, 4.0], [[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(ds.X[:, 0], [-1, 0, 1])
        np.testing.assert_array_equal(ds.y, [1, 2, 4])
        assert ds.centred

    def test_idempotent(self):
        ds = centre(make_dataset())
        again = centre(ds)
        np.testing.assert_allclose(again.X, ds.X, atol=1e-12)

    def test_random_means_vanish(self):
        ds = centre(make_dataset(n=50, p=6, seed=3))
        scale = np.abs(ds.X).max(axis=0)
        assert np.all(np.abs(ds.X.mean(axis=0)) < 1e-10 * scale)


class TestModelId:
    def test_bits_round_trip(self):
        m = ModelId.from_bits("10110")
        assert m.included == (0, 2, 3)
        assert m.size == 3
        assert m.bits == "10110"
        assert ModelId.from_indices([0, 2, 3], 5) == m

    def test_flip(self):
        assert ModelId.null(3).flip(1).bits == "010"

    def test_mask_overflow(self):
        with pytest.raises(ValueError):
            ModelId(8, 3)


class TestOlsStats:
    def test_null_model(self, ds4):
        s = ols_stats(ds4, ModelId.null(4))
        assert s.r2 == 0.0
        assert s.r10 == 1.0
        assert (s.k0, s.k1) == (1, 1)

    def test_perfect_fit(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((20, 2))
        ds = Dataset(3 + X @ [1.0, -2.0], X)
        s = ols_stats(ds, ModelId.full(2))
        assert s.rss < 1e-20
        assert s.r2 == pytest.approx(1.0, abs=1e-12)

    def test_normal_equations_oracle(self):
        ds = make_dataset(n=30, p=5, seed=5)
        m = ModelId.from_indices([0, 2, 4], 5)
        s = ols_stats(ds, m)
        X1 = np.column_stack([np.ones(ds.n), ds.X[:, [0, 2, 4]]])
        b = np.linalg.solve(X1.T @ X1, X1.T @ ds.y)
        np.testing.assert_allclose(s.beta_hat, b, rtol=1e-8)
        r = ds.y - X1 @ b
        assert s.rss == pytest.approx(r @ r, rel=1e-10)
        tss = np.sum((ds.y - ds.y.mean()) ** 2)
        assert s.r2 == pytest.approx(1 - (r @ r) / tss, rel=1e-10)
        assert 0 < s.r10 <= 1

    def test_rank_deficiency_detected(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((15, 2))
        X = np.column_stack([X, X[:, 0] + 2 * X[:, 1]])
        with pytest.raises(RankDeficientError):
            ols_stats(Dataset(rng.standard_normal(15), X), ModelId.full(3))

    def test_k1_not_below_n(self):
        rng = np.random.default_rng(3)
        ds = Dataset(rng.standard_normal(4), rng.standard_normal((4, 3)))
        with pytest.raises(RankDeficientError):
            ols_stats(ds, ModelId.full(3))

    def test_reference_columns(self):
        ds = make_dataset(n=30, p=4, seed=8)
        ref = Reference((1,))
        s = ols_stats(ds, ModelId.from_indices([0], 4), ref)
        X0 = np.column_stack([np.ones(ds.n), ds.X[:, 1]])
        r0 = ds.y - X0 @ np.linalg.lstsq(X0, ds.y, rcond=None)[0]
        assert s.k0 == 2 and s.k1 == 3
        assert s.r10 == pytest.approx(s.rss / (r0 @ r0), rel=1e-12)
        with pytest.raises(ValueError):
            ols_stats(ds, ModelId.from_indices([1], 4), ref)


class TestVeInverse:
    def test_centred_equals_gram(self, ds4c):
        m = ModelId.from_indices([0, 3], 4)
        Xe = ds4c.X[:, [0, 3]]
        np.testing.assert_allclose(ve_inverse(ds4c, m), Xe.T @ Xe, rtol=1e-10)

    def test_single_covariate_is_projected_norm(self, ds4):
        x = ds4.X[:, 2]
        v = ve_inverse(ds4, ModelId.from_indices([2], 4))
        assert v.shape == (1, 1)
        assert v[0, 0] == pytest.approx(np.sum((x - x.mean()) ** 2), rel=1e-12)

    def test_dense_projector_oracle(self):
        ds = make_dataset(n=25, p=5, seed=9)
        ref = Reference((4,))
        m = ModelId.from_indices([0, 1, 3], 5)
        X0 = np.column_stack([np.ones(ds.n), ds.X[:, 4]])
        P0 = X0 @ np.linalg.inv(X0.T @ X0) @ X0.T
        Xe = ds.X[:, [0, 1, 3]]
        oracle = Xe.T @ (np.eye(ds.n) - P0) @ Xe
        got = model_matrices(ds, m, ref).ve_inv
        np.testing.assert_allclose(got, oracle, rtol=1e-10, atol=1e-10)
        assert np.all(np.linalg.eigvalsh(got) > 0)


class TestInvariances:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
    def test_permuting_columns(self, seed, perm_seed):
        ds = make_dataset(n=25, p=4, seed=seed)
        perm = np.random.default_rng(perm_seed).permutation(4)
        dp = Dataset(ds.y, ds.X[:, perm])
        m = ModelId.from_indices([0, 1, 3], 4)
        inv = np.argsort(perm)
        mp = ModelId.from_indices([inv[j] for j in m.included], 4)
        a, b = ols_stats(ds, m), ols_stats(dp, mp)
        assert b.rss == pytest.approx(a.rss, rel=1e-10)
        assert b.r10 == pytest.approx(a.r10, rel=1e-10)
        # coefficients follow their columns
        order_a = dict(zip(m.included, a.beta_hat[1:]))
        order_b = dict(zip([perm[j] for j in mp.included], b.beta_hat[1:]))
        for j in m.included:
            assert order_b[j] == pytest.approx(order_a[j], rel=1e-9, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000),
           c=st.floats(1e-3, 1e3).flatmap(lambda v: st.sampled_from([v, -v])))
    def test_rescaling_a_column(self, seed, c):
        ds = make_dataset(n=25, p=3, seed=seed)
        X = ds.X.copy()
        X[:, 1] *= c
        m = ModelId.full(3)
        a, b = ols_stats(ds, m), ols_stats(Dataset(ds.y, X), m)
        assert b.rss == pytest.approx(a.rss, rel=1e-8)
        assert b.r10 == pytest.approx(a.r10, rel=1e-8)
        assert b.beta_hat[2] == pytest.approx(a.beta_hat[2] / c, rel=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3))
    def test_rescaling_response(self, seed, c):
        ds = make_dataset(n=25, p=3, seed=seed)
        m = ModelId.from_indices([0, 2], 3)
        a, b = ols_stats(ds, m), ols_stats(Dataset(c * ds.y, ds.X), m)
        assert b.rss == pytest.approx(c * c * a.rss, rel=1e-8)
        assert b.r10 == pytest.approx(a.r10, rel=1e-8)
        assert b.r2 == pytest.approx(a.r2, rel=1e-8)


def test_projected_system_matches_ols():
    ds = make_dataset(n=30, p=4, seed=12)
    free, G, c, rss0, _ = projected_system(ds)
    assert free == (0, 1, 2, 3)
    idx = [0, 2]
    rss = rss0 - c[idx] @ np.linalg.solve(G[np.ix_(idx, idx)], c[idx])
    assert rss == pytest.approx(ols_stats(ds, ModelId.from_indices(idx, 4)).rss, rel=1e-10)
