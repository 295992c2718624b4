import numpy as np
import pytest

from agrishare.errors import AgriShareError, FingerprintMismatch
from agrishare.ldp import NoisyMatrix
from agrishare.sandbox import (
    AggregatedStore,
    ParticipantShare,
    assign_rows,
    kmeans_assign,
    kmeans_fit,
    kmeans_fit_rows,
    load_store,
    market_similarity_distribution,
    market_similarity_profile,
    recommend_collaborators,
    save_store,
    select_collaborators,
    stacked_rows,
    submit_share,
)

from oracles import exhaustive_kmeans

FP = "f" * 16


def _share(pid, rows, eps=25.0, fp=FP):
    return ParticipantShare(pid, NoisyMatrix(rows=np.asarray(rows, dtype=np.float64),
                                             epsilon=eps, model_fingerprint=fp))


def _store(shares):
    store = AggregatedStore(model_fingerprint=FP)
    for s in shares:
        submit_share(store, s)
    return store


class TestSubmit:
    def test_single_share(self):
        store = _store([_share("a", np.zeros((5, 2)))])
        assert store.total_rows == 5
        assert store.participant_ids == ["a"]

    def test_duplicate_rejected_store_unchanged(self):
        store = _store([_share("a", np.zeros((5, 2)))])
        with pytest.raises(AgriShareError, match="duplicate"):
            submit_share(store, _share("a", np.ones((3, 2))))
        assert store.total_rows == 5

    def test_fingerprint_mismatch(self):
        store = _store([_share("a", np.zeros((5, 2)))])
        with pytest.raises(FingerprintMismatch):
            submit_share(store, _share("b", np.zeros((2, 2)), fp="0" * 16))

    def test_row_conservation(self):
        sizes = [3, 7, 2, 9, 4]
        store = _store([_share(f"p{i}", np.zeros((n, 2))) for i, n in enumerate(sizes)])
        assert store.total_rows == sum(sizes)
        rows, prov = stacked_rows(store)
        assert rows.shape[0] == sum(sizes)
        assert len(prov) == sum(sizes)


class TestKMeans:
    def test_two_separated_clouds(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((40, 2)) * 0.1
        b = rng.standard_normal((40, 2)) * 0.1 + 100.0
        store = _store([_share("a", a), _share("b", b)])
        model = kmeans_fit(store, 2, seed=1)
        cents = model.centroids[np.argsort(model.centroids[:, 0])]
        assert np.allclose(cents[0], a.mean(axis=0), atol=1e-6)
        assert np.allclose(cents[1], b.mean(axis=0), atol=1e-6)

    def test_single_cluster_closed_form(self):
        rng = np.random.default_rng(3)
        rows = rng.standard_normal((30, 2))
        model = kmeans_fit_rows(rows, 1, seed=0)
        assert np.allclose(model.centroids[0], rows.mean(axis=0), atol=1e-9)
        expected = float(((rows - rows.mean(axis=0)) ** 2).sum())
        assert abs(model.inertia - expected) <= 1e-9 * expected

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(7)
        pts = np.vstack([rng.standard_normal((4, 2)) * 0.4 + center
                         for center in ([0, 0], [5, 0], [2.5, 4])])
        _, oracle_assign = exhaustive_kmeans(pts, 3)
        model = kmeans_fit_rows(pts, 3, seed=5)
        ours = assign_rows(model, pts)
        # compare partitions up to label permutation
        oracle_parts = {frozenset(np.flatnonzero(oracle_assign == j).tolist()) for j in range(3)}
        our_parts = {frozenset(np.flatnonzero(ours == j).tolist()) for j in range(3)}
        assert oracle_parts == our_parts

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((60, 2))
        m1 = kmeans_fit_rows(rows, 4, seed=2)
        m2 = kmeans_fit_rows(rows, 4, seed=2)
        assert np.array_equal(m1.centroids, m2.centroids)
        assert m1.inertia == m2.inertia

    def test_too_few_rows(self):
        with pytest.raises(AgriShareError):
            kmeans_fit_rows(np.zeros((2, 2)), 3, seed=0)


class TestAssign:
    def test_point_on_centroid(self):
        rng = np.random.default_rng(1)
        rows = rng.standard_normal((30, 2))
        model = kmeans_fit_rows(rows, 3, seed=0)
        assert kmeans_assign(model, model.centroids[2]) == 2

    def test_tie_breaks_to_lowest_index(self):
        from agrishare.sandbox import ClusterModel
        model = ClusterModel(centroids=np.array([[0.0, 0.0], [2.0, 0.0]]),
                             c=2, inertia=0.0, seed=0)
        assert kmeans_assign(model, np.array([1.0, 0.0])) == 0

    def test_matches_argmin_oracle(self):
        rng = np.random.default_rng(4)
        rows = rng.standard_normal((200, 2))
        model = kmeans_fit_rows(rows, 5, seed=1)
        pts = rng.standard_normal((1000, 2))
        ours = assign_rows(model, pts)
        for i, p in enumerate(pts):
            d = [float(((p - c) ** 2).sum()) for c in model.centroids]
            assert ours[i] == int(np.argmin(d))

    def test_dimension_checked(self):
        rng = np.random.default_rng(1)
        model = kmeans_fit_rows(rng.standard_normal((20, 2)), 2, seed=0)
        with pytest.raises(AgriShareError):
            kmeans_assign(model, np.zeros(3))


class TestRecommend:
    def _setup(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((25, 2))
        b = rng.standard_normal((25, 2)) + 8.0
        store = _store([_share("a", a), _share("b", b)])
        model = kmeans_fit(store, 2, seed=0)
        return store, model, a, b

    def test_identical_row_is_first_at_zero(self):
        store, model, a, _ = self._setup()
        rec = recommend_collaborators(store, model, a[3], m=4)
        pid, row, dist = rec.neighbors[0]
        assert (pid, row) == ("a", 3)
        assert dist == 0.0

    def test_m_larger_than_cluster(self):
        store, model, a, _ = self._setup()
        rec = recommend_collaborators(store, model, a[0], m=1000)
        labels = assign_rows(model, np.vstack([store.shares["a"].rows,
                                               store.shares["b"].rows]))
        cluster_size = int((labels == rec.query_label).sum())
        assert len(rec.neighbors) == cluster_size

    def test_matches_full_sort_oracle(self):
        store, model, a, b = self._setup()
        profile = a[7] + 0.05
        rec = recommend_collaborators(store, model, profile, m=5)
        rows, prov = stacked_rows(store)
        labels = assign_rows(model, rows)
        pool = [(float(np.linalg.norm(rows[i] - profile)), prov[i])
                for i in range(len(rows)) if labels[i] == rec.query_label]
        pool.sort(key=lambda t: (t[0], t[1][0], t[1][1]))
        expected = [(pid, row, d) for d, (pid, row) in pool[:5]]
        got = [(pid, row, d) for pid, row, d in rec.neighbors]
        for (pe, re_, de), (pg, rg, dg) in zip(expected, got):
            assert (pe, re_) == (pg, rg)
            assert abs(de - dg) <= 1e-12

    def test_distances_nondecreasing_and_same_label(self):
        store, model, a, _ = self._setup()
        rec = recommend_collaborators(store, model, a[0], m=10)
        dists = [d for _, _, d in rec.neighbors]
        assert all(dists[i] <= dists[i + 1] for i in range(len(dists) - 1))
        for pid, row, _ in rec.neighbors:
            assert kmeans_assign(model, store.shares[pid].rows[row]) == rec.query_label


class TestSimilarity:
    def test_profile_self_zero(self):
        rng = np.random.default_rng(2)
        store = _store([_share("a", rng.standard_normal((10, 2))),
                        _share("b", rng.standard_normal((10, 2)))])
        assert market_similarity_profile(store, None, "a", "a") == 0.0

    def test_profile_translation_is_pythagorean(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((40, 2))
        b = a + np.array([3.0, 4.0])
        store = _store([_share("a", a), _share("b", b)])
        assert abs(market_similarity_profile(store, None, "a", "b") - 5.0) <= 1e-9

    def test_distribution_identical_zero(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((30, 2))
        store = _store([_share("a", a), _share("b", a.copy())])
        assert market_similarity_distribution(store, "a", "b") == 0.0

    def test_distribution_shifted_sigma_closed_form(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((2000, 2))
        a = (a - a.mean(0)) / a.std(0)  # exact zero mean, unit sigma
        b = a * 2.0  # same mean (zero), sigma + 1 per component
        store = _store([_share("a", a), _share("b", b)])
        assert abs(market_similarity_distribution(store, "a", "b") - 2.0) <= 1e-9

    def test_five_market_matrix_symmetric_zero_diagonal(self, pipeline):
        store = pipeline.make_store(25.0, seed=0)
        ids = store.participant_ids
        for mode_fn in (lambda x, y: market_similarity_profile(store, None, x, y),
                        lambda x, y: market_similarity_distribution(store, x, y)):
            mat = np.array([[mode_fn(a, b) for b in ids] for a in ids])
            assert np.allclose(mat, mat.T, atol=1e-12)
            assert np.allclose(np.diag(mat), 0.0, atol=1e-12)
            assert np.all(mat >= 0)

    def test_unknown_id(self):
        store = _store([_share("a", np.zeros((5, 2)))])
        with pytest.raises(AgriShareError):
            market_similarity_profile(store, None, "a", "zz")

    def test_distribution_needs_two_rows(self):
        store = _store([_share("a", np.zeros((1, 2))), _share("b", np.zeros((5, 2)))])
        with pytest.raises(AgriShareError):
            market_similarity_distribution(store, "a", "b")


class TestSelect:
    def _random_store(self, n_participants=6, seed=0):
        rng = np.random.default_rng(seed)
        return _store([_share(f"p{i}", rng.standard_normal((20, 2)) + rng.uniform(-3, 3, 2))
                       for i in range(n_participants)])

    def test_three_of_five(self, pipeline):
        store = pipeline.make_store(25.0, seed=0)
        picked = select_collaborators(store, "market_0", 3, "profile")
        assert len(picked) == 3
        assert "market_0" not in picked

    def test_all_others_sorted(self):
        store = self._random_store()
        picked = select_collaborators(store, "p0", 5, "profile")
        dists = [market_similarity_profile(store, None, "p0", p) for p in picked]
        assert all(dists[i] <= dists[i + 1] for i in range(len(dists) - 1))
        assert set(picked) == {f"p{i}" for i in range(1, 6)}

    @pytest.mark.parametrize("mode", ["profile", "distribution"])
    def test_matches_sort_oracle(self, mode):
        store = self._random_store(seed=5)
        picked = select_collaborators(store, "p2", 3, mode)
        others = [p for p in store.participant_ids if p != "p2"]
        if mode == "profile":
            dist = {p: market_similarity_profile(store, None, "p2", p) for p in others}
        else:
            dist = {p: market_similarity_distribution(store, "p2", p) for p in others}
        expected = sorted(others, key=lambda p: (dist[p], p))[:3]
        assert picked == expected

    def test_errors(self):
        store = self._random_store(n_participants=3)
        with pytest.raises(AgriShareError):
            select_collaborators(store, "p0", 3, "profile")
        with pytest.raises(AgriShareError):
            select_collaborators(store, "nope", 1, "profile")
        with pytest.raises(AgriShareError):
            select_collaborators(store, "p0", 1, "sideways")


class TestPersistence:
    def test_store_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        store = _store([_share("a", rng.standard_normal((10, 2))),
                        _share("b", rng.standard_normal((4, 2)))])
        save_store(store, tmp_path / "store")
        back = load_store(tmp_path / "store")
        assert back.participant_ids == ["a", "b"]
        assert back.model_fingerprint == FP
        for pid in ("a", "b"):
            assert np.array_equal(back.shares[pid].rows, store.shares[pid].rows)
