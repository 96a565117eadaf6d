import itertools

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from s2l import (
    ClusterModel,
    TrajectoryKMeans,
    TrajectoryStore,
    assign,
    generate,
    kmeans_fit,
    load_model,
    recompute_objective,
    save_model,
    TemplateSpec,
)
from s2l.cluster import _assign_with_repair
from tests.conftest import make_store


def sse_of_partition(x, labels):
    total = 0.0
    for c in np.unique(labels):
        pts = x[labels == c]
        total += ((pts - pts.mean(axis=0)) ** 2).sum()
    return total


def best_two_partition_sse(x):
    """Exhaustive minimum SSE over all 2-partitions (oracle)."""
    n = x.shape[0]
    best = np.inf
    best_labels = None
    for bits in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + bits)
        if labels.min() == labels.max():
            continue
        sse = sse_of_partition(x, labels)
        if sse < best:
            best = sse
            best_labels = labels
    return best, best_labels


def two_blob_store():
    base = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.01, 0.99, 1.0],
            [0.99, 1.01, 1.0],
            [5.0, 5.0, 5.0],
            [5.01, 4.99, 5.0],
            [4.99, 5.01, 5.0],
        ],
        dtype=np.float32,
    )
    return TrajectoryStore(
        ids=[f"p{i}" for i in range(6)],
        sources=["s"] * 6,
        losses=base,
        checkpoint_steps=[1, 2, 3],
    )


class TestKmeansFit:
    def test_two_blobs_match_exhaustive_partition(self):
        store = two_blob_store()
        model = kmeans_fit(store, k=2, iters=20, seed=0)
        best_sse, best_labels = best_two_partition_sse(store.losses.astype(np.float64))
        assert adjusted_rand_score(best_labels, model.assignments) == 1.0
        assert model.objective == pytest.approx(best_sse, rel=1e-9)
        # the oracle partition is the two tight blobs
        assert len(set(model.assignments[:3])) == 1
        assert len(set(model.assignments[3:])) == 1

    def test_k_equals_n_zero_objective(self):
        store = make_store(n=8, t=3, seed=5)
        model = kmeans_fit(store, k=8, iters=5, seed=1)
        assert model.objective == 0.0
        assert sorted(model.assignments.tolist()) == list(range(8))

    def test_k_bounds_errors(self, store):
        with pytest.raises(ValueError):
            kmeans_fit(store, k=0, iters=1, seed=0)
        with pytest.raises(ValueError):
            kmeans_fit(store, k=store.n + 1, iters=1, seed=0)
        with pytest.raises(ValueError):
            kmeans_fit(store, k=2, iters=0, seed=0)
        with pytest.raises(ValueError):
            kmeans_fit(store, k=2, iters=1, seed=0, normalize="bogus")

    def test_deterministic_across_runs_and_workers(self):
        store = make_store(n=300, t=4, seed=9)
        a = kmeans_fit(store, k=7, iters=10, seed=42, workers=1)
        b = kmeans_fit(store, k=7, iters=10, seed=42, workers=1)
        c = kmeans_fit(store, k=7, iters=10, seed=42, workers=5)
        assert np.array_equal(a.assignments, b.assignments)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.assignments, c.assignments)
        assert np.array_equal(a.centroids, c.centroids)
        assert a.objective == b.objective == c.objective

    def test_objective_trace_non_increasing(self):
        store = make_store(n=200, t=5, seed=2)
        model = kmeans_fit(store, k=6, iters=15, seed=3)
        trace = model.objective_trace
        assert len(trace) == model.iters_run
        for earlier, later in zip(trace, trace[1:]):
            assert later <= earlier + 1e-9 * max(1.0, earlier)

    def test_identical_rows_share_cluster(self):
        rows = np.array(
            [[1, 1], [1, 1], [4, 4], [4, 4], [9, 9], [1, 1]], dtype=np.float32
        )
        store = TrajectoryStore(
            ids=[f"r{i}" for i in range(6)],
            sources=["s"] * 6,
            losses=rows,
            checkpoint_steps=[1, 2],
        )
        model = kmeans_fit(store, k=3, iters=10, seed=4)
        labels = model.assignments
        assert labels[0] == labels[1] == labels[5]
        assert labels[2] == labels[3]

    def test_all_clusters_nonempty(self):
        store = make_store(n=50, t=3, seed=6)
        for seed in range(5):
            model = kmeans_fit(store, k=9, iters=8, seed=seed)
            assert model.cluster_sizes().min() >= 1

    def test_duplicate_heavy_data(self):
        # 10 copies of each of 3 distinct points; K=3 must land one per point
        rows = np.repeat(np.array([[1.0], [5.0], [9.0]], np.float32), 10, axis=0)
        store = TrajectoryStore(
            ids=[f"r{i}" for i in range(30)],
            sources=["s"] * 30,
            losses=rows,
            checkpoint_steps=[1],
        )
        model = kmeans_fit(store, k=3, iters=10, seed=0)
        assert model.objective == pytest.approx(0.0, abs=1e-12)
        assert sorted(model.cluster_sizes().tolist()) == [10, 10, 10]

    def test_partition_stable_under_row_permutation(self):
        templates = [
            TemplateSpec("a", "decreasing", 40, 0.05),
            TemplateSpec("b", "increasing", 40, 0.05),
            TemplateSpec("c", "flat", 40, 0.05),
        ]
        store, _ = generate(templates, 6, seed=8)
        perm = np.random.default_rng(1).permutation(store.n)
        shuffled = store.take_rows(perm)
        m1 = kmeans_fit(store, k=3, iters=20, seed=5)
        m2 = kmeans_fit(shuffled, k=3, iters=20, seed=5)
        # same partition up to relabeling: compare on the permuted labels
        assert adjusted_rand_score(m1.assignments[perm], m2.assignments) == 1.0

    def test_zscore_normalization(self):
        store = make_store(n=40, t=4, seed=12)
        model = kmeans_fit(store, k=4, iters=10, seed=2, normalize="zscore")
        assert model.norm_mean is not None and model.norm_std is not None
        assert np.array_equal(assign(model, store), model.assignments)

    def test_zscore_constant_column_guarded(self):
        rows = np.column_stack(
            [np.full(20, 2.0), np.linspace(0, 5, 20)]
        ).astype(np.float32)
        store = TrajectoryStore(
            ids=[f"r{i}" for i in range(20)],
            sources=["s"] * 20,
            losses=rows,
            checkpoint_steps=[1, 2],
        )
        model = kmeans_fit(store, k=2, iters=10, seed=0, normalize="zscore")
        assert np.isfinite(model.centroids).all()


class TestAssign:
    def make_model(self, centroids):
        centroids = np.asarray(centroids, dtype=np.float64)
        return ClusterModel(
            centroids=centroids,
            assignments=np.zeros(1, dtype=np.int64),
            k=centroids.shape[0],
            objective=0.0,
            seed=0,
            iters_run=1,
        )

    def test_exact_centroid_match(self):
        model = self.make_model([[0.0], [1.0], [2.0], [3.0], [4.0]])
        got = assign(model, np.array([[3.0]]))
        assert got[0] == 3

    def test_equidistant_tie_prefers_lower_index(self):
        # point 2.0 is distance 1 from centroid 1 (at 1.0) and centroid 4 (at 3.0)
        model = self.make_model([[-9.0], [1.0], [8.0], [12.0], [3.0]])
        got = assign(model, np.array([[2.0]]))
        assert got[0] == 1

    def test_self_consistency_on_fit_data(self):
        for seed in range(4):
            store = make_store(n=150, t=4, seed=seed)
            model = kmeans_fit(store, k=6, iters=12, seed=seed)
            assert np.array_equal(assign(model, store), model.assignments)

    def test_dimension_mismatch(self):
        model = self.make_model([[0.0, 1.0]])
        with pytest.raises(ValueError):
            assign(model, np.ones((2, 3)))

    def test_recompute_objective_matches(self):
        store = make_store(n=120, t=5, seed=3)
        model = kmeans_fit(store, k=5, iters=10, seed=7)
        rec = recompute_objective(model, store)
        assert rec == pytest.approx(model.objective, rel=1e-6)

    def test_recompute_objective_zscore(self):
        store = make_store(n=80, t=4, seed=4)
        model = kmeans_fit(store, k=4, iters=10, seed=1, normalize="zscore")
        assert recompute_objective(model, store) == pytest.approx(model.objective, rel=1e-6)


class TestEmptyClusterRepair:
    def test_repair_reseeds_to_farthest_unused_point(self):
        x = np.array([[0.0], [0.001], [0.002], [0.003]])
        centroids = np.array([[0.0], [0.001], [100.0]])
        fixed, labels, _ = _assign_with_repair(x, centroids.copy(), workers=1)
        assert np.bincount(labels, minlength=3).min() >= 1

    def test_repair_never_increases_objective(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 10, size=(30, 2))
        centroids = np.vstack([x[:2], [[500.0, 500.0]]])
        before = np.min(
            ((x[:, None, :] - centroids[None, :2, :]) ** 2).sum(-1), axis=1
        ).sum()
        _, labels, min_d2 = _assign_with_repair(x, centroids.copy(), workers=1)
        assert min_d2.sum() <= before + 1e-9


class TestModelIO:
    def test_roundtrip(self, tmp_path):
        store = make_store(n=60, t=4, seed=8)
        model = kmeans_fit(store, k=5, iters=10, seed=11, normalize="zscore")
        path = tmp_path / "model.json"
        save_model(model, path)
        back = load_model(path)
        assert back.k == model.k
        assert back.seed == model.seed
        assert back.normalize == model.normalize
        assert back.iters_run == model.iters_run
        assert back.objective == model.objective
        assert np.array_equal(back.centroids, model.centroids)
        assert np.array_equal(back.assignments, model.assignments)
        assert back.ids == model.ids
        assert np.array_equal(back.norm_mean, model.norm_mean)
        assert np.array_equal(back.norm_std, model.norm_std)

    def test_loaded_model_assigns_identically(self, tmp_path):
        store = make_store(n=60, t=4, seed=9)
        model = kmeans_fit(store, k=4, iters=10, seed=2)
        path = tmp_path / "m.json"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(assign(back, store), model.assignments)

    def test_malformed_model_file(self, tmp_path):
        from s2l import FormatError

        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(FormatError):
            load_model(bad)
        missing = tmp_path / "m.json"
        missing.write_text('{"k": 2}')
        with pytest.raises(FormatError):
            load_model(missing)


class TestClusterModelValidation:
    def test_bad_assignment_range(self):
        with pytest.raises(ValueError):
            ClusterModel(
                centroids=np.ones((2, 3)),
                assignments=np.array([0, 2]),
                k=2,
                objective=0.0,
                seed=0,
                iters_run=1,
            )

    def test_bad_objective(self):
        with pytest.raises(ValueError):
            ClusterModel(
                centroids=np.ones((1, 3)),
                assignments=np.array([0]),
                k=1,
                objective=-1.0,
                seed=0,
                iters_run=1,
            )


class TestEstimatorFacade:
    def test_fit_predict_matches_functional_core(self):
        store = make_store(n=90, t=4, seed=10)
        est = TrajectoryKMeans(n_clusters=4, n_iters=10, seed=3).fit(store)
        core = kmeans_fit(store, k=4, iters=10, seed=3)
        assert np.array_equal(est.labels_, core.assignments)
        assert est.objective_ == core.objective
        assert np.array_equal(est.predict(store), core.assignments)

    def test_get_set_params(self):
        est = TrajectoryKMeans(n_clusters=7, seed=5)
        params = est.get_params()
        assert params["n_clusters"] == 7 and params["seed"] == 5
        est.set_params(n_clusters=3)
        assert est.n_clusters == 3

    def test_fit_predict_on_ndarray(self):
        x = np.random.default_rng(0).uniform(0, 4, size=(40, 3))
        est = TrajectoryKMeans(n_clusters=3, n_iters=8, seed=1).fit(x)
        assert est.labels_.shape == (40,)
        assert est.cluster_centers_.shape == (3, 3)
