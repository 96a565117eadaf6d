import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2l import (
    FeatureMatrix,
    ScoreVector,
    TrajectoryStore,
    default_checkpoint_steps,
    derive_scalar,
    partition_by_source,
    subsample_checkpoints,
)
from tests.conftest import make_store


class TestTrajectoryStore:
    def test_basic_construction(self, store):
        assert store.n == 12
        assert store.t == 4
        assert store.losses.dtype == np.float32

    def test_losses_are_read_only(self, store):
        with pytest.raises(ValueError):
            store.losses[0, 0] = 1.0

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="dup"):
            TrajectoryStore(
                ids=["dup", "dup"],
                sources=["a", "a"],
                losses=np.ones((2, 2), dtype=np.float32),
                checkpoint_steps=[1, 2],
            )

    def test_negative_loss_rejected(self):
        with pytest.raises(ValueError, match="ex1"):
            TrajectoryStore(
                ids=["ex0", "ex1"],
                sources=["a", "a"],
                losses=np.array([[1.0, 1.0], [1.0, -0.5]], dtype=np.float32),
                checkpoint_steps=[1, 2],
            )

    def test_non_finite_loss_rejected(self):
        with pytest.raises(ValueError, match="ex0"):
            TrajectoryStore(
                ids=["ex0"],
                sources=["a"],
                losses=np.array([[np.nan, 1.0]], dtype=np.float32),
                checkpoint_steps=[1, 2],
            )

    def test_steps_must_increase(self):
        with pytest.raises(ValueError):
            TrajectoryStore(
                ids=["ex0"],
                sources=["a"],
                losses=np.ones((1, 2), dtype=np.float32),
                checkpoint_steps=[5, 5],
            )

    def test_length_mismatches_rejected(self):
        with pytest.raises(ValueError):
            TrajectoryStore(
                ids=["a", "b", "c"],
                sources=["s", "s"],
                losses=np.ones((2, 2), dtype=np.float32),
                checkpoint_steps=[1, 2],
            )
        with pytest.raises(ValueError):
            TrajectoryStore(
                ids=["a", "b"],
                sources=["s", "s"],
                losses=np.ones((2, 2), dtype=np.float32),
                checkpoint_steps=[1, 2, 3],
            )

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            TrajectoryStore(
                ids=[], sources=[], losses=np.empty((0, 3), np.float32), checkpoint_steps=[1, 2, 3]
            )

    def test_zero_loss_is_legal(self):
        s = TrajectoryStore(
            ids=["ex0"], sources=["a"],
            losses=np.zeros((1, 1), dtype=np.float32), checkpoint_steps=[500],
        )
        assert s.losses[0, 0] == 0.0

    def test_take_rows_preserves_order(self, store):
        sub = store.take_rows([5, 1, 7])
        assert sub.ids == [store.ids[5], store.ids[1], store.ids[7]]
        assert np.array_equal(sub.losses, store.losses[[5, 1, 7]])
        assert sub.checkpoint_steps == store.checkpoint_steps

    def test_digest_sensitive_to_content(self, store):
        base = store.digest()
        assert base == make_store().digest()
        bumped = store.losses.copy()
        bumped[0, 0] += 0.25
        other = TrajectoryStore(store.ids, store.sources, bumped, store.checkpoint_steps)
        assert other.digest() != base
        renamed = TrajectoryStore(
            ["zz" + i for i in store.ids], store.sources, store.losses, store.checkpoint_steps
        )
        assert renamed.digest() != base

    def test_equality(self, store):
        assert store == make_store()
        assert store != make_store(seed=1)

    def test_row_index(self, store):
        idx = store.row_index()
        assert idx[store.ids[7]] == 7
        assert len(idx) == store.n


def test_default_checkpoint_steps():
    assert default_checkpoint_steps(4) == [500, 1000, 1500, 2000]
    assert default_checkpoint_steps(1) == [500]


class TestSubsampleCheckpoints:
    def test_identity(self, store):
        assert subsample_checkpoints(store, range(store.t)) == store

    def test_early_dense_slice(self):
        store = make_store(n=6, t=8, seed=2)
        sub = subsample_checkpoints(store, [0, 1, 2, 3])
        assert np.array_equal(sub.losses, store.losses[:, [0, 1, 2, 3]])
        assert sub.checkpoint_steps == store.checkpoint_steps[:4]

    def test_sparse_uniform_slice(self):
        store = make_store(n=6, t=8, seed=2)
        sub = subsample_checkpoints(store, [0, 2, 4, 6])
        for out_col, in_col in enumerate([0, 2, 4, 6]):
            assert np.array_equal(sub.losses[:, out_col], store.losses[:, in_col])

    @pytest.mark.parametrize("keep", [[], [3, 1], [2, 2], [-1, 0], [0, 99]])
    def test_bad_indices_rejected(self, store, keep):
        with pytest.raises(ValueError):
            subsample_checkpoints(store, keep)


class TestDeriveScalar:
    def make(self, rows):
        rows = np.asarray(rows, dtype=np.float32)
        return TrajectoryStore(
            ids=[f"ex{i}" for i in range(rows.shape[0])],
            sources=["s"] * rows.shape[0],
            losses=rows,
            checkpoint_steps=list(range(1, rows.shape[1] + 1)),
        )

    def test_learnability_drop(self):
        store = self.make([[5.0, 3.0, 1.0]])
        got = derive_scalar(store, "learnability", early_index=0, late_index=-1)
        assert got.scores[0] == pytest.approx(4.0)
        assert got.stat_name == "learnability"

    def test_learnability_constant_is_zero(self):
        store = self.make([[2.0, 2.0]])
        assert derive_scalar(store, "learnability").scores[0] == 0.0

    def test_learnability_sign_flips_with_index_swap(self):
        store = self.make(np.random.default_rng(4).uniform(0, 3, (10, 5)))
        fwd = derive_scalar(store, "learnability", early_index=1, late_index=3).scores
        back = store.losses[:, 3].astype(np.float64) - store.losses[:, 1].astype(np.float64)
        assert np.array_equal(fwd, -back)

    def test_perplexity_and_confidence(self):
        store = self.make([[1.0, 0.6931]])
        perp = derive_scalar(store, "perplexity").scores[0]
        conf = derive_scalar(store, "confidence").scores[0]
        assert perp == pytest.approx(2.0, abs=1e-3)
        assert conf == pytest.approx(0.5, abs=1e-4)

    def test_final_and_early_loss(self):
        store = self.make([[3.0, 2.0, 1.0]])
        assert derive_scalar(store, "final_loss").scores[0] == pytest.approx(1.0)
        assert derive_scalar(store, "early_loss").scores[0] == pytest.approx(3.0)

    def test_late_index_selects_column(self):
        store = self.make([[1.0, 2.0, 3.0]])
        got = derive_scalar(store, "perplexity", late_index=0).scores[0]
        assert got == pytest.approx(math.e)

    def test_bad_inputs(self):
        store = self.make([[1.0, 2.0]])
        with pytest.raises(ValueError):
            derive_scalar(store, "nonsense")
        with pytest.raises(ValueError):
            derive_scalar(store, "perplexity", late_index=5)
        with pytest.raises(ValueError):
            derive_scalar(store, "learnability", early_index=1, late_index=1)

    def test_overflow_names_offending_id(self):
        store = self.make([[1.0], [800.0]])
        with pytest.raises(ValueError, match="ex1"):
            derive_scalar(store, "perplexity")


class TestPartitionBySource:
    def test_single_source(self, store):
        parts = partition_by_source(store)
        assert len(parts) == 1
        assert parts[0][0] == "alpha"
        assert np.array_equal(parts[0][1], np.arange(store.n))

    def test_interleaved_sources(self):
        store = make_store(n=3, sources=("a", "b"))
        # sources cycle a,b,a
        parts = dict((src, rows.tolist()) for src, rows in partition_by_source(store))
        assert parts == {"a": [0, 2], "b": [1]}

    def test_first_appearance_order(self, mixed_store):
        assert [src for src, _ in partition_by_source(mixed_store)] == ["web", "math", "code"]

    @given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_views_partition_rows(self, tags):
        n = len(tags)
        store = TrajectoryStore(
            ids=[f"r{i}" for i in range(n)],
            sources=list(tags),
            losses=np.ones((n, 2), dtype=np.float32),
            checkpoint_steps=[1, 2],
        )
        parts = partition_by_source(store)
        all_rows = np.concatenate([rows for _, rows in parts])
        assert sorted(all_rows.tolist()) == list(range(n))
        assert len(set(all_rows.tolist())) == n
        for _, rows in parts:
            assert np.array_equal(rows, np.sort(rows))


class TestScoreVector:
    def test_n_and_validation(self):
        sv = ScoreVector(ids=["a", "b"], scores=[1.0, 2.0], stat_name="confidence")
        assert sv.n == 2
        with pytest.raises(ValueError):
            ScoreVector(ids=["a"], scores=[np.inf], stat_name="x")
        with pytest.raises(ValueError):
            ScoreVector(ids=["a", "b"], scores=[1.0], stat_name="x")


class TestFeatureMatrix:
    def test_validation(self):
        fm = FeatureMatrix(ids=["a", "b"], features=np.ones((2, 3), np.float32))
        assert fm.features.shape == (2, 3)
        with pytest.raises(ValueError):
            FeatureMatrix(ids=["a", "a"], features=np.ones((2, 3), np.float32))
        with pytest.raises(ValueError):
            FeatureMatrix(ids=["a"], features=np.array([[np.nan]], np.float32))

    def test_digest_changes_with_content(self):
        a = FeatureMatrix(ids=["a"], features=np.ones((1, 2), np.float32))
        b = FeatureMatrix(ids=["a"], features=np.full((1, 2), 2.0, np.float32))
        assert a.digest() != b.digest()
        assert a.digest() == FeatureMatrix(ids=["a"], features=np.ones((1, 2), np.float32)).digest()
