"""Domain types: loss-trajectory stores, score vectors, feature matrices.

A trajectory entry is the mean per-token negative log-likelihood of one
training example at one reference-model checkpoint, in nats. Values are
kept as 32-bit floats; zero losses are legal (memorized examples).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .validation import (
    as_matrix,
    check_finite,
    check_index,
    check_non_negative,
    check_steps,
    check_unique_ids,
)

DEFAULT_STEP_INTERVAL = 500

SCALAR_STATS = ("final_loss", "early_loss", "learnability", "perplexity", "confidence")


@dataclass(frozen=True)
class TrajectoryStore:
    """n examples x T checkpoints of recorded losses.

    Immutable after construction and safe to share across workers.

    Attributes
    ----------
    ids : list of str
        Unique opaque example identifiers, in row order.
    sources : list of str
        One source tag per example, parallel to ``ids``.
    losses : ndarray of shape (n, T), dtype float32
        Finite, non-negative loss values.
    checkpoint_steps : list of int
        Strictly increasing training-step labels, one per column.
    """

    ids: list[str]
    sources: list[str]
    losses: np.ndarray
    checkpoint_steps: list[int]

    def __post_init__(self):
        object.__setattr__(self, "losses", as_matrix(self.losses, "losses"))
        object.__setattr__(self, "ids", [str(i) for i in self.ids])
        object.__setattr__(self, "sources", [str(s) for s in self.sources])
        object.__setattr__(self, "checkpoint_steps", check_steps(self.checkpoint_steps))
        n, t = self.losses.shape
        if len(self.ids) != n:
            raise ValueError(f"{len(self.ids)} ids for {n} loss rows")
        if len(self.sources) != n:
            raise ValueError(f"{len(self.sources)} sources for {n} loss rows")
        if len(self.checkpoint_steps) != t:
            raise ValueError(
                f"{len(self.checkpoint_steps)} checkpoint steps for {t} loss columns"
            )
        check_unique_ids(self.ids)
        check_finite(self.losses, "losses", self.ids)
        check_non_negative(self.losses, "losses", self.ids)
        self.losses.setflags(write=False)

    @property
    def n(self) -> int:
        return self.losses.shape[0]

    @property
    def t(self) -> int:
        return self.losses.shape[1]

    def row_index(self) -> dict[str, int]:
        return {i: r for r, i in enumerate(self.ids)}

    def take_rows(self, rows) -> "TrajectoryStore":
        """New store holding the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return TrajectoryStore(
            ids=[self.ids[r] for r in rows],
            sources=[self.sources[r] for r in rows],
            losses=self.losses[rows],
            checkpoint_steps=list(self.checkpoint_steps),
        )

    def digest(self) -> str:
        """SHA-256 over ids, sources, steps, and raw float32 loss bytes."""
        h = hashlib.sha256()
        for i, s in zip(self.ids, self.sources):
            h.update(i.encode("utf-8"))
            h.update(b"\x00")
            h.update(s.encode("utf-8"))
            h.update(b"\x00")
        h.update(np.asarray(self.checkpoint_steps, dtype="<u8").tobytes())
        h.update(np.ascontiguousarray(self.losses, dtype="<f4").tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, TrajectoryStore):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.sources == other.sources
            and self.checkpoint_steps == other.checkpoint_steps
            and self.losses.shape == other.losses.shape
            and bool(np.array_equal(self.losses, other.losses))
        )


@dataclass(frozen=True)
class ScoreVector:
    """One derived scalar per example (confidence, perplexity, ...)."""

    ids: list[str]
    scores: np.ndarray
    stat_name: str

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "scores", scores)
        if len(self.ids) != scores.shape[0]:
            raise ValueError(f"{len(self.ids)} ids for {scores.shape[0]} scores")
        check_finite(scores, f"{self.stat_name} scores")
        scores.setflags(write=False)

    @property
    def n(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense n x d feature vectors (hidden-state representations)."""

    ids: list[str]
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", as_matrix(self.features, "features"))
        if len(self.ids) != self.features.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {self.features.shape[0]} feature rows"
            )
        check_unique_ids(self.ids)
        check_finite(self.features, "features", self.ids)
        self.features.setflags(write=False)

    def digest(self) -> str:
        """SHA-256 over ids and raw float32 feature bytes."""
        h = hashlib.sha256()
        for i in self.ids:
            h.update(i.encode("utf-8"))
            h.update(b"\x00")
        h.update(np.ascontiguousarray(self.features, dtype="<f4").tobytes())
        return h.hexdigest()


def default_checkpoint_steps(t: int, interval: int = DEFAULT_STEP_INTERVAL) -> list[int]:
    """Step labels when a file carries none: interval, 2*interval, ..."""
    return [interval * (j + 1) for j in range(t)]


def subsample_checkpoints(store: TrajectoryStore, keep) -> TrajectoryStore:
    """Keep only the given checkpoint columns (strictly increasing indices).

    This is how shorter / sparser / stage-restricted trajectory variants are
    built from a full recording: ``keep=[0,1,2,3]`` is a dense early slice,
    ``keep=[0,2,4,6]`` a sparse uniform one.
    """
    keep = [int(k) for k in keep]
    if not keep:
        raise ValueError("keep must be non-empty")
    for a, b in zip(keep, keep[1:]):
        if b <= a:
            raise ValueError(f"keep indices not strictly increasing: {a} then {b}")
    if keep[0] < 0 or keep[-1] >= store.t:
        raise ValueError(f"keep indices out of range for T={store.t}")
    return TrajectoryStore(
        ids=list(store.ids),
        sources=list(store.sources),
        losses=store.losses[:, keep],
        checkpoint_steps=[store.checkpoint_steps[k] for k in keep],
    )


def derive_scalar(
    store: TrajectoryStore,
    stat: str,
    early_index: int = 0,
    late_index: int = -1,
) -> ScoreVector:
    """Reduce trajectories to one scalar per example.

    learnability = loss[early] - loss[late]; perplexity = exp(loss[late]);
    confidence = exp(-loss[late]); final_loss / early_loss take the last /
    first column and ignore the indices.
    """
    if stat not in SCALAR_STATS:
        raise ValueError(f"unknown stat {stat!r}, expected one of {SCALAR_STATS}")
    losses = store.losses.astype(np.float64)
    if stat == "final_loss":
        scores = losses[:, -1]
    elif stat == "early_loss":
        scores = losses[:, 0]
    else:
        late = check_index(late_index, store.t, "late_index")
        if stat == "learnability":
            early = check_index(early_index, store.t, "early_index")
            if early >= late:
                raise ValueError(
                    f"learnability needs early_index < late_index, got {early} >= {late}"
                )
            scores = losses[:, early] - losses[:, late]
        elif stat == "perplexity":
            with np.errstate(over="ignore"):
                scores = np.exp(losses[:, late])
        else:  # confidence
            scores = np.exp(-losses[:, late])
    if not np.isfinite(scores).all():
        bad = int(np.argwhere(~np.isfinite(scores))[0][0])
        raise ValueError(f"{stat} overflowed for id {store.ids[bad]!r}")
    return ScoreVector(ids=list(store.ids), scores=scores, stat_name=stat)


def partition_by_source(store: TrajectoryStore) -> list[tuple[str, np.ndarray]]:
    """Disjoint row-index views per source tag, in first-appearance order."""
    order: list[str] = []
    groups: dict[str, list[int]] = {}
    for row, src in enumerate(store.sources):
        if src not in groups:
            groups[src] = []
            order.append(src)
        groups[src].append(row)
    return [(src, np.asarray(groups[src], dtype=np.int64)) for src in order]
