"""Deterministic Lloyd k-means over loss trajectories.

Results are a pure function of (data, K, iters, seed, normalize): seeding
uses a PCG64 generator, distances accumulate in float64 in a fixed row-chunk
order, and nearest-centroid ties break to the lowest cluster index. Worker
count never changes the output, only the wall-clock.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .errors import FormatError
from .store import TrajectoryStore
from .validation import rng_from_seed

# Rows per assignment chunk. Fixed so partial reductions happen in the same
# order no matter how many workers map over the chunks.
CHUNK_ROWS = 16384

NORMALIZE_MODES = ("none", "zscore")


@dataclass
class ClusterModel:
    """Fitted clustering state: centroids, assignments, and bookkeeping.

    ``centroids`` live in the (possibly normalized) trajectory space;
    ``norm_mean``/``norm_std`` are kept so new data can be mapped into the
    same space. Immutable by convention once fit returns it.
    """

    centroids: np.ndarray
    assignments: np.ndarray
    k: int
    objective: float
    seed: int
    iters_run: int
    normalize: str = "none"
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    ids: list[str] | None = None
    objective_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        self.assignments = np.ascontiguousarray(self.assignments, dtype=np.int64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] != self.k:
            raise ValueError(f"expected {self.k} centroids, got shape {self.centroids.shape}")
        if self.assignments.size < 1:
            raise ValueError("assignments must be non-empty")
        if self.assignments.min() < 0 or self.assignments.max() >= self.k:
            raise ValueError("assignment index out of range")
        if not np.isfinite(self.objective) or self.objective < 0:
            raise ValueError(f"objective must be finite and >= 0, got {self.objective}")
        if self.normalize not in NORMALIZE_MODES:
            raise ValueError(f"unknown normalize mode {self.normalize!r}")

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _data_matrix(data) -> np.ndarray:
    if isinstance(data, TrajectoryStore):
        return data.losses.astype(np.float64)
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def _normalize_fit(x: np.ndarray, mode: str):
    if mode == "none":
        return x, None, None
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    return (x - mean) / std, mean, std


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (m, K), float64, fixed evaluation order."""
    out = np.empty((x.shape[0], centroids.shape[0]), dtype=np.float64)
    for k in range(centroids.shape[0]):
        diff = x - centroids[k]
        out[:, k] = np.einsum("ij,ij->i", diff, diff)
    return out


def _chunks(n: int) -> list[slice]:
    return [slice(i, min(i + CHUNK_ROWS, n)) for i in range(0, n, CHUNK_ROWS)]


def _map_chunks(fn, slices, workers: int) -> list:
    if workers <= 1 or len(slices) == 1:
        return [fn(sl) for sl in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slices))


def _assign_once(x: np.ndarray, centroids: np.ndarray, workers: int):
    """Nearest centroid per row (ties to lowest index) and squared distance."""

    def per_chunk(sl):
        d2 = _sq_dists(x[sl], centroids)
        labels = np.argmin(d2, axis=1)
        return labels, d2[np.arange(labels.shape[0]), labels]

    parts = _map_chunks(per_chunk, _chunks(x.shape[0]), workers)
    labels = np.concatenate([p[0] for p in parts])
    min_d2 = np.concatenate([p[1] for p in parts])
    return labels, min_d2


def _repair_empty(x, centroids, labels, min_d2, workers):
    """Reseed empty clusters to the point farthest from their centroid.

    Each reseed point is used at most once per fit so two empty clusters never
    collapse onto the same row. Re-assignment after a repair round cannot
    increase the objective: the replaced centroid served no rows.
    """
    k = centroids.shape[0]
    n = x.shape[0]
    used: set[int] = set()
    counts = np.bincount(labels, minlength=k)
    while (counts == 0).any() and len(used) < n:
        progressed = False
        for empty in np.flatnonzero(counts == 0):
            diff = x - centroids[empty]
            d2 = np.einsum("ij,ij->i", diff, diff)
            if used:
                d2[list(used)] = -1.0
            far = int(np.argmax(d2))
            if d2[far] < 0:
                continue
            centroids[empty] = x[far]
            used.add(far)
            progressed = True
        if not progressed:
            break
        labels, min_d2 = _assign_once(x, centroids, workers)
        counts = np.bincount(labels, minlength=k)
    return centroids, labels, min_d2


def _assign_with_repair(x, centroids, workers):
    labels, min_d2 = _assign_once(x, centroids, workers)
    if np.bincount(labels, minlength=centroids.shape[0]).min() == 0:
        centroids, labels, min_d2 = _repair_empty(x, centroids, labels, min_d2, workers)
    return centroids, labels, min_d2


def _update_centroids(x, labels, k, old_centroids, workers):
    """Cluster means; empty clusters keep their previous centroid."""
    t = x.shape[1]

    def per_chunk(sl):
        sums = np.zeros((k, t), dtype=np.float64)
        np.add.at(sums, labels[sl], x[sl])
        return sums, np.bincount(labels[sl], minlength=k)

    parts = _map_chunks(per_chunk, _chunks(x.shape[0]), workers)
    sums = np.zeros((k, t), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for s, c in parts:  # fixed chunk order keeps float sums reproducible
        sums += s
        counts += c
    centroids = old_centroids.copy()
    nonempty = counts > 0
    centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
    return centroids


def _kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded D^2-weighted center choice."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    chosen = {first}
    diff = x - centroids[0]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            # every remaining row coincides with a chosen center
            pool = [i for i in range(n) if i not in chosen]
            idx = pool[int(rng.integers(len(pool)))]
        centroids[c] = x[idx]
        chosen.add(idx)
        diff = x - centroids[c]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return centroids


def kmeans_fit(
    data,
    k: int,
    iters: int = 20,
    seed: int = 0,
    normalize: str = "none",
    workers: int = 1,
) -> ClusterModel:
    """Fit k-means with k-means++ seeding and empty-cluster repair.

    Runs at most ``iters`` Lloyd passes, stopping early once assignments are
    stable. The returned assignments are always consistent with the returned
    centroids (nearest centroid, ties to the lowest index), and the recorded
    per-pass objective sequence is non-increasing.
    """
    x = _data_matrix(data)
    n = x.shape[0]
    if k <= 0:
        raise ValueError(f"K must be positive, got {k}")
    if k > n:
        raise ValueError(f"K={k} exceeds the {n} available examples")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if normalize not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalize mode {normalize!r}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    x, norm_mean, norm_std = _normalize_fit(x, normalize)
    rng = rng_from_seed(seed)
    centroids = _kmeans_plusplus(x, k, rng)

    centroids, labels, min_d2 = _assign_with_repair(x, centroids, workers)
    trace = [float(min_d2.sum())]
    iters_run = 1
    for _ in range(iters - 1):
        centroids = _update_centroids(x, labels, k, centroids, workers)
        centroids, new_labels, min_d2 = _assign_with_repair(x, centroids, workers)
        trace.append(float(min_d2.sum()))
        iters_run += 1
        stable = bool(np.array_equal(new_labels, labels))
        labels = new_labels
        if stable:
            break

    ids = list(data.ids) if isinstance(data, TrajectoryStore) else [str(i) for i in range(n)]
    return ClusterModel(
        centroids=centroids,
        assignments=labels,
        k=k,
        objective=trace[-1],
        seed=seed,
        iters_run=iters_run,
        normalize=normalize,
        norm_mean=norm_mean,
        norm_std=norm_std,
        ids=ids,
        objective_trace=trace,
    )


def assign(model: ClusterModel, data, workers: int = 1) -> np.ndarray:
    """Map rows to their nearest centroid under the model's normalization."""
    x = _data_matrix(data)
    if x.shape[1] != model.centroids.shape[1]:
        raise ValueError(
            f"data has {x.shape[1]} checkpoints but centroids have {model.centroids.shape[1]}"
        )
    if model.normalize == "zscore":
        if model.norm_mean is None or model.norm_std is None:
            raise ValueError("z-scored model is missing its normalization constants")
        x = (x - model.norm_mean) / model.norm_std
    labels, _ = _assign_once(x, model.centroids, workers)
    return labels


def recompute_objective(model: ClusterModel, data) -> float:
    """Within-cluster SSE recomputed from scratch (model consistency check)."""
    x = _data_matrix(data)
    if model.normalize == "zscore":
        x = (x - model.norm_mean) / model.norm_std
    diff = x - model.centroids[model.assignments]
    return float(np.einsum("ij,ij->i", diff, diff).sum())


def save_model(model: ClusterModel, path) -> None:
    obj = {
        "k": model.k,
        "seed": model.seed,
        "normalize": model.normalize,
        "objective": model.objective,
        "iters_run": model.iters_run,
        "centroids": [[float(v) for v in row] for row in model.centroids],
        "assignments": [int(a) for a in model.assignments],
        "ids": list(model.ids) if model.ids is not None else [],
        "norm_mean": None if model.norm_mean is None else [float(v) for v in model.norm_mean],
        "norm_std": None if model.norm_std is None else [float(v) for v in model.norm_std],
    }
    Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")


def load_model(path) -> ClusterModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    try:
        return ClusterModel(
            centroids=np.asarray(obj["centroids"], dtype=np.float64),
            assignments=np.asarray(obj["assignments"], dtype=np.int64),
            k=int(obj["k"]),
            objective=float(obj["objective"]),
            seed=int(obj["seed"]),
            iters_run=int(obj.get("iters_run", 0)),
            normalize=str(obj.get("normalize", "none")),
            norm_mean=None if obj.get("norm_mean") is None else np.asarray(obj["norm_mean"], float),
            norm_std=None if obj.get("norm_std") is None else np.asarray(obj["norm_std"], float),
            ids=[str(i) for i in obj.get("ids", [])] or None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed cluster model: {e}") from e


class TrajectoryKMeans(BaseEstimator, ClusterMixin):
    """Estimator facade over :func:`kmeans_fit` / :func:`assign`.

    Parameters
    ----------
    n_clusters : int, default=100
        Number of clusters K.
    n_iters : int, default=20
        Maximum Lloyd passes.
    seed : int, default=0
        Seed for k-means++ initialization.
    normalize : {"none", "zscore"}, default="none"
        Optional per-checkpoint z-scoring before clustering.
    workers : int, default=1
        Worker threads for the assignment step; never affects the result.

    Attributes
    ----------
    model_ : ClusterModel
    cluster_centers_ : ndarray of shape (n_clusters, T)
    labels_ : ndarray of shape (n,)
    objective_ : float
        Final within-cluster sum of squared distances.
    """

    def __init__(self, n_clusters=100, n_iters=20, seed=0, normalize="none", workers=1):
        self.n_clusters = n_clusters
        self.n_iters = n_iters
        self.seed = seed
        self.normalize = normalize
        self.workers = workers

    def fit(self, X, y=None):
        self.model_ = kmeans_fit(
            X,
            k=self.n_clusters,
            iters=self.n_iters,
            seed=self.seed,
            normalize=self.normalize,
            workers=self.workers,
        )
        self.cluster_centers_ = self.model_.centroids
        self.labels_ = self.model_.assignments
        self.objective_ = self.model_.objective
        self.n_iters_run_ = self.model_.iters_run
        return self

    def predict(self, X):
        return assign(self.model_, X, workers=self.workers)
