"""Cluster-balanced subset selection and selection manifests.

The selector walks clusters from smallest to largest; at the k-th of K
clusters, with s examples already taken, it takes the whole cluster when its
size is at most floor((B - s) / (K - k + 1)) and otherwise samples that many
members uniformly without replacement. Small clusters therefore survive in
full while large ones are capped, which flattens the cluster histogram of
the selected subset.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .cluster import kmeans_fit
from .errors import FormatError
from .store import TrajectoryStore, partition_by_source
from .validation import rng_from_seed

MANIFEST_VERSION = 1
ROUNDS = ("main", "topup")


@dataclass(frozen=True)
class SelectionConfig:
    """Everything that determines a selection besides the data itself."""

    budget: int
    k: int = 100
    kmeans_iters: int = 20
    seed: int = 0
    per_source: bool = False
    normalize: str = "none"
    topup: bool = True

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.kmeans_iters < 1:
            raise ValueError(f"kmeans_iters must be >= 1, got {self.kmeans_iters}")

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "k": self.k,
            "kmeans_iters": self.kmeans_iters,
            "seed": self.seed,
            "per_source": self.per_source,
            "normalize": self.normalize,
            "topup": self.topup,
        }


class ManifestEntry(NamedTuple):
    id: str
    source: str
    cluster: int
    round: str


@dataclass
class SelectionManifest:
    """Ordered record of which examples a selector picked and why."""

    tool: str
    seed: int
    budget: int
    k: int | None
    config_digest: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ValueError(f"duplicate id in manifest: {e.id!r}")
            seen.add(e.id)
            if e.round not in ROUNDS:
                raise ValueError(f"unknown selection round {e.round!r}")

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]


@dataclass(frozen=True)
class BalancedSelection:
    """Rows picked by :func:`balanced_select`, in processing order.

    ``clusters`` gives each row's cluster; ``topup`` marks rows added by the
    residual fill pass rather than the per-cluster walk.
    """

    rows: np.ndarray
    clusters: np.ndarray
    topup: np.ndarray

    def __len__(self) -> int:
        return int(self.rows.shape[0])


def balanced_select(assignments, budget: int, seed: int, topup: bool = True) -> BalancedSelection:
    """Choose min(budget, n) rows with per-cluster caps, smallest cluster first.

    Main-round picks come first (clusters by ascending size, rows ascending
    within a cluster), then any top-up picks. Cluster-size ties process the
    lower cluster index first.
    """
    assignments = np.ascontiguousarray(assignments, dtype=np.int64)
    if assignments.ndim != 1 or assignments.size == 0:
        raise ValueError("assignments must be a non-empty 1-D array")
    if assignments.min() < 0:
        raise ValueError("assignments must be non-negative")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")

    n = assignments.shape[0]
    counts = np.bincount(assignments)
    order = sorted(np.flatnonzero(counts > 0), key=lambda c: (counts[c], c))
    # stable sort groups each cluster's rows contiguously, ascending
    by_cluster = np.argsort(assignments, kind="stable")
    sorted_vals = assignments[by_cluster]
    rng = rng_from_seed(seed)
    taken = np.zeros(n, dtype=bool)
    rows_parts: list[np.ndarray] = []
    cluster_parts: list[np.ndarray] = []
    s = 0
    total = len(order)
    for pos, c in enumerate(order):
        cap = (budget - s) // (total - pos)
        lo = int(np.searchsorted(sorted_vals, c, side="left"))
        members = by_cluster[lo : lo + int(counts[c])]
        if members.shape[0] <= cap:
            chosen = members
        elif cap > 0:
            chosen = np.sort(rng.choice(members, size=cap, replace=False))
        else:
            chosen = members[:0]
        rows_parts.append(chosen)
        cluster_parts.append(np.full(chosen.shape[0], c, dtype=np.int64))
        taken[chosen] = True
        s += chosen.shape[0]

    rows = np.concatenate(rows_parts) if rows_parts else np.empty(0, dtype=np.int64)
    clusters = np.concatenate(cluster_parts) if cluster_parts else np.empty(0, dtype=np.int64)
    topup_mask = np.zeros(rows.shape[0], dtype=bool)

    target = min(budget, n)
    if topup and s < target:
        pool = np.flatnonzero(~taken)
        extra = np.sort(rng.choice(pool, size=target - s, replace=False))
        rows = np.concatenate([rows, extra])
        clusters = np.concatenate([clusters, assignments[extra]])
        topup_mask = np.concatenate([topup_mask, np.ones(extra.shape[0], dtype=bool)])
    return BalancedSelection(rows=rows, clusters=clusters, topup=topup_mask)


def allocate_budgets(source_sizes, budget: int) -> list[int]:
    """Split a budget across sources proportionally to size.

    Largest-remainder rounding with two adjustments: leftover units go first
    to sources that would otherwise round to zero, and no source is allocated
    more than its size (overflow redistributes to the rest by the same rule).
    Allocations sum to min(budget, sum(source_sizes)).
    """
    sizes = [int(s) for s in source_sizes]
    if not sizes:
        raise ValueError("source_sizes must be non-empty")
    if any(s < 1 for s in sizes):
        raise ValueError("source sizes must be positive")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")

    alloc = [0] * len(sizes)
    active = list(range(len(sizes)))
    remaining = min(budget, sum(sizes))
    while remaining > 0 and active:
        shares = _largest_remainder([sizes[i] for i in active], remaining)
        capped = False
        for i, share in zip(active, shares):
            room = sizes[i] - alloc[i]
            take = min(share, room)
            if take < share:
                capped = True
            alloc[i] += take
            remaining -= take
        active = [i for i in active if alloc[i] < sizes[i]]
        if not capped:
            break
    return alloc


def _largest_remainder(sizes: list[int], budget: int) -> list[int]:
    """Proportional integer split; spare units favor zero shares, then larger
    remainders, then larger sizes, then lower index."""
    total = sum(sizes)
    base = [(budget * s) // total for s in sizes]
    rem = [(budget * s) % total for s in sizes]
    order = sorted(
        range(len(sizes)),
        key=lambda i: (base[i] != 0, -rem[i], -sizes[i], i),
    )
    leftover = budget - sum(base)
    for i in order[:leftover]:
        base[i] += 1
    return base


def derive_source_seeds(seed: int, source: str) -> tuple[int, int]:
    """Stable per-source (clustering seed, selection seed) pair."""
    digest = hashlib.sha256(f"{seed}|{source}".encode("utf-8")).digest()
    return (
        int.from_bytes(digest[0:8], "little"),
        int.from_bytes(digest[8:16], "little"),
    )


def config_digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def s2l_pipeline(store: TrajectoryStore, config: SelectionConfig, workers: int = 1) -> SelectionManifest:
    """Cluster trajectories and select a balanced subset, ending at
    min(budget, n) entries.

    With ``per_source`` the store is partitioned by source (first-appearance
    order), the budget is split by :func:`allocate_budgets`, and each source
    is clustered and sampled independently under seeds derived from
    (seed, source); K clamps to the source size. Worker count is excluded
    from the digest because it cannot change the output.
    """
    digest = config_digest({"tool": "s2l", **config.to_dict(), "store": store.digest()})
    entries: list[ManifestEntry] = []
    if config.per_source:
        parts = partition_by_source(store)
        budgets = allocate_budgets([rows.shape[0] for _, rows in parts], config.budget)
        for (source, rows), sub_budget in zip(parts, budgets):
            if sub_budget == 0:
                continue
            sub = store.take_rows(rows)
            k = min(config.k, sub.n)
            kmeans_seed, select_seed = derive_source_seeds(config.seed, source)
            model = kmeans_fit(
                sub, k=k, iters=config.kmeans_iters, seed=kmeans_seed,
                normalize=config.normalize, workers=workers,
            )
            picked = balanced_select(model.assignments, sub_budget, select_seed, config.topup)
            for row, cluster, extra in zip(picked.rows, picked.clusters, picked.topup):
                entries.append(
                    ManifestEntry(sub.ids[row], source, int(cluster), "topup" if extra else "main")
                )
    else:
        model = kmeans_fit(
            store, k=config.k, iters=config.kmeans_iters, seed=config.seed,
            normalize=config.normalize, workers=workers,
        )
        picked = balanced_select(model.assignments, config.budget, config.seed, config.topup)
        for row, cluster, extra in zip(picked.rows, picked.clusters, picked.topup):
            entries.append(
                ManifestEntry(
                    store.ids[row], store.sources[row], int(cluster), "topup" if extra else "main"
                )
            )

    manifest = SelectionManifest(
        tool="s2l",
        seed=config.seed,
        budget=config.budget,
        k=config.k,
        config_digest=digest,
        entries=entries,
    )
    expected = min(config.budget, store.n)
    if len(manifest.entries) != expected and config.topup:
        raise RuntimeError(
            f"selection produced {len(manifest.entries)} entries, expected {expected}"
        )
    return manifest


def manifest_from_rows(
    store: TrajectoryStore, rows, tool: str, seed: int, budget: int, digest: str
) -> SelectionManifest:
    """Wrap plain row indices (a baseline's output) as a manifest.

    Baselines have no cluster structure, so entries carry cluster -1 and the
    header records k as null.
    """
    entries = [
        ManifestEntry(store.ids[int(r)], store.sources[int(r)], -1, "main") for r in rows
    ]
    return SelectionManifest(
        tool=tool, seed=seed, budget=budget, k=None, config_digest=digest, entries=entries
    )


def write_manifest(manifest: SelectionManifest, path) -> None:
    """One JSON header line, then one JSON line per selected example."""
    lines = [
        json.dumps(
            {
                "tool": manifest.tool,
                "version": MANIFEST_VERSION,
                "seed": manifest.seed,
                "budget": manifest.budget,
                "k": manifest.k,
                "config_digest": manifest.config_digest,
            },
            separators=(",", ":"),
        )
    ]
    for e in manifest.entries:
        lines.append(
            json.dumps(
                {"id": e.id, "source": e.source, "cluster": e.cluster, "round": e.round},
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> SelectionManifest:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:1: invalid JSON: {e}") from e
    if not isinstance(header, dict) or "tool" not in header:
        raise FormatError(f"{path}:1: manifest header must be an object with a 'tool' key")
    for key in ("seed", "budget", "config_digest"):
        if key not in header:
            raise FormatError(f"{path}:1: manifest header missing {key!r}")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{lineno}: invalid JSON: {e}") from e
        try:
            entries.append(
                ManifestEntry(
                    str(obj["id"]), str(obj["source"]), int(obj["cluster"]), str(obj["round"])
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}:{lineno}: malformed manifest entry: {e}") from e
    try:
        return SelectionManifest(
            tool=str(header["tool"]),
            seed=int(header["seed"]),
            budget=int(header["budget"]),
            k=None if header.get("k") is None else int(header["k"]),
            config_digest=str(header["config_digest"]),
            entries=entries,
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


class S2LSelector(BaseEstimator, TransformerMixin):
    """Estimator facade over :func:`s2l_pipeline`.

    ``fit`` clusters the store and computes the selection; ``transform``
    returns the selected-row subset of a store with matching ids.

    Parameters
    ----------
    budget : int
        Number of examples to select (capped at the store size).
    n_clusters : int, default=100
    n_iters : int, default=20
    seed : int, default=0
    per_source : bool, default=False
        Cluster and sample each source independently.
    normalize : {"none", "zscore"}, default="none"
    topup : bool, default=True
        Fill any unmet budget with uniform leftovers.
    workers : int, default=1

    Attributes
    ----------
    manifest_ : SelectionManifest
    selected_ids_ : list of str
    """

    def __init__(
        self,
        budget=1000,
        n_clusters=100,
        n_iters=20,
        seed=0,
        per_source=False,
        normalize="none",
        topup=True,
        workers=1,
    ):
        self.budget = budget
        self.n_clusters = n_clusters
        self.n_iters = n_iters
        self.seed = seed
        self.per_source = per_source
        self.normalize = normalize
        self.topup = topup
        self.workers = workers

    def _config(self) -> SelectionConfig:
        return SelectionConfig(
            budget=self.budget,
            k=self.n_clusters,
            kmeans_iters=self.n_iters,
            seed=self.seed,
            per_source=self.per_source,
            normalize=self.normalize,
            topup=self.topup,
        )

    def fit(self, X: TrajectoryStore, y=None):
        self.manifest_ = s2l_pipeline(X, self._config(), workers=self.workers)
        self.selected_ids_ = self.manifest_.ids
        return self

    def transform(self, X: TrajectoryStore) -> TrajectoryStore:
        index = X.row_index()
        rows = []
        for sid in self.selected_ids_:
            if sid not in index:
                raise ValueError(f"selected id {sid!r} not present in the given store")
            rows.append(index[sid])
        return X.take_rows(np.asarray(rows, dtype=np.int64))
