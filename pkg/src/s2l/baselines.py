"""One-shot selection baselines: random, score-ranked, and facility location.

All selectors return ascending row indices except facility location, whose
order is the greedy pick order. Score ties break to the lower row index so
every baseline is deterministic for a fixed input and seed.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .store import FeatureMatrix, ScoreVector
from .validation import rng_from_seed

SYMMETRY_TOL = 1e-9

BASELINE_METHODS = (
    "random",
    "least-confidence",
    "middle-perplexity",
    "high-learnability",
    "facility-location",
)


def _check_budget(budget: int) -> int:
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    return int(budget)


def random_select(n: int, budget: int, seed: int) -> np.ndarray:
    """Uniform sample without replacement of min(budget, n) rows, ascending."""
    _check_budget(budget)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = rng_from_seed(seed)
    take = min(budget, n)
    return np.sort(rng.choice(n, size=take, replace=False)).astype(np.int64)


def _rank_rows(scores: ScoreVector, descending: bool = False) -> list[int]:
    # score ties break by ascending id string, making ranks data-determined
    # rather than row-order-determined
    sign = -1.0 if descending else 1.0
    return sorted(range(scores.n), key=lambda i: (sign * scores.scores[i], scores.ids[i]))


def least_confidence_select(scores: ScoreVector, budget: int) -> np.ndarray:
    """Rows with the lowest scores (e.g. model confidence), ascending indices."""
    _check_budget(budget)
    take = min(budget, scores.n)
    return np.sort(np.asarray(_rank_rows(scores)[:take], dtype=np.int64))


def middle_perplexity_select(scores: ScoreVector, budget: int) -> np.ndarray:
    """A contiguous band of the score ranking centered on the median.

    The band starts at offset floor((n - B) / 2) in the ascending ranking and
    spans min(budget, n) rows; with budget >= n it is everything.
    """
    _check_budget(budget)
    n = scores.n
    take = min(budget, n)
    start = (n - take) // 2
    band = _rank_rows(scores)[start : start + take]
    return np.sort(np.asarray(band, dtype=np.int64))


def high_learnability_select(scores: ScoreVector, budget: int) -> np.ndarray:
    """Rows with the largest scores (e.g. early-minus-late loss drop)."""
    _check_budget(budget)
    take = min(budget, scores.n)
    top = _rank_rows(scores, descending=True)[:take]
    return np.sort(np.asarray(top, dtype=np.int64))


@dataclass(frozen=True)
class SimilarityMatrix:
    """Validated dense pairwise similarity: symmetric, non-negative, with
    each diagonal entry at least as large as anything in its row."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"similarity must be square, got shape {values.shape}")
        if values.shape[0] < 1:
            raise ValueError("similarity must be non-empty")
        if not np.isfinite(values).all():
            raise ValueError("similarity contains non-finite values")
        if values.min() < 0:
            raise ValueError("similarity must be non-negative")
        if np.abs(values - values.T).max() > SYMMETRY_TOL:
            raise ValueError(f"similarity is not symmetric within {SYMMETRY_TOL}")
        diag = np.diag(values)
        if (values.max(axis=1) > diag + SYMMETRY_TOL).any():
            raise ValueError("similarity diagonal must dominate its row")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def similarity_from_features(features: FeatureMatrix) -> SimilarityMatrix:
    """Shifted cosine similarity (cosine + 1, so values lie in [0, 2])."""
    x = features.features.astype(np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    unit = x / norms
    sim = unit @ unit.T
    sim = (sim + sim.T) / 2.0
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(sim + 1.0)


def facility_location_select(sim: SimilarityMatrix, budget: int) -> tuple[np.ndarray, np.ndarray]:
    """Greedy maximization of sum_i max_{j in S} sim(i, j) with lazy gains.

    Returns (rows in pick order, marginal gains). Gain ties pick the lower
    row index. The greedy set is within a (1 - 1/e) factor of the best
    same-size set because coverage is monotone submodular.
    """
    _check_budget(budget)
    values = sim.values
    n = sim.n
    take = min(budget, n)
    covered = np.zeros(n, dtype=np.float64)
    heap = [(-float(values[i].sum()), i, 0) for i in range(n)]
    heapq.heapify(heap)
    chosen: list[int] = []
    gains: list[float] = []
    in_set = np.zeros(n, dtype=bool)
    for step in range(take):
        while True:
            neg_gain, idx, stamp = heapq.heappop(heap)
            if in_set[idx]:
                continue
            if stamp == step:
                break
            fresh = float(np.maximum(values[idx] - covered, 0.0).sum())
            heapq.heappush(heap, (-fresh, idx, step))
        chosen.append(idx)
        gains.append(-neg_gain)
        in_set[idx] = True
        np.maximum(covered, values[idx], out=covered)
    return np.asarray(chosen, dtype=np.int64), np.asarray(gains, dtype=np.float64)


def coverage_value(sim: SimilarityMatrix, rows) -> float:
    """Objective sum_i max_{j in rows} sim(i, j); 0.0 for an empty set."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        return 0.0
    return float(sim.values[:, rows].max(axis=1).sum())
