"""Input validation helpers used by the domain types and estimators."""

from __future__ import annotations

import numpy as np


def as_matrix(values, name: str, dtype=np.float32) -> np.ndarray:
    """Coerce to a 2-D C-contiguous array of the given dtype."""
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str, ids=None) -> None:
    """Raise ValueError on any non-finite entry, naming the offending row id."""
    finite = np.isfinite(arr)
    if finite.all():
        return
    row = int(np.argwhere(~finite)[0][0]) if arr.ndim > 1 else 0
    which = f" (id {ids[row]!r})" if ids is not None else ""
    raise ValueError(f"{name} contains non-finite values{which}")


def check_non_negative(arr: np.ndarray, name: str, ids=None) -> None:
    neg = arr < 0
    if not neg.any():
        return
    row = int(np.argwhere(neg)[0][0]) if arr.ndim > 1 else 0
    which = f" (id {ids[row]!r})" if ids is not None else ""
    raise ValueError(f"{name} contains negative values{which}")


def check_unique_ids(ids) -> None:
    if len(set(ids)) != len(ids):
        seen = set()
        for i in ids:
            if i in seen:
                raise ValueError(f"duplicate id {i!r}")
            seen.add(i)


def check_steps(steps) -> list[int]:
    """Validate checkpoint step labels: non-negative ints, strictly increasing."""
    out = []
    prev = None
    for s in steps:
        s = int(s)
        if s < 0:
            raise ValueError(f"checkpoint step {s} is negative")
        if prev is not None and s <= prev:
            raise ValueError(f"checkpoint steps not strictly increasing: {prev} then {s}")
        out.append(s)
        prev = s
    if not out:
        raise ValueError("checkpoint_steps must be non-empty")
    return out


def check_index(idx: int, t: int, name: str) -> int:
    """Resolve a column index (negative allowed, Python-style) against width t."""
    orig = idx
    if idx < 0:
        idx += t
    if not 0 <= idx < t:
        raise ValueError(f"{name}={orig} out of range for {t} checkpoints")
    return idx


def rng_from_seed(seed: int) -> np.random.Generator:
    """Seeded 64-bit PCG64 generator; the single RNG used by the toolkit."""
    return np.random.Generator(np.random.PCG64(int(seed) % (1 << 64)))
