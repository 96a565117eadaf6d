"""Readers and writers for the trajectory and feature file formats.

Two trajectory encodings carry the same data:

* JSONL: optional header line ``{"checkpoint_steps": [...]}``, then one
  ``{"id", "source", "losses"}`` object per line. Unknown keys are ignored.
  Missing header defaults steps to 500, 1000, 1500, ...
* Binary: magic ``S2LT``, u32 version, u64 n, u32 T, T x u64 steps, then per
  row: u16-length-prefixed UTF-8 id and source, T little-endian float32.

Feature matrices use the analogous ``S2LF`` binary layout. Binary roundtrips
are bit-exact; JSONL preserves float32 values exactly via shortest-decimal
serialization.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .store import FeatureMatrix, TrajectoryStore, default_checkpoint_steps

TRAJ_MAGIC = b"S2LT"
FEAT_MAGIC = b"S2LF"
FORMAT_VERSION = 1

TRAJECTORY_FORMATS = ("jsonl", "binary")


def detect_format(path) -> str:
    """'binary' if the file starts with a known magic, else 'jsonl'."""
    with open(path, "rb") as f:
        magic = f.read(4)
    return "binary" if magic in (TRAJ_MAGIC, FEAT_MAGIC) else "jsonl"


def _check_format(fmt: str) -> str:
    if fmt not in TRAJECTORY_FORMATS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {TRAJECTORY_FORMATS}")
    return fmt


def load_trajectories(path, format: str | None = None) -> TrajectoryStore:
    """Load and validate a trajectory file; row order equals file order."""
    if format is None:
        format = detect_format(path)
    _check_format(format)
    if format == "binary":
        return _load_binary(path)
    return _load_jsonl(path)


def write_trajectories(store: TrajectoryStore, path, format: str = "binary") -> None:
    _check_format(format)
    if format == "binary":
        _write_binary(store, path)
    else:
        _write_jsonl(store, path)


def _validate_row(id_, losses: np.ndarray, t: int, path, seen: set) -> None:
    if id_ in seen:
        raise FormatError(f"{path}: duplicate id {id_!r}")
    seen.add(id_)
    if losses.shape[0] != t:
        raise FormatError(
            f"{path}: row {id_!r} has {losses.shape[0]} losses, expected {t}"
        )
    if not np.isfinite(losses).all():
        raise FormatError(f"{path}: row {id_!r} has a non-finite loss")
    if (losses < 0).any():
        raise FormatError(f"{path}: row {id_!r} has a negative loss")


def _build_store(ids, sources, rows, steps, path) -> TrajectoryStore:
    try:
        return TrajectoryStore(
            ids=ids,
            sources=sources,
            losses=np.vstack(rows),
            checkpoint_steps=steps,
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def _load_jsonl(path) -> TrajectoryStore:
    ids: list[str] = []
    sources: list[str] = []
    rows: list[np.ndarray] = []
    steps = None
    seen: set[str] = set()
    t = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            if lineno == 1 and "checkpoint_steps" in obj and "id" not in obj:
                steps = obj["checkpoint_steps"]
                continue
            if "id" not in obj or "source" not in obj or "losses" not in obj:
                raise FormatError(
                    f"{path}:{lineno}: record needs id, source, and losses keys"
                )
            id_ = str(obj["id"])
            try:
                losses = np.asarray(obj["losses"], dtype=np.float32).reshape(-1)
            except (TypeError, ValueError) as e:
                raise FormatError(f"{path}: row {id_!r} has malformed losses") from e
            if t is None:
                t = losses.shape[0]
                if t == 0:
                    raise FormatError(f"{path}: row {id_!r} has no losses")
            _validate_row(id_, losses, t, path, seen)
            ids.append(id_)
            sources.append(str(obj["source"]))
            rows.append(losses)
    if not rows:
        raise FormatError(f"{path}: no trajectory records")
    if steps is None:
        steps = default_checkpoint_steps(t)
    return _build_store(ids, sources, rows, steps, path)


def _write_jsonl(store: TrajectoryStore, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        header = {"checkpoint_steps": list(store.checkpoint_steps)}
        f.write(json.dumps(header) + "\n")
        for row in range(store.n):
            rec = {
                "id": store.ids[row],
                "source": store.sources[row],
                "losses": [float(v) for v in store.losses[row]],
            }
            f.write(json.dumps(rec) + "\n")


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise ValueError(f"string too long for u16 length prefix: {len(b)} bytes")
    return struct.pack("<H", len(b)) + b


def _write_binary(store: TrajectoryStore, path) -> None:
    buf = bytearray()
    buf += TRAJ_MAGIC
    buf += struct.pack("<IQI", FORMAT_VERSION, store.n, store.t)
    buf += np.asarray(store.checkpoint_steps, dtype="<u8").tobytes()
    losses = np.ascontiguousarray(store.losses, dtype="<f4")
    for row in range(store.n):
        buf += _pack_str(store.ids[row])
        buf += _pack_str(store.sources[row])
        buf += losses[row].tobytes()
    Path(path).write_bytes(bytes(buf))


class _Cursor:
    """Sequential reader over a bytes buffer with format-error context."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        vals = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return vals

    def take(self, size: int) -> bytes:
        if self.off + size > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        out = self.data[self.off : self.off + size]
        self.off += size
        return out

    def take_str(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{self.path}: invalid UTF-8 string") from e


def _load_binary(path) -> TrajectoryStore:
    data = Path(path).read_bytes()
    if len(data) == 0:
        raise FormatError(f"{path}: empty file")
    cur = _Cursor(data, path)
    if cur.take(4) != TRAJ_MAGIC:
        raise FormatError(f"{path}: bad magic, not a trajectory binary")
    version, n, t = cur.unpack("<IQI")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n == 0 or t == 0:
        raise FormatError(f"{path}: empty store (n={n}, T={t})")
    steps = np.frombuffer(cur.take(8 * t), dtype="<u8").astype(np.int64).tolist()
    ids: list[str] = []
    sources: list[str] = []
    losses = np.empty((n, t), dtype=np.float32)
    seen: set[str] = set()
    row_bytes = 4 * t
    for row in range(n):
        id_ = cur.take_str()
        sources.append(cur.take_str())
        losses[row] = np.frombuffer(cur.take(row_bytes), dtype="<f4")
        _validate_row(id_, losses[row], t, path, seen)
        ids.append(id_)
    if cur.off != len(data):
        raise FormatError(f"{path}: {len(data) - cur.off} trailing bytes")
    return _build_store(ids, sources, [losses], steps, path)


def load_features(path) -> FeatureMatrix:
    """Load an ``S2LF`` feature binary."""
    data = Path(path).read_bytes()
    if len(data) == 0:
        raise FormatError(f"{path}: empty file")
    cur = _Cursor(data, path)
    if cur.take(4) != FEAT_MAGIC:
        raise FormatError(f"{path}: bad magic, not a feature binary")
    version, n, d = cur.unpack("<IQI")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n == 0 or d == 0:
        raise FormatError(f"{path}: empty feature matrix (n={n}, d={d})")
    ids: list[str] = []
    feats = np.empty((n, d), dtype=np.float32)
    seen: set[str] = set()
    for row in range(n):
        id_ = cur.take_str()
        if id_ in seen:
            raise FormatError(f"{path}: duplicate id {id_!r}")
        seen.add(id_)
        feats[row] = np.frombuffer(cur.take(4 * d), dtype="<f4")
        if not np.isfinite(feats[row]).all():
            raise FormatError(f"{path}: row {id_!r} has a non-finite feature")
        ids.append(id_)
    if cur.off != len(data):
        raise FormatError(f"{path}: {len(data) - cur.off} trailing bytes")
    try:
        return FeatureMatrix(ids=ids, features=feats)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def write_features(features: FeatureMatrix, path) -> None:
    buf = bytearray()
    buf += FEAT_MAGIC
    n, d = features.features.shape
    buf += struct.pack("<IQI", FORMAT_VERSION, n, d)
    feats = np.ascontiguousarray(features.features, dtype="<f4")
    for row in range(n):
        buf += _pack_str(features.ids[row])
        buf += feats[row].tobytes()
    Path(path).write_bytes(bytes(buf))
