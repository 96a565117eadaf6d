"""Training-loop hook that turns per-example losses into trajectory files.

Call :meth:`TrajectoryCollector.record` for each example whenever its loss is
evaluated, :meth:`TrajectoryCollector.checkpoint` at every checkpoint
boundary, and :meth:`TrajectoryCollector.finalize` once training ends. The
resulting file (binary or JSONL) is what trajectory-based selection tools
consume.

The collector stores values exactly as supplied, rounded once to float32 (the
on-disk precision). Whether a loss is token-averaged or token-summed, and
whether it is snapshotted before or after the optimizer step, is the caller's
convention; record the same quantity consistently at every checkpoint.
"""

from __future__ import annotations

import json
import math
import numbers
import struct
from pathlib import Path

__version__ = "0.1.0"

__all__ = [
    "CollectorError",
    "IncompleteMatrixError",
    "TrajectoryCollector",
]

TRAJ_MAGIC = b"S2LT"
FORMAT_VERSION = 1
FORMATS = ("binary", "jsonl")


class CollectorError(ValueError):
    """Recorded data cannot form a complete trajectory file."""


class IncompleteMatrixError(CollectorError):
    """One or more ids have no recorded value in a closed checkpoint.

    Attributes
    ----------
    missing : list of tuple
        ``(id, checkpoint_step)`` pairs lacking a value, ids in first-seen
        order with steps ascending within each id.
    """

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"({i!r}, {s})" for i, s in self.missing[:20])
        extra = "" if len(self.missing) <= 20 else f", and {len(self.missing) - 20} more"
        super().__init__(
            f"missing values for {len(self.missing)} (id, checkpoint) pairs: "
            f"{shown}{extra}"
        )


def _round_f32(value: float) -> float:
    return struct.unpack("<f", struct.pack("<f", value))[0]


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise ValueError(f"string too long for u16 length prefix: {len(b)} bytes")
    return struct.pack("<H", len(b)) + b


class TrajectoryCollector:
    """Accumulates per-example losses checkpoint by checkpoint.

    Values recorded since the last boundary form the open column;
    ``checkpoint(step)`` closes it. Every id must have a value in every
    closed column (ragged data is rejected at finalize). Row order in the
    output file is the order ids were first recorded.

    A collector instance is single-owner: callers serialize ``record``
    calls themselves. After a successful ``finalize`` the instance is
    cleared and refuses further use.

    Examples
    --------
    >>> col = TrajectoryCollector()
    >>> for step in (500, 1000):
    ...     col.record("ex0", "web", 2.5)
    ...     col.checkpoint(step)
    >>> col.finalize("run.jsonl", format="jsonl")
    """

    def __init__(self):
        self._sources: dict[str, str] = {}
        self._columns: list[dict[str, float]] = []
        self._steps: list[int] = []
        self._pending: dict[str, float] = {}
        self._finalized = False

    def _check_open(self, op: str) -> None:
        if self._finalized:
            raise CollectorError(
                f"{op}() on a finalized collector; create a new instance"
            )

    def record(self, id: str, source: str, loss) -> None:
        """Buffer one loss value for the open checkpoint column.

        Re-recording an id within the same column overwrites (last write
        wins). An id keeps the source it was first recorded with; a
        different source later is an error.
        """
        self._check_open("record")
        if isinstance(loss, bool) or not isinstance(loss, numbers.Real):
            raise ValueError(
                f"loss for id {id!r} must be a real number, got {type(loss).__name__}"
            )
        value = float(loss)
        if not math.isfinite(value):
            raise ValueError(f"loss for id {id!r} is not finite: {value!r}")
        if value < 0:
            raise ValueError(f"loss for id {id!r} is negative: {value!r}")
        try:
            value = _round_f32(value)
        except OverflowError:
            raise ValueError(f"loss for id {id!r} overflows float32") from None
        key = str(id)
        src = str(source)
        prior = self._sources.get(key)
        if prior is not None and prior != src:
            raise ValueError(
                f"id {key!r} already recorded with source {prior!r}, got {src!r}"
            )
        self._sources[key] = src
        self._pending[key] = value

    def checkpoint(self, step: int) -> None:
        """Close the open column under training-step label ``step``.

        Steps must be non-negative and strictly increasing.
        """
        self._check_open("checkpoint")
        if isinstance(step, bool) or not isinstance(step, numbers.Integral):
            raise ValueError(f"checkpoint step must be an integer, got {step!r}")
        step = int(step)
        if step < 0:
            raise ValueError(f"checkpoint step {step} is negative")
        if step >= 2**64:
            raise ValueError(f"checkpoint step {step} does not fit in u64")
        if self._steps and step <= self._steps[-1]:
            raise ValueError(
                f"checkpoint step {step} is not greater than previous {self._steps[-1]}"
            )
        self._steps.append(step)
        self._columns.append(self._pending)
        self._pending = {}

    def finalize(self, path, format: str = "binary") -> None:
        """Validate completeness and write all closed columns to ``path``.

        Requires at least one closed checkpoint, no values buffered after
        the last boundary, and a value for every (id, checkpoint) pair.
        On success the collector is cleared and cannot be reused.
        """
        self._check_open("finalize")
        if format not in FORMATS:
            raise ValueError(f"unknown format {format!r}, expected one of {FORMATS}")
        if self._pending:
            raise CollectorError(
                f"{len(self._pending)} values recorded after the last checkpoint; "
                "call checkpoint() before finalize"
            )
        if not self._steps:
            raise CollectorError("no closed checkpoints; call checkpoint() first")
        if not self._sources:
            raise CollectorError("no values were recorded")
        missing = [
            (key, step)
            for key in self._sources
            for step, column in zip(self._steps, self._columns)
            if key not in column
        ]
        if missing:
            raise IncompleteMatrixError(missing)
        ids = list(self._sources)
        rows = [[column[key] for column in self._columns] for key in ids]
        if format == "binary":
            self._write_binary(path, ids, rows)
        else:
            self._write_jsonl(path, ids, rows)
        self._sources = {}
        self._columns = []
        self._steps = []
        self._pending = {}
        self._finalized = True

    def _write_binary(self, path, ids, rows) -> None:
        t = len(self._steps)
        buf = bytearray(TRAJ_MAGIC)
        buf += struct.pack("<IQI", FORMAT_VERSION, len(ids), t)
        buf += struct.pack(f"<{t}Q", *self._steps)
        for key, row in zip(ids, rows):
            buf += _pack_str(key)
            buf += _pack_str(self._sources[key])
            buf += struct.pack(f"<{t}f", *row)
        Path(path).write_bytes(bytes(buf))

    def _write_jsonl(self, path, ids, rows) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"checkpoint_steps": list(self._steps)}) + "\n")
            for key, row in zip(ids, rows):
                rec = {"id": key, "source": self._sources[key], "losses": row}
                f.write(json.dumps(rec) + "\n")
