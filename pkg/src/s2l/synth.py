"""Synthetic loss-trajectory generation from shape templates.

Each template contributes ``count`` trajectories: a base curve (a builtin
shape or an explicit per-checkpoint vector) plus independent Gaussian noise,
clipped at zero. Generation is a pure function of (templates, t, seed), and
the returned labels give the template index of every row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .store import TrajectoryStore, default_checkpoint_steps
from .validation import rng_from_seed

BUILTIN_SHAPES = ("decreasing", "increasing", "double_descent", "flat")


@dataclass(frozen=True)
class TemplateSpec:
    """One family of trajectories: a base shape, a row count, and noise."""

    name: str
    shape: object
    count: int
    noise_sigma: float = 0.0
    source: str = "synthetic"

    def __post_init__(self):
        if not self.name:
            raise ValueError("template name must be non-empty")
        if self.count < 1:
            raise ValueError(f"template {self.name!r}: count must be >= 1")
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError(f"template {self.name!r}: noise_sigma must be >= 0")
        if not self.source:
            raise ValueError(f"template {self.name!r}: source must be non-empty")

    def base_curve(self, t: int) -> np.ndarray:
        return base_curve(self.shape, t, name=self.name)


def base_curve(shape, t: int, name: str = "?") -> np.ndarray:
    """Resolve a builtin shape name or explicit vector to t non-negative floats.

    Builtins: ``decreasing`` is a geometric decay from 4.0 toward 0.5,
    ``increasing`` is its mirror, ``double_descent`` adds a Gaussian bump
    centered mid-training to the decay, and ``flat`` sits at 2.0.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    j = np.arange(t, dtype=np.float64)
    if isinstance(shape, str):
        if shape == "decreasing":
            return 0.5 + 3.5 * 0.6**j
        if shape == "increasing":
            return (0.5 + 3.5 * 0.6**j)[::-1].copy()
        if shape == "double_descent":
            center = (t - 1) / 2.0
            width = max(t / 6.0, 0.75)
            return 0.5 + 3.5 * 0.6**j + 1.5 * np.exp(-((j - center) ** 2) / (2 * width**2))
        if shape == "flat":
            return np.full(t, 2.0)
        raise ValueError(f"template {name!r}: unknown shape {shape!r}")
    vec = np.asarray(shape, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != t:
        raise ValueError(f"template {name!r}: explicit shape must have length {t}")
    if not np.isfinite(vec).all() or (vec < 0).any():
        raise ValueError(f"template {name!r}: explicit shape must be finite and >= 0")
    return vec.copy()


def generate(templates, t: int, seed: int) -> tuple[TrajectoryStore, np.ndarray]:
    """Build a store of noisy template trajectories plus per-row template labels.

    Row ids are ``t{template_index:02d}-{template_name}-{row:05d}``; rows
    appear grouped by template, in template order. Noise is only drawn for
    templates with ``noise_sigma > 0``, so zero-noise templates reproduce
    their base curve exactly for every seed.
    """
    templates = list(templates)
    if not templates:
        raise ValueError("at least one template is required")
    rng = rng_from_seed(seed)
    blocks = []
    ids: list[str] = []
    sources: list[str] = []
    labels = []
    for ti, spec in enumerate(templates):
        base = spec.base_curve(t)
        block = np.broadcast_to(base, (spec.count, t)).copy()
        if spec.noise_sigma > 0:
            block += rng.normal(0.0, spec.noise_sigma, size=(spec.count, t))
            np.clip(block, 0.0, None, out=block)
        blocks.append(block.astype(np.float32))
        ids.extend(f"t{ti:02d}-{spec.name}-{i:05d}" for i in range(spec.count))
        sources.extend([spec.source] * spec.count)
        labels.append(np.full(spec.count, ti, dtype=np.int64))
    store = TrajectoryStore(
        ids=ids,
        sources=sources,
        losses=np.vstack(blocks),
        checkpoint_steps=default_checkpoint_steps(t),
    )
    return store, np.concatenate(labels)


def load_templates(path) -> list[TemplateSpec]:
    """Read a JSON list of template objects.

    Required keys: name, shape, count. Optional: noise_sigma (default 0),
    source (default "synthetic"). Unknown keys are rejected to catch typos.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(raw, list) or not raw:
        raise FormatError(f"{path}: expected a non-empty JSON list of templates")
    known = {"name", "shape", "count", "noise_sigma", "source"}
    specs = []
    for i, obj in enumerate(raw):
        if not isinstance(obj, dict):
            raise FormatError(f"{path}: template {i} is not an object")
        extra = set(obj) - known
        if extra:
            raise FormatError(f"{path}: template {i} has unknown keys {sorted(extra)}")
        try:
            specs.append(
                TemplateSpec(
                    name=str(obj["name"]),
                    shape=obj["shape"],
                    count=int(obj["count"]),
                    noise_sigma=float(obj.get("noise_sigma", 0.0)),
                    source=str(obj.get("source", "synthetic")),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}: template {i} is malformed: {e}") from e
    return specs
