"""Diagnostics over fitted cluster models and selection manifests.

Reports are plain dicts (JSON-ready) plus a deterministic text rendering.
Entropy is natural-log Shannon entropy over the cluster histogram, with
0 * log 0 taken as 0, so it lies in [0, ln K].
"""

from __future__ import annotations

import math

import numpy as np

from .cluster import ClusterModel, assign
from .errors import IntegrityError
from .select import SelectionManifest
from .store import TrajectoryStore


def entropy(counts) -> float:
    """Natural-log entropy of a count histogram (zero counts contribute 0)."""
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def centroid_shape(centroid) -> str:
    """Classify a centroid as "down", "up", or "other" by its step signs."""
    diffs = np.diff(np.asarray(centroid, dtype=np.float64))
    if diffs.size == 0:
        return "other"
    if (diffs <= 0).all() and (diffs < 0).any():
        return "down"
    if (diffs >= 0).all() and (diffs > 0).any():
        return "up"
    return "other"


def cluster_report(model: ClusterModel) -> dict:
    """Cluster sizes, size quantiles, objective, and centroid shape counts."""
    sizes = model.cluster_sizes()
    shapes = [centroid_shape(c) for c in model.centroids]
    return {
        "k": model.k,
        "n": int(model.assignments.shape[0]),
        "objective": float(model.objective),
        "iters_run": model.iters_run,
        "seed": model.seed,
        "normalize": model.normalize,
        "sizes": [int(s) for s in sizes],
        "size_stats": {
            "min": int(sizes.min()),
            "p25": float(np.percentile(sizes, 25)),
            "median": float(np.percentile(sizes, 50)),
            "p75": float(np.percentile(sizes, 75)),
            "max": int(sizes.max()),
        },
        "shapes": {
            "up": shapes.count("up"),
            "down": shapes.count("down"),
            "other": shapes.count("other"),
        },
    }


def selection_report(
    manifest: SelectionManifest, store: TrajectoryStore, model: ClusterModel | None = None
) -> dict:
    """Compare the selected subset against the full store.

    Tallies per-source counts and fractions for both, and, when a model is
    given, per-cluster coverage under that model's labeling: entropies of the
    two cluster histograms, their difference, and any clusters that are
    populated in the store but absent from the selection. Every manifest id
    must exist in the store.
    """
    index = store.row_index()
    rows = []
    for e in manifest.entries:
        if e.id not in index:
            raise IntegrityError(f"manifest id {e.id!r} not found in the trajectory store")
        rows.append(index[e.id])
    rows = np.asarray(rows, dtype=np.int64)

    report: dict = {
        "tool": manifest.tool,
        "n": store.n,
        "selected": int(rows.shape[0]),
        "budget": manifest.budget,
        "sources": {},
    }
    selected_mask = np.zeros(store.n, dtype=bool)
    selected_mask[rows] = True
    n_selected = max(int(rows.shape[0]), 1)
    seen = []
    for src in store.sources:
        if src not in seen:
            seen.append(src)
    src_arr = np.asarray(store.sources)
    for src in seen:
        in_src = src_arr == src
        total = int(in_src.sum())
        picked = int((in_src & selected_mask).sum())
        report["sources"][src] = {
            "total": total,
            "total_fraction": total / store.n,
            "selected": picked,
            "selected_fraction": picked / n_selected,
        }

    if model is not None:
        if model.ids is not None and list(model.ids) == list(store.ids):
            labels = model.assignments
        else:
            labels = assign(model, store)
        full_counts = np.bincount(labels, minlength=model.k)
        sel_counts = np.bincount(labels[rows], minlength=model.k)
        zero_coverage = np.flatnonzero((full_counts > 0) & (sel_counts == 0))
        report["clusters"] = {
            "k": model.k,
            "dataset_sizes": [int(c) for c in full_counts],
            "selected_sizes": [int(c) for c in sel_counts],
            "dataset_entropy": entropy(full_counts),
            "selection_entropy": entropy(sel_counts),
            "entropy_delta": entropy(sel_counts) - entropy(full_counts),
            "max_entropy": math.log(model.k) if model.k > 1 else 0.0,
            "zero_coverage": [int(c) for c in zero_coverage],
        }
    return report


def render_cluster_report(report: dict) -> str:
    stats = report["size_stats"]
    shapes = report["shapes"]
    lines = [
        f"clusters      {report['k']}",
        f"examples      {report['n']}",
        f"objective     {report['objective']:.6f}",
        f"iterations    {report['iters_run']}",
        f"normalize     {report['normalize']}",
        "cluster sizes min={min} p25={p25:.1f} median={median:.1f} p75={p75:.1f} max={max}".format(
            **stats
        ),
        f"shapes        down={shapes['down']} up={shapes['up']} other={shapes['other']}",
    ]
    return "\n".join(lines)


def render_selection_report(report: dict) -> str:
    lines = [
        f"tool          {report['tool']}",
        f"selected      {report['selected']} of {report['n']} (budget {report['budget']})",
        "source        total      share   selected   share",
    ]
    for src, row in report["sources"].items():
        lines.append(
            f"{src:<13} {row['total']:>6} {row['total_fraction']:>9.4f} "
            f"{row['selected']:>10} {row['selected_fraction']:>7.4f}"
        )
    if "clusters" in report:
        c = report["clusters"]
        lines += [
            f"cluster entropy dataset={c['dataset_entropy']:.4f} "
            f"selection={c['selection_entropy']:.4f} "
            f"delta={c['entropy_delta']:+.4f} max={c['max_entropy']:.4f}",
            f"zero-coverage clusters: {len(c['zero_coverage'])}",
        ]
    return "\n".join(lines)
