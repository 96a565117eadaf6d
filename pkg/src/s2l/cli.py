"""Command-line front end.

Subcommands: synth, cluster, select, baseline, report, convert. Every
command takes --seed and --out and finishes with a one-line summary that
includes the run's config digest. Exit codes: 0 on success, 1 for usage or
argument errors, 2 for unreadable, malformed, or inconsistent data files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import baselines as bl
from .cluster import kmeans_fit, load_model, save_model
from .errors import IntegrityError, S2LError
from .io import (
    TRAJECTORY_FORMATS,
    detect_format,
    load_features,
    load_trajectories,
    write_trajectories,
)
from .report import (
    cluster_report,
    render_cluster_report,
    render_selection_report,
    selection_report,
)
from .select import (
    SelectionConfig,
    config_digest,
    load_manifest,
    manifest_from_rows,
    s2l_pipeline,
    write_manifest,
)
from .store import derive_scalar
from .synth import generate, load_templates

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return USAGE_EXIT


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="s2l", description="Loss-trajectory data selection")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate synthetic trajectories from templates")
    p.add_argument("--templates", required=True, help="JSON template file")
    p.add_argument("--t", type=int, default=8, help="checkpoints per trajectory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output trajectory file")
    p.add_argument("--format", choices=TRAJECTORY_FORMATS, default=None,
                   help="output format (default: by extension)")
    p.add_argument("--labels-out", default=None, help="optional template-label JSONL")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("cluster", help="fit k-means over a trajectory file")
    p.add_argument("--traj", required=True, help="trajectory file (jsonl or binary)")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", choices=("none", "zscore"), default="none")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("select", help="cluster-balanced subset selection")
    p.add_argument("--traj", required=True)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--per-source", action=argparse.BooleanOptionalAction, default=None,
                   help="cluster and sample each source independently")
    p.add_argument("--normalize", choices=("none", "zscore"), default=None)
    p.add_argument("--topup", action=argparse.BooleanOptionalAction, default=None,
                   help="fill any unmet budget with uniform leftovers")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", default=None, help="JSON config file; flags win")
    p.add_argument("--out", required=True, help="output manifest JSONL")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("baseline", help="one-shot baseline selection")
    p.add_argument("--method", required=True, choices=bl.BASELINE_METHODS)
    p.add_argument("--traj", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--early-index", type=int, default=0)
    p.add_argument("--late-index", type=int, default=-1)
    p.add_argument("--features", default=None,
                   help="feature file (required for facility-location)")
    p.add_argument("--out", required=True, help="output manifest JSONL")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("report", help="describe a model and optionally a selection")
    p.add_argument("--model", required=True, help="cluster model JSON")
    p.add_argument("--manifest", default=None, help="selection manifest JSONL")
    p.add_argument("--traj", default=None, help="trajectory file for the manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("convert", help="convert trajectory files between formats")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--from", dest="from_format", choices=TRAJECTORY_FORMATS, default=None)
    p.add_argument("--to", dest="to_format", choices=TRAJECTORY_FORMATS, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_convert)

    return parser


def _format_for(path, explicit):
    if explicit is not None:
        return explicit
    return "jsonl" if str(path).endswith(".jsonl") else "binary"


def _cmd_synth(args) -> int:
    templates = load_templates(args.templates)
    store, labels = generate(templates, args.t, args.seed)
    fmt = _format_for(args.out, args.format)
    write_trajectories(store, args.out, format=fmt)
    if args.labels_out is not None:
        lines = [
            json.dumps({"id": sid, "label": int(lab)}, separators=(",", ":"))
            for sid, lab in zip(store.ids, labels)
        ]
        Path(args.labels_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    digest = config_digest(
        {"tool": "synth", "seed": args.seed, "t": args.t, "store": store.digest()}
    )
    print(
        f"s2l synth: wrote {store.n} x {store.t} trajectories to {args.out} "
        f"(digest={digest})"
    )
    return 0


def _cmd_cluster(args) -> int:
    store = load_trajectories(args.traj)
    model = kmeans_fit(
        store, k=args.k, iters=args.iters, seed=args.seed,
        normalize=args.normalize, workers=args.workers,
    )
    save_model(model, args.out)
    digest = config_digest(
        {
            "tool": "cluster",
            "k": args.k,
            "iters": args.iters,
            "seed": args.seed,
            "normalize": args.normalize,
            "store": store.digest(),
        }
    )
    print(
        f"s2l cluster: k={model.k} objective={model.objective:.6f} "
        f"iters={model.iters_run} model={args.out} (digest={digest})"
    )
    return 0


def _merge_select_config(args) -> SelectionConfig:
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise S2LError(f"{args.config}: invalid JSON: {e}") from e
        if not isinstance(file_cfg, dict):
            raise S2LError(f"{args.config}: config must be a JSON object")
        known = {"budget", "k", "kmeans_iters", "seed", "per_source", "normalize", "topup"}
        extra = set(file_cfg) - known
        if extra:
            raise S2LError(f"{args.config}: unknown config keys {sorted(extra)}")

    def pick(flag, key, default):
        if flag is not None:
            return flag
        if key in file_cfg:
            return file_cfg[key]
        return default

    budget = pick(args.budget, "budget", None)
    if budget is None:
        raise ValueError("--budget is required (flag or config file)")
    return SelectionConfig(
        budget=int(budget),
        k=int(pick(args.k, "k", 100)),
        kmeans_iters=int(pick(args.iters, "kmeans_iters", 20)),
        seed=int(pick(args.seed, "seed", 0)),
        per_source=bool(pick(args.per_source, "per_source", False)),
        normalize=str(pick(args.normalize, "normalize", "none")),
        topup=bool(pick(args.topup, "topup", True)),
    )


def _cmd_select(args) -> int:
    config = _merge_select_config(args)
    store = load_trajectories(args.traj)
    manifest = s2l_pipeline(store, config, workers=args.workers)
    write_manifest(manifest, args.out)
    print(
        f"s2l select: {len(manifest.entries)} of {store.n} examples -> {args.out} "
        f"(digest={manifest.config_digest})"
    )
    return 0


def _cmd_baseline(args) -> int:
    if args.method == "facility-location" and args.features is None:
        raise ValueError("facility-location needs --features")
    if args.method != "facility-location" and args.features is not None:
        raise ValueError("--features is only meaningful for facility-location")
    store = load_trajectories(args.traj)

    payload = {
        "tool": args.method,
        "budget": args.budget,
        "seed": args.seed,
        "early_index": args.early_index,
        "late_index": args.late_index,
        "store": store.digest(),
    }
    if args.method == "random":
        rows = bl.random_select(store.n, args.budget, args.seed)
    elif args.method == "least-confidence":
        scores = derive_scalar(store, "confidence", late_index=args.late_index)
        rows = bl.least_confidence_select(scores, args.budget)
    elif args.method == "middle-perplexity":
        scores = derive_scalar(store, "perplexity", late_index=args.late_index)
        rows = bl.middle_perplexity_select(scores, args.budget)
    elif args.method == "high-learnability":
        scores = derive_scalar(
            store, "learnability", early_index=args.early_index, late_index=args.late_index
        )
        rows = bl.high_learnability_select(scores, args.budget)
    else:
        features = load_features(args.features)
        index = store.row_index()
        missing = [i for i in features.ids if i not in index]
        if missing:
            raise IntegrityError(
                f"feature ids not present in {args.traj}: {missing[:5]!r}"
            )
        payload["features"] = features.digest()
        sim = bl.similarity_from_features(features)
        picked, _ = bl.facility_location_select(sim, args.budget)
        rows = [index[features.ids[r]] for r in picked]

    digest = config_digest(payload)
    manifest = manifest_from_rows(store, rows, args.method, args.seed, args.budget, digest)
    write_manifest(manifest, args.out)
    print(
        f"s2l baseline[{args.method}]: {len(manifest.entries)} of {store.n} examples "
        f"-> {args.out} (digest={digest})"
    )
    return 0


def _cmd_report(args) -> int:
    if (args.manifest is None) != (args.traj is None):
        raise ValueError("--manifest and --traj must be given together")
    model = load_model(args.model)
    report = {"cluster": cluster_report(model)}
    text = render_cluster_report(report["cluster"])
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        store = load_trajectories(args.traj)
        report["selection"] = selection_report(manifest, store, model)
        text += "\n" + render_selection_report(report["selection"])
    if args.out is not None:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(text)
    digest = config_digest({"tool": "report", "model": args.model, "seed": args.seed})
    dest = args.out if args.out is not None else "stdout"
    print(f"s2l report: wrote {dest} (digest={digest})")
    return 0


def _cmd_convert(args) -> int:
    in_fmt = args.from_format or detect_format(args.in_path)
    store = load_trajectories(args.in_path, format=in_fmt)
    out_fmt = _format_for(args.out, args.to_format)
    write_trajectories(store, args.out, format=out_fmt)
    digest = config_digest({"tool": "convert", "store": store.digest()})
    print(
        f"s2l convert: {args.in_path} ({in_fmt}) -> {args.out} ({out_fmt}) "
        f"(digest={digest})"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except S2LError as e:
        print(f"s2l: error: {e}", file=sys.stderr)
        return DATA_EXIT
    except OSError as e:
        print(f"s2l: error: {e}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as e:
        print(f"s2l: error: {e}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
