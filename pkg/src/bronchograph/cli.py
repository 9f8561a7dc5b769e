"""Command-line front end wiring the pipeline stages together.

Subcommands: synth, edt, skeletonize, graph, features, labels, metrics,
patterns, signatures, cohort. Batch-capable commands accept several input
files; cases run in parallel over --workers processes and results merge in
case-id order, so output bytes never depend on the worker count. Every
subcommand accepts --json for machine-readable stdout with a versioned
schema field. Exit codes: 0 success, 1 bad input, 2 when some batch cases
were skipped.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .edt import distance_transform
from .errors import BronchographError
from .features import features_to_csv
from .graph import AirwayGraph, partition_branches
from .metrics import (
    cl_dice,
    confusion_to_csv,
    detection_rates,
    label_metrics,
    overlap_metrics,
)
from .patterns import aggregate_pattern_stats, analyze_patterns, pattern_stats_to_csv
from .phantom import phantom_library, random_tree_spec, render_phantom, spec_to_json
from .signatures import SignatureMatrix, signature_matrix
from .skeleton import SkelParams, extract_skeleton, select_root
from .stats import (
    build_reference,
    flag_significant,
    rank_top_k,
    ranked_features_to_csv,
    signature_feature_table,
)
from .taxonomy import LabeledGraph, assign_labels, canonical_codebook, check_hierarchy
from .volume import Volume, load_volume, save_volume

SCHEMA = "bronchograph/cli/v1"


def _log(msg: str) -> None:
    if os.environ.get("BRONCHOGRAPH_LOG", "").lower() in ("1", "true", "debug", "info"):
        print(msg, file=sys.stderr)


def _emit(args, payload: dict, human_lines: list[str]) -> None:
    if getattr(args, "json", False):
        payload = {"schema": SCHEMA, "version": __version__, **payload}
        print(json.dumps(payload, indent=2))
    else:
        for line in human_lines:
            print(line)


def _case_id(path: str) -> str:
    base = os.path.basename(path)
    for ext in (".nhdr", ".nrrd", ".json", ".bin", ".raw"):
        if base.endswith(ext):
            base = base[: -len(ext)]
    return base


def _load_codebook(path: str | None) -> dict[int, str]:
    if path is None:
        return canonical_codebook()
    with open(path) as fh:
        raw = json.load(fh)
    return {int(k): v for k, v in raw.items()}


def _skel_params(args) -> SkelParams:
    return SkelParams(gamma=args.gamma, coverage_factor=args.coverage_factor)


def _parse_voxel(text: str | None):
    if text is None:
        return None
    return tuple(int(p) for p in text.split(","))


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _positive_workers(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def _run_batch(inputs, worker, workers: int) -> tuple[list, int]:
    """Run worker(case) over sorted inputs; failures are logged and skipped.

    Results come back in case order regardless of parallelism.
    """
    ordered = sorted(inputs)
    failures = 0
    results = []
    if workers <= 1:
        for case in ordered:
            try:
                results.append((case, worker(case)))
            except Exception as exc:  # noqa: BLE001 - batch isolation
                failures += 1
                print(f"error: case {case}: {exc}", file=sys.stderr)
                _log(traceback.format_exc())
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {case: pool.submit(worker, case) for case in ordered}
            for case in ordered:
                try:
                    results.append((case, futures[case].result()))
                except Exception as exc:  # noqa: BLE001
                    failures += 1
                    print(f"error: case {case}: {exc}", file=sys.stderr)
    return results, failures


# Batch workers are top-level functions so ProcessPoolExecutor can pickle
# them; worker args ride along via fork inheritance.
_WORKER_ARGS: dict = {}


def _skeletonize_case(path: str) -> str:
    args = _WORKER_ARGS["args"]
    mask = load_volume(path)
    edt = distance_transform(mask)
    root = select_root(mask, edt, hint=_parse_voxel(args.root))
    tree = extract_skeleton(mask, edt, root, _skel_params(args))
    out_path = os.path.join(args.out, _case_id(path) + "_skeleton.json")
    _write(out_path, tree.to_json())
    return out_path


def _graph_case(path: str) -> str:
    args = _WORKER_ARGS["args"]
    mask = load_volume(path)
    if args.spacing_override:
        sp = tuple(float(x) for x in args.spacing_override.split(","))
        mask = Volume(mask.data, sp, mask.kind)
    edt = distance_transform(mask)
    root = select_root(mask, edt, hint=_parse_voxel(args.root))
    tree = extract_skeleton(mask, edt, root, _skel_params(args))
    graph = partition_branches(tree, mask, edt)
    out_path = os.path.join(args.out, _case_id(path) + "_graph.json")
    _write(out_path, graph.to_json(include_voxels=not args.no_voxel_sets))
    return out_path


def _signatures_case(path: str) -> str:
    args = _WORKER_ARGS["args"]
    lg = LabeledGraph.from_json(open(path).read())
    matrix = signature_matrix(lg, pad_size=args.pad_size)
    out_path = os.path.join(args.out, _case_id(path) + "_signature.csv")
    _write(out_path, matrix.to_csv())
    return out_path


def _patterns_case(path: str):
    lg = LabeledGraph.from_json(open(path).read())
    return analyze_patterns(lg, case_id=_case_id(path))


def cmd_synth(args) -> int:
    if args.name == "random":
        spec = random_tree_spec(args.seed, args.branches)
    else:
        lib = phantom_library()
        if args.name not in lib:
            print(f"error: unknown fixture {args.name!r}; have {sorted(lib)}", file=sys.stderr)
            return 1
        spec = lib[args.name]
    rendered = render_phantom(spec)
    os.makedirs(args.out, exist_ok=True)
    save_volume(rendered.mask, os.path.join(args.out, "mask.nhdr"))
    save_volume(rendered.labels, os.path.join(args.out, "labels.nhdr"))
    truth = {
        "schema": "bronchograph/phantom-truth/v1",
        "name": spec.name,
        "branches": [
            {
                "name": b.name,
                "parent": b.parent,
                "generation": b.generation,
                "start_mm": list(b.start_mm),
                "end_mm": list(b.end_mm),
                "length_mm": b.length_mm,
                "label": b.label,
            }
            for b in rendered.truth
        ],
        "root_hint_voxel": [
            int(round(c / s)) for c, s in zip(spec.root().points[0], spec.spacing)
        ],
    }
    _write(os.path.join(args.out, "truth.json"), json.dumps(truth, indent=2))
    _write(os.path.join(args.out, "spec.json"), spec_to_json(spec))
    _write(
        os.path.join(args.out, "codebook.json"),
        json.dumps({str(k): v for k, v in rendered.codebook.items()}, indent=2),
    )
    outputs = {
        name: os.path.join(args.out, name + ext)
        for name, ext in (
            ("mask", ".nhdr"),
            ("labels", ".nhdr"),
            ("truth", ".json"),
            ("spec", ".json"),
            ("codebook", ".json"),
        )
    }
    _emit(
        args,
        {"command": "synth", "fixture": spec.name, "outputs": outputs},
        [outputs["mask"]],
    )
    return 0


def cmd_edt(args) -> int:
    mask = load_volume(args.input)
    field = distance_transform(mask)
    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, _case_id(args.input) + "_edt")
    np.save(base + ".npy", field.data)
    _write(
        base + ".json",
        json.dumps(
            {
                "schema": "bronchograph/edt/v1",
                "dims": list(field.dims),
                "spacing": list(field.spacing),
                "data_file": os.path.basename(base) + ".npy",
            }
        ),
    )
    _emit(
        args,
        {"command": "edt", "outputs": {"data": base + ".npy", "meta": base + ".json"}},
        [base + ".npy"],
    )
    return 0


def cmd_skeletonize(args) -> int:
    _WORKER_ARGS["args"] = args
    results, failures = _run_batch(args.inputs, _skeletonize_case, args.workers)
    paths = [p for _, p in results]
    _emit(
        args,
        {"command": "skeletonize", "outputs": paths, "failures": failures},
        paths,
    )
    return 2 if failures else 0


def cmd_graph(args) -> int:
    _WORKER_ARGS["args"] = args
    results, failures = _run_batch(args.inputs, _graph_case, args.workers)
    paths = [p for _, p in results]
    _emit(args, {"command": "graph", "outputs": paths, "failures": failures}, paths)
    return 2 if failures else 0


def cmd_features(args) -> int:
    graph = AirwayGraph.from_json(open(args.graph).read())
    csv = features_to_csv(graph)
    if args.out:
        _write(args.out, csv)
        _emit(args, {"command": "features", "outputs": [args.out]}, [args.out])
    else:
        _emit(args, {"command": "features", "csv": csv}, [csv.rstrip("\n")])
    return 0


def cmd_labels(args) -> int:
    graph = AirwayGraph.from_json(open(args.graph).read())
    labels = load_volume(args.labels)
    codebook = _load_codebook(args.codebook)
    lg = assign_labels(graph, labels, codebook)
    violations = check_hierarchy(lg)
    for v in violations:
        print(f"warning: {v}", file=sys.stderr)
    _write(args.out, lg.to_json())
    _emit(
        args,
        {"command": "labels", "outputs": [args.out], "hierarchy_violations": violations},
        [args.out],
    )
    return 0


def _metrics_report_to_csv(report: dict) -> str:
    rows = ["section,metric,value"]
    for section, values in report.items():
        if not isinstance(values, dict):
            rows.append(f",{section},{values}")
            continue
        for key, value in values.items():
            rows.append(f"{section},{key},{value}")
    return "\n".join(rows) + "\n"


def cmd_metrics(args) -> int:
    report: dict = {}
    if args.pred and args.gt:
        pred = load_volume(args.pred)
        gt = load_volume(args.gt)
        ov = overlap_metrics(pred, gt)
        report["overlap"] = {
            "dsc": ov.dsc,
            "sensitivity": ov.sensitivity,
            "precision": ov.precision,
        }
        edt_pred = distance_transform(pred)
        edt_gt = distance_transform(gt)
        skel_pred = extract_skeleton(
            pred, edt_pred, select_root(pred, edt_pred), _skel_params(args)
        )
        skel_gt = extract_skeleton(gt, edt_gt, select_root(gt, edt_gt), _skel_params(args))
        report["cldice"] = cl_dice(pred, gt, skel_pred, skel_gt)
        gt_graph = partition_branches(skel_gt, gt, edt_gt)
        det = detection_rates(pred, gt_graph, args.coverage_threshold)
        report["detection"] = {
            "tld": det.tld,
            "bnd": det.bnd,
            "t_det_mm": det.t_det,
            "t_ref_mm": det.t_ref,
            "b_det": det.b_det,
            "b_ref": det.b_ref,
        }
    if args.pred_labeled and args.gt_labeled:
        pred_lg = LabeledGraph.from_json(open(args.pred_labeled).read())
        gt_lg = LabeledGraph.from_json(open(args.gt_labeled).read())
        lm = label_metrics(pred_lg, gt_lg, level=args.level)
        report["labeling"] = {
            "level": args.level,
            "tree_consistency": lm.tree_consistency,
            "topo_distance": lm.topo_distance,
            "accuracy": lm.accuracy,
            "macro_precision": lm.macro_precision,
            "macro_sensitivity": lm.macro_sensitivity,
        }
        if args.confusion_out:
            _write(args.confusion_out, confusion_to_csv(lm))
    if not report:
        print(
            "error: nothing to evaluate; pass --pred/--gt or --pred-labeled/--gt-labeled",
            file=sys.stderr,
        )
        return 1
    doc = {"schema": "bronchograph/metrics/v1", "version": __version__, **report}
    text = json.dumps(doc, indent=2)
    if args.out:
        _write(args.out, text)
    if args.csv_out:
        _write(args.csv_out, _metrics_report_to_csv(report))
    _emit(args, {"command": "metrics", **report}, [text] if not args.out else [args.out])
    return 0


def cmd_patterns(args) -> int:
    results, failures = _run_batch(args.inputs, _patterns_case, args.workers)
    os.makedirs(args.out, exist_ok=True)
    reports = []
    paths = []
    for path, report in results:
        reports.append(report)
        out_path = os.path.join(args.out, _case_id(path) + "_patterns.json")
        _write(out_path, report.to_json())
        paths.append(out_path)
    rows = aggregate_pattern_stats(reports)
    stats_path = os.path.join(args.out, "pattern_stats.csv")
    _write(stats_path, pattern_stats_to_csv(rows))
    _emit(
        args,
        {
            "command": "patterns",
            "outputs": paths,
            "stats": stats_path,
            "failures": failures,
        },
        paths + [stats_path],
    )
    return 2 if failures else 0


def cmd_signatures(args) -> int:
    _WORKER_ARGS["args"] = args
    results, failures = _run_batch(args.inputs, _signatures_case, args.workers)
    paths = [p for _, p in results]
    _emit(args, {"command": "signatures", "outputs": paths, "failures": failures}, paths)
    return 2 if failures else 0


def cmd_cohort(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    cases: dict[str, SignatureMatrix] = {}
    for case_id in sorted(manifest):
        path = os.path.join(args.dir, case_id + ".csv")
        cases[case_id] = SignatureMatrix.from_csv(open(path).read())
    controls = [cases[c] for c in sorted(manifest) if manifest[c] == "control"]
    reference = build_reference(controls)
    os.makedirs(args.out, exist_ok=True)
    ref_path = os.path.join(args.out, "reference.csv")
    _write(ref_path, reference.to_csv())

    lines = ["case_id,component,significant"]
    for case_id in sorted(manifest):
        if manifest[case_id] != "experimental":
            continue
        flags = flag_significant(cases[case_id], reference)
        for comp, flag in zip(cases[case_id].components, flags):
            lines.append(f"{case_id},{comp},{int(flag)}")
    flags_path = os.path.join(args.out, "flags.csv")
    _write(flags_path, "\n".join(lines) + "\n")

    table = signature_feature_table(cases)
    ranked = rank_top_k(table, manifest, args.top_k)
    ranked_path = os.path.join(args.out, "ranked_features.csv")
    _write(ranked_path, ranked_features_to_csv(ranked))
    outputs = {"reference": ref_path, "flags": flags_path, "ranked": ranked_path}
    _emit(args, {"command": "cohort", "outputs": outputs}, list(outputs.values()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bronchograph",
        description="Branch-graph analysis of tubular tree masks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable stdout")
    sub = parser.add_subparsers(dest="command")

    def add_skel_flags(p):
        p.add_argument("--gamma", type=float, default=6.0, help="medialness sharpness")
        p.add_argument("--coverage-factor", type=float, default=2.0)
        p.add_argument("--spacing-override", default=None, help="sx,sy,sz")

    p = sub.add_parser("synth", parents=[common], help="render a phantom fixture")
    p.add_argument("--name", required=True, help="fixture name or 'random'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--branches", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("edt", parents=[common], help="distance transform of a mask")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edt)

    p = sub.add_parser("skeletonize", parents=[common], help="extract centerline skeletons")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--root", default=None, help="x,y,z root hint")
    p.add_argument("--workers", type=_positive_workers, default=1)
    add_skel_flags(p)
    p.set_defaults(func=cmd_skeletonize)

    p = sub.add_parser("graph", parents=[common], help="mask -> branch graph")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--root", default=None)
    p.add_argument("--workers", type=_positive_workers, default=1)
    p.add_argument("--no-voxel-sets", action="store_true")
    add_skel_flags(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("features", parents=[common], help="per-branch node features CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("labels", parents=[common], help="assign anatomical labels to a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--codebook", default=None, help="JSON id->name map (default: canonical)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("metrics", parents=[common], help="overlap/topology/labeling metrics")
    p.add_argument("--pred", default=None)
    p.add_argument("--gt", default=None)
    p.add_argument("--pred-labeled", default=None)
    p.add_argument("--gt-labeled", default=None)
    p.add_argument("--level", default="segmental", choices=["lobar", "segmental", "subsegmental"])
    p.add_argument("--coverage-threshold", type=float, default=0.8)
    p.add_argument("--confusion-out", default=None)
    p.add_argument("--csv-out", default=None)
    p.add_argument("--out", default=None)
    add_skel_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("patterns", parents=[common], help="branching-pattern reports")
    p.add_argument("inputs", nargs="+", help="labeled-graph JSON files")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=_positive_workers, default=1)
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("signatures", parents=[common], help="morphological signature matrices")
    p.add_argument("inputs", nargs="+", help="labeled-graph JSON files")
    p.add_argument("--out", required=True)
    p.add_argument("--pad-size", type=int, default=64)
    p.add_argument("--workers", type=_positive_workers, default=1)
    p.set_defaults(func=cmd_signatures)

    p = sub.add_parser("cohort", parents=[common], help="reference stats, flags, feature ranking")
    p.add_argument("--dir", required=True, help="directory of <case>.csv signature matrices")
    p.add_argument("--manifest", required=True, help="JSON {case_id: control|experimental}")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cohort)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except BronchographError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
