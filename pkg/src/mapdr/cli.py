"""Command-line surface: validate, eval, project, synth, baseline.

Exit codes: 0 success, 1 validation or metric-domain failure, 2 I/O or
usage error. Every command is deterministic given its flags and inputs;
per-clip work fans out to a thread pool sized by ``--jobs`` and outputs are
ordered by clip id regardless of completion order. The environment
variable ``MAPDR_CONVENTIONS`` (for example
``quaternion_order=wxyz,near_clip=0.2``) overrides projection defaults;
command-line flags override both.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from mapdr import __version__, baseline, dataio, geometry, metrics, overlay, report, synthgen
from mapdr.core import PredictionSet
from mapdr.dataio import (
    DATA_FILENAME,
    LABEL_FILENAME,
    PREDICTION_FILENAME,
    DatasetFormatError,
)
from mapdr.geometry import ProjectionConfig


def _fail(message: str, code: int) -> int:
    print(f"mapdr: {message}", file=sys.stderr)
    return code


def _projection_config(args: argparse.Namespace) -> ProjectionConfig:
    overrides: dict = {}
    env = os.environ.get("MAPDR_CONVENTIONS")
    if env:
        overrides.update(geometry.parse_convention_overrides(env))
    if getattr(args, "quaternion_order", None):
        overrides["quaternion_order"] = args.quaternion_order
    if getattr(args, "pose_direction", None):
        overrides["pose_direction"] = args.pose_direction
    if getattr(args, "near_clip", None) is not None:
        overrides["near_clip"] = args.near_clip
    return ProjectionConfig(**overrides)


def _clip_dirs(root: Path) -> list[tuple[str, Path]]:
    """(clip id, directory) pairs under ``root``; a bare clip dir is itself."""
    if (root / DATA_FILENAME).is_file():
        return [(root.name, root)]
    return [(cid, root / cid) for cid in dataio.list_clip_ids(root)]


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args: argparse.Namespace) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        return _fail(f"not a directory: {root}", 2)
    targets = _clip_dirs(root)
    if not targets:
        return _fail(f"no clip directories under {root}", 2)

    strict = not args.lenient
    any_errors = False
    for cid, clip_dir in targets:
        prefix = cid if len(targets) > 1 or clip_dir != root else ""

        def emit(filename: str, issues) -> None:
            nonlocal any_errors
            for issue in issues:
                location = f"{prefix}/{filename}" if prefix else filename
                print(f"{issue.severity} {location}#{issue.path or '/'} {issue.message}")
                if issue.severity == "error":
                    any_errors = True

        try:
            raw = (clip_dir / DATA_FILENAME).read_bytes()
        except OSError as exc:
            return _fail(f"cannot read {clip_dir / DATA_FILENAME}: {exc}", 2)
        clip, issues = dataio.scan_clip(raw)
        emit(DATA_FILENAME, issues)

        label_path = clip_dir / LABEL_FILENAME
        if label_path.is_file():
            if clip is None:
                print(f"error {prefix + '/' if prefix else ''}{LABEL_FILENAME}#/ "
                      "labels not checked: clip data is invalid")
                any_errors = True
            else:
                _, issues = dataio.scan_labels(label_path.read_bytes(), clip, strict=strict)
                emit(LABEL_FILENAME, issues)

        pred_path = clip_dir / PREDICTION_FILENAME
        if pred_path.is_file() and clip is not None:
            _, issues = dataio.scan_prediction(pred_path.read_bytes(), clip)
            emit(PREDICTION_FILENAME, issues)

    return 1 if any_errors else 0


# ---------------------------------------------------------------------------
# eval


def _load_prediction(pred_dir: Path, clip) -> tuple[PredictionSet, Optional[str]]:
    path = pred_dir / PREDICTION_FILENAME
    if not path.is_file():
        return PredictionSet(rules=(), edges=()), f"missing {path}, scored as empty"
    return dataio.parse_prediction(path.read_bytes(), clip), None


def cmd_eval(args: argparse.Namespace) -> int:
    gt_root = Path(args.gt_dir)
    pred_root = Path(args.pred_dir)
    for path in (gt_root, pred_root):
        if not path.is_dir():
            return _fail(f"not a directory: {path}", 2)
    ids = [cid for cid, _ in _clip_dirs(gt_root)]
    if not ids:
        return _fail(f"no clip directories under {gt_root}", 2)
    single = (gt_root / DATA_FILENAME).is_file()

    def eval_one(cid: str):
        gt_dir = gt_root if single else gt_root / cid
        pred_dir = pred_root if single else pred_root / cid
        clip, labeled, graph = dataio.load_clip_dir(gt_dir, strict=not args.lenient)
        pred, warning = _load_prediction(pred_dir, clip)
        clip_report = metrics.evaluate_clip(labeled, graph, pred, args.thresholds)
        return cid, clip_report, warning

    try:
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            results = list(pool.map(eval_one, ids))
    except DatasetFormatError as exc:
        return _fail(f"invalid input: {exc}", 1)
    except OSError as exc:
        return _fail(str(exc), 2)

    results.sort(key=lambda item: item[0])
    per_clip = {}
    for cid, clip_report, warning in results:
        if warning:
            print(f"mapdr: warning: {warning}", file=sys.stderr)
        per_clip[cid] = clip_report
    aggregate_report = metrics.aggregate([per_clip[cid] for cid in sorted(per_clip)])

    config = {
        "toolkit_version": __version__,
        "gt_dir": str(gt_root),
        "pred_dir": str(pred_root),
        "threshold_count": args.thresholds,
        "strict_labels": not args.lenient,
        "edge_confidence_gated": True,
        "rule_confidence_used": False,
        "averaging": "micro",
    }
    paths = report.write_report(Path(args.out), aggregate_report, per_clip, config)
    print(
        f"clips={len(per_clip)} "
        f"P_RE={aggregate_report.p_re:.4f} R_RE={aggregate_report.r_re:.4f} "
        f"P_CR={aggregate_report.p_cr:.4f} R_CR={aggregate_report.r_cr:.4f} "
        f"P_all={aggregate_report.p_all:.4f} R_all={aggregate_report.r_all:.4f} "
        f"AP={aggregate_report.ap:.4f}"
    )
    print(f"report written to {paths['json']}")
    return 0


# ---------------------------------------------------------------------------
# project


def cmd_project(args: argparse.Namespace) -> int:
    clip_dir = Path(args.clip_dir)
    if not clip_dir.is_dir():
        return _fail(f"not a directory: {clip_dir}", 2)
    try:
        clip, labeled, _ = dataio.load_clip_dir(clip_dir, strict=not args.lenient)
    except DatasetFormatError as exc:
        return _fail(f"invalid clip: {exc}", 1)
    except OSError as exc:
        return _fail(str(exc), 2)
    try:
        cfg = _projection_config(args)
    except ValueError as exc:
        return _fail(str(exc), 2)
    try:
        svg = overlay.render_overlay_svg(clip, args.timestamp, labeled, cfg)
    except KeyError as exc:
        return _fail(str(exc.args[0]), 1)
    except ValueError as exc:
        return _fail(str(exc), 1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    print(f"overlay written to {out}")
    return 0


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        cfg = synthgen.SceneConfig(lane_count=args.lanes, rule_count=args.rules)
    except ValueError as exc:
        return _fail(str(exc), 2)
    corruption = None
    if args.corrupt:
        try:
            corruption = synthgen.CorruptionSpec(
                drop_rule_p=args.drop_rule_p,
                perturb_property_p=args.perturb_property_p,
                drop_edge_p=args.drop_edge_p,
                add_edge_p=args.add_edge_p,
            )
        except ValueError as exc:
            return _fail(str(exc), 2)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.clips):
        cid = f"clip_{i:04d}"
        clip_seed = args.seed + i
        clip, labeled, graph = synthgen.generate_clip(cfg, clip_seed)
        prediction = None
        entry = {"id": cid, "seed": clip_seed}
        if corruption is not None:
            prediction, counts = synthgen.corrupt(labeled, graph, corruption, clip_seed)
            entry["expected"] = counts.to_dict()
        dataio.save_clip_dir(out / cid, clip, labeled, prediction=prediction)
        entries.append(entry)

    manifest = {
        "scene": {
            "lane_count": cfg.lane_count,
            "rule_count": cfg.rule_count,
            "lane_width": cfg.lane_width,
            "clip_length": cfg.clip_length,
            "frame_spacing": cfg.frame_spacing,
            "sign_distance": cfg.sign_distance,
        },
        "base_seed": args.seed,
        "clips": entries,
    }
    if corruption is not None:
        manifest["corruption"] = {
            "drop_rule_p": corruption.drop_rule_p,
            "perturb_property_p": corruption.perturb_property_p,
            "drop_edge_p": corruption.drop_edge_p,
            "add_edge_p": corruption.add_edge_p,
            "c_lo_correct": corruption.c_lo_correct,
            "c_hi_wrong": corruption.c_hi_wrong,
            "separating_threshold": corruption.separating_threshold,
        }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {args.clips} clips to {out}")
    return 0


# ---------------------------------------------------------------------------
# baseline


def cmd_baseline(args: argparse.Namespace) -> int:
    root = Path(args.clip_dir)
    if not root.is_dir():
        return _fail(f"not a directory: {root}", 2)
    targets = _clip_dirs(root)
    if not targets:
        return _fail(f"no clip directories under {root}", 2)
    single = (root / DATA_FILENAME).is_file()
    out_root = Path(args.out) if args.out else root

    def run_one(item: tuple[str, Path]) -> str:
        cid, clip_dir = item
        clip, labeled, _ = dataio.load_clip_dir(clip_dir, strict=True)
        prediction = baseline.infer_correspondence([l.rule for l in labeled], clip)
        dest = out_root if single else out_root / cid
        dest.mkdir(parents=True, exist_ok=True)
        (dest / PREDICTION_FILENAME).write_text(
            dataio.write_prediction(prediction), encoding="utf-8"
        )
        return cid

    try:
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            done = sorted(pool.map(run_one, targets))
    except DatasetFormatError as exc:
        return _fail(f"invalid input: {exc}", 1)
    except ValueError as exc:
        return _fail(str(exc), 1)
    except OSError as exc:
        return _fail(str(exc), 2)
    print(f"predictions written for {len(done)} clips")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapdr",
        description="Benchmark toolkit for traffic-sign driving rules on vectorized HD maps.",
    )
    parser.add_argument("--version", action="version", version=f"mapdr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate clip, label, and prediction files")
    p.add_argument("dir", help="one clip directory or a corpus root")
    p.add_argument("--lenient", action="store_true", help="downgrade dangling references to warnings")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("gt_dir")
    p.add_argument("pred_dir")
    p.add_argument("-o", "--out", required=True, help="report output directory")
    p.add_argument("--thresholds", type=int, default=metrics.DEFAULT_THRESHOLD_COUNT,
                   help="number of confidence thresholds swept for AP (>= 2)")
    p.add_argument("--jobs", type=int, default=1, help="worker pool size")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project", help="render an SVG overlay for one frame")
    p.add_argument("clip_dir")
    p.add_argument("timestamp")
    p.add_argument("-o", "--out", required=True, help="output SVG path")
    p.add_argument("--quaternion-order", choices=geometry.QUATERNION_ORDERS)
    p.add_argument("--pose-direction", choices=geometry.POSE_DIRECTIONS)
    p.add_argument("--near-clip", type=float)
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("synth", help="generate synthetic clips (optionally with corrupted predictions)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--clips", type=int, default=1)
    p.add_argument("--lanes", type=int, default=3)
    p.add_argument("--rules", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true",
                   help="also write corrupted predictions and expected counts")
    p.add_argument("--drop-rule-p", type=float, default=0.0)
    p.add_argument("--perturb-property-p", type=float, default=0.0)
    p.add_argument("--drop-edge-p", type=float, default=0.0)
    p.add_argument("--add-edge-p", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("baseline", help="run the geometric index-to-lane baseline")
    p.add_argument("clip_dir", help="one clip directory or a corpus root")
    p.add_argument("-o", "--out", default=None, help="write predictions here instead of in place")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
