"""Evaluation report artifacts: JSON, per-clip CSV, and the PR-curve figure."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from mapdr.core import MetricReport
from mapdr.metrics import report_to_dict

CSV_FIELDS = (
    "clip_id",
    "gt_rules",
    "pred_rules",
    "rule_matches",
    "gt_edges",
    "pred_edges",
    "edge_hits",
    "p_re",
    "r_re",
    "p_cr",
    "r_cr",
    "p_all",
    "r_all",
    "ap",
)


def _csv_row(clip_id: str, report: MetricReport) -> dict:
    return {
        "clip_id": clip_id,
        "gt_rules": report.gt_rules,
        "pred_rules": report.pred_rules,
        "rule_matches": report.rule_matches,
        "gt_edges": report.gt_edges,
        "pred_edges": report.pred_edges,
        "edge_hits": report.edge_hits,
        "p_re": repr(report.p_re),
        "r_re": repr(report.r_re),
        "p_cr": repr(report.p_cr),
        "r_cr": repr(report.r_cr),
        "p_all": repr(report.p_all),
        "r_all": repr(report.r_all),
        "ap": repr(report.ap),
    }


def render_pr_curve(report: MetricReport, path: Path, title: Optional[str] = None) -> None:
    """Plot the overall precision-recall sweep to an image file."""
    recalls = [pt.r_all for pt in report.overall_curve]
    precisions = [pt.p_all for pt in report.overall_curve]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.plot(recalls, precisions, marker="o", markersize=2.5, linewidth=1.2, color="#d62728")
    ax.set_xlabel("overall recall")
    ax.set_ylabel("overall precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.set_title(title or f"overall PR sweep, AP = {report.ap:.4f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(
    out_dir: Path,
    aggregate_report: MetricReport,
    per_clip: Mapping[str, MetricReport],
    config: Mapping,
) -> dict:
    """Write report.json, report.csv, and pr_curve.png into ``out_dir``.

    The JSON embeds the run configuration so the numbers are reproducible
    from the report alone. Returns the artifact paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    json_path = out_dir / "report.json"
    doc = {
        "config": dict(config),
        "aggregate": report_to_dict(aggregate_report),
        "clips": {clip_id: report_to_dict(r) for clip_id, r in sorted(per_clip.items())},
    }
    json_path.write_text(
        json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8"
    )

    csv_path = out_dir / "report.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for clip_id, report in sorted(per_clip.items()):
            writer.writerow(_csv_row(clip_id, report))
        writer.writerow(_csv_row("__aggregate__", aggregate_report))

    figure_path = out_dir / "pr_curve.png"
    render_pr_curve(aggregate_report, figure_path)
    return {"json": json_path, "csv": csv_path, "figure": figure_path}
