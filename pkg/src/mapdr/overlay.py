"""Static SVG overlays: lane vectors, the sign quad, and semantic polygons
projected into one camera frame."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from mapdr import geometry
from mapdr.core import ClipData, LabeledRule, Point3, VecType
from mapdr.geometry import BEHIND_CAMERA, ProjectionConfig

#: Stroke color per vector type (also documented in the CLI reference).
VEC_TYPE_PALETTE = {
    VecType.DIVIDER: "#1f77b4",
    VecType.SPECIAL_DIVIDER: "#9467bd",
    VecType.ROAD_BOUNDARY: "#2ca02c",
    VecType.CENTERLINE: "#d62728",
    VecType.CROSSWALK: "#ff7f0e",
}

SIGN_FILL = "#444444"
POLYGON_STROKE = "#e377c2"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _path_data(segments: Sequence[geometry.Segment]) -> str:
    parts = []
    cursor: Optional[Tuple[float, float]] = None
    for (u1, v1), (u2, v2) in segments:
        if cursor != (u1, v1):
            parts.append(f"M {_fmt(u1)} {_fmt(v1)}")
        parts.append(f"L {_fmt(u2)} {_fmt(v2)}")
        cursor = (u2, v2)
    return " ".join(parts)


def _project_ring(
    points: Sequence[Point3], pose, intrinsics, cfg: ProjectionConfig
) -> Optional[str]:
    projected = [geometry.project_point(p, pose, intrinsics, cfg) for p in points]
    if any(p is BEHIND_CAMERA for p in projected):
        return None
    return " ".join(f"{_fmt(u)},{_fmt(v)}" for u, v in projected)


def render_overlay_svg(
    clip: ClipData,
    timestamp: str,
    labeled: Sequence[LabeledRule] = (),
    cfg: Optional[ProjectionConfig] = None,
) -> str:
    """Render one frame's overlay; raises ``KeyError`` on unknown timestamps."""
    cfg = cfg or ProjectionConfig()
    if timestamp not in clip.poses:
        raise KeyError(f"clip has no pose at timestamp {timestamp!r}")
    pose = clip.poses[timestamp]
    width, height = cfg.image_size

    body: List[str] = []
    for vid, vector in sorted(clip.vectors.items()):
        segments = geometry.project_polyline(vector, pose, clip.intrinsics, cfg)
        if not segments:
            continue
        color = VEC_TYPE_PALETTE[vector.vec_type]
        body.append(
            f'<path class="vec" data-vec-id="{vid}" data-vec-type="{int(vector.vec_type)}" '
            f'd="{_path_data(segments)}" fill="none" stroke="{color}" stroke-width="3"/>'
        )

    sign_ring = _project_ring(clip.sign_quad, pose, clip.intrinsics, cfg)
    if sign_ring is not None:
        body.append(
            f'<polygon class="sign" points="{sign_ring}" '
            f'fill="{SIGN_FILL}" fill-opacity="0.35" stroke="{SIGN_FILL}"/>'
        )
    for item in labeled:
        ring = _project_ring(item.semantic_polygon, pose, clip.intrinsics, cfg)
        if ring is not None:
            body.append(
                f'<polygon class="rule-polygon" data-rule-key="{item.key}" points="{ring}" '
                f'fill="none" stroke="{POLYGON_STROKE}" stroke-width="2" stroke-dasharray="6 4"/>'
            )

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#101010"/>',
        *body,
        "</svg>",
    ]
    return "\n".join(lines) + "\n"
