"""Reading, validation, and canonical writing of the benchmark file formats.

Three JSON documents are handled: the clip data file (sign quad, lane
vectors, intrinsics, poses), the label file (rules with their centerline
associations), and the toolkit's prediction file. Parsers accumulate
:class:`ValidationIssue` records with RFC 6901 document pointers instead of
failing on the first problem; the ``parse_*`` wrappers raise when any
error-severity issue was found.

Writers emit a canonical form: UTF-8, sorted keys, two-space indent, floats
in shortest round-trip notation. ``parse`` then ``write`` is the identity on
canonical documents, and numbers survive at full 64-bit precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Tuple

from mapdr.core import (
    RULE_PROPERTY_KEYS,
    CameraIntrinsics,
    CameraPose,
    ClipData,
    CorrespondenceGraph,
    FrameRef,
    LabeledRule,
    LaneVector,
    Point3,
    PredictedEdge,
    PredictedRule,
    PredictionSet,
    Rule,
    VecType,
)

DATA_FILENAME = "data.json"
LABEL_FILENAME = "label.json"
PREDICTION_FILENAME = "prediction.json"
FRAMES_DIRNAME = "frames"

_CLIP_KEYS = {"traffic_board_pose", "vector", "camera_intrinsic_matrix", "camera_pose", "frames"}
_RULE_ENTRY_KEYS = {"attr_info", "centerline", "semantic_polygon"}


@dataclass(frozen=True)
class ValidationIssue:
    """One problem found in a document, addressed by a JSON pointer."""

    severity: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity} {self.path or '/'} {self.message}"


class DatasetFormatError(ValueError):
    """Raised when a document contains at least one error-severity issue."""

    def __init__(self, issues: Sequence[ValidationIssue]):
        self.issues = tuple(issues)
        errors = [str(i) for i in self.issues if i.severity == "error"]
        super().__init__("; ".join(errors) or "invalid document")


def _escape_pointer(token: str) -> str:
    return token.replace("~", "~0").replace("/", "~1")


def _join(path: str, *tokens: object) -> str:
    for token in tokens:
        path = f"{path}/{_escape_pointer(str(token))}"
    return path


class _Issues:
    """Accumulates issues while a document is walked."""

    def __init__(self) -> None:
        self.items: List[ValidationIssue] = []

    def error(self, path: str, message: str) -> None:
        self.items.append(ValidationIssue("error", path, message))

    def warning(self, path: str, message: str) -> None:
        self.items.append(ValidationIssue("warning", path, message))

    @property
    def has_errors(self) -> bool:
        return any(i.severity == "error" for i in self.items)


def _reject_duplicate_keys(pairs: List[Tuple[str, Any]]) -> dict:
    obj: dict = {}
    for key, value in pairs:
        if key in obj:
            raise ValueError(f"duplicate key {key!r}")
        obj[key] = value
    return obj


def _load_json(raw: bytes | str, issues: _Issues) -> Any:
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            issues.error("", f"not valid UTF-8: {exc}")
            return None
    try:
        return json.loads(raw, object_pairs_hook=_reject_duplicate_keys)
    except ValueError as exc:
        issues.error("", f"not valid JSON: {exc}")
        return None


def _as_float(value: Any, path: str, issues: _Issues) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        issues.error(path, f"expected a number, got {type(value).__name__}")
        return None
    value = float(value)
    if not math.isfinite(value):
        issues.error(path, f"number must be finite, got {value!r}")
        return None
    return value


def _as_point(value: Any, path: str, issues: _Issues) -> Optional[Point3]:
    if not isinstance(value, list) or len(value) != 3:
        issues.error(path, "expected a [x, y, z] triple")
        return None
    coords = [_as_float(c, _join(path, i), issues) for i, c in enumerate(value)]
    if any(c is None for c in coords):
        return None
    return Point3(*coords)  # type: ignore[arg-type]


def _as_point_list(value: Any, path: str, issues: _Issues, minimum: int) -> Optional[Tuple[Point3, ...]]:
    if not isinstance(value, list):
        issues.error(path, "expected a list of points")
        return None
    if len(value) < minimum:
        issues.error(path, f"expected at least {minimum} points, got {len(value)}")
        return None
    points = [_as_point(p, _join(path, i), issues) for i, p in enumerate(value)]
    if any(p is None for p in points):
        return None
    return tuple(points)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# clip data file


def _parse_intrinsics(value: Any, path: str, issues: _Issues) -> Optional[CameraIntrinsics]:
    if not isinstance(value, list) or len(value) != 3 or any(
        not isinstance(row, list) or len(row) != 3 for row in value
    ):
        issues.error(path, "camera_intrinsic_matrix must be 3x3")
        return None
    cells = {}
    for i in range(3):
        for j in range(3):
            cell = _as_float(value[i][j], _join(path, i, j), issues)
            if cell is None:
                return None
            cells[(i, j)] = cell
    ok = True
    for i, j in ((0, 1), (1, 0), (2, 0), (2, 1)):
        if cells[(i, j)] != 0.0:
            issues.error(_join(path, i, j), "expected 0 in the pinhole matrix")
            ok = False
    if cells[(2, 2)] != 1.0:
        issues.error(_join(path, 2, 2), "expected 1 at the bottom-right")
        ok = False
    fx, fy = cells[(0, 0)], cells[(1, 1)]
    if fx <= 0:
        issues.error(_join(path, 0, 0), "fx must be positive")
        ok = False
    if fy <= 0:
        issues.error(_join(path, 1, 1), "fy must be positive")
        ok = False
    if not ok:
        return None
    return CameraIntrinsics(fx=fx, fy=fy, cx=cells[(0, 2)], cy=cells[(1, 2)])


def _parse_vector(vid_text: str, value: Any, path: str, issues: _Issues) -> Optional[LaneVector]:
    if not vid_text.isdigit():
        issues.error(path, f"vector key {vid_text!r} is not a decimal id")
        return None
    if not isinstance(value, dict):
        issues.error(path, "vector entry must be an object")
        return None
    for key in value:
        if key not in ("type", "vec_geo"):
            issues.warning(_join(path, key), f"unknown vector key {key!r}")
    if "type" not in value:
        issues.error(path, 'vector entry is missing "type"')
        return None
    if "vec_geo" not in value:
        issues.error(path, 'vector entry is missing "vec_geo"')
        return None
    type_raw = value["type"]
    type_text = type_raw if isinstance(type_raw, str) else str(type_raw)
    if isinstance(type_raw, bool) or not type_text.isdigit() or int(type_text) not in set(VecType):
        issues.error(_join(path, "type"), f"unknown vec_type {type_raw!r}")
        return None
    points = _as_point_list(value["vec_geo"], _join(path, "vec_geo"), issues, minimum=2)
    if points is None:
        return None
    return LaneVector(id=int(vid_text), vec_type=VecType(int(type_text)), points=points)


def _parse_pose(ts: str, value: Any, path: str, issues: _Issues) -> Optional[CameraPose]:
    if not ts.isdigit():
        issues.error(path, f"pose key {ts!r} is not a nanosecond timestamp")
        return None
    if not isinstance(value, dict):
        issues.error(path, "pose entry must be an object")
        return None
    for key in value:
        if key not in ("tvec_enu", "rvec_enu"):
            issues.warning(_join(path, key), f"unknown pose key {key!r}")
    if "tvec_enu" not in value or "rvec_enu" not in value:
        issues.error(path, 'pose entry needs "tvec_enu" and "rvec_enu"')
        return None
    tvec = _as_point(value["tvec_enu"], _join(path, "tvec_enu"), issues)
    rvec_raw = value["rvec_enu"]
    if not isinstance(rvec_raw, list) or len(rvec_raw) != 4:
        issues.error(_join(path, "rvec_enu"), "quaternion must have 4 components")
        return None
    rvec = [_as_float(c, _join(path, "rvec_enu", i), issues) for i, c in enumerate(rvec_raw)]
    if tvec is None or any(c is None for c in rvec):
        return None
    try:
        return CameraPose(timestamp=ts, tvec_enu=tvec, rvec_enu=tuple(rvec))  # type: ignore[arg-type]
    except ValueError as exc:
        issues.error(_join(path, "rvec_enu"), str(exc))
        return None


def scan_clip(raw: bytes | str) -> Tuple[Optional[ClipData], List[ValidationIssue]]:
    """Parse a clip data document, collecting all issues found."""
    issues = _Issues()
    doc = _load_json(raw, issues)
    if doc is None:
        return None, issues.items
    if not isinstance(doc, dict):
        issues.error("", "top level must be an object")
        return None, issues.items

    for key in doc:
        if key not in _CLIP_KEYS:
            issues.warning(_join("", key), f"unknown key {key!r}")
    for key in ("traffic_board_pose", "vector", "camera_intrinsic_matrix", "camera_pose"):
        if key not in doc:
            issues.error("", f"missing key {key!r}")
    if issues.has_errors:
        return None, issues.items

    quad = _as_point_list(doc["traffic_board_pose"], "/traffic_board_pose", issues, minimum=0)
    if quad is not None and len(quad) != 4:
        issues.error("/traffic_board_pose", f"sign quad must have exactly 4 points, got {len(quad)}")
        quad = None

    vectors = {}
    if not isinstance(doc["vector"], dict):
        issues.error("/vector", "expected an object keyed by vector id")
    else:
        for vid_text, entry in doc["vector"].items():
            vec = _parse_vector(vid_text, entry, _join("/vector", vid_text), issues)
            if vec is not None:
                vectors[vec.id] = vec

    intrinsics = _parse_intrinsics(doc["camera_intrinsic_matrix"], "/camera_intrinsic_matrix", issues)

    poses = {}
    if not isinstance(doc["camera_pose"], dict):
        issues.error("/camera_pose", "expected an object keyed by timestamp")
    else:
        for ts, entry in doc["camera_pose"].items():
            pose = _parse_pose(ts, entry, _join("/camera_pose", ts), issues)
            if pose is not None:
                poses[ts] = pose
        if isinstance(doc["camera_pose"], dict) and not doc["camera_pose"]:
            issues.error("/camera_pose", "clip needs at least one pose")

    frames: Optional[Tuple[FrameRef, ...]] = None
    if "frames" in doc:
        raw_frames = doc["frames"]
        if not isinstance(raw_frames, list):
            issues.error("/frames", "expected a list of frame references")
        else:
            parsed = []
            for i, entry in enumerate(raw_frames):
                fpath = _join("/frames", i)
                if (
                    not isinstance(entry, dict)
                    or not isinstance(entry.get("timestamp"), str)
                    or not isinstance(entry.get("image"), str)
                ):
                    issues.error(fpath, 'frame needs string "timestamp" and "image"')
                    continue
                if entry["timestamp"] not in poses:
                    issues.warning(_join(fpath, "timestamp"), "frame timestamp has no pose")
                parsed.append(FrameRef(timestamp=entry["timestamp"], image=entry["image"]))
            frames = tuple(parsed)

    if issues.has_errors or quad is None or intrinsics is None:
        return None, issues.items
    try:
        clip = ClipData(
            sign_quad=quad, vectors=vectors, intrinsics=intrinsics, poses=poses, frames=frames
        )
    except ValueError as exc:
        issues.error("", str(exc))
        return None, issues.items
    return clip, issues.items


def parse_clip(raw: bytes | str) -> ClipData:
    """Parse a clip data document; raise :class:`DatasetFormatError` on errors."""
    clip, issues = scan_clip(raw)
    if clip is None:
        raise DatasetFormatError(issues)
    return clip


def write_clip(clip: ClipData) -> str:
    """Serialize a clip to the canonical data-file form."""
    doc: dict = {
        "traffic_board_pose": [list(p.as_tuple()) for p in clip.sign_quad],
        "vector": {
            str(vid): {
                "type": str(int(vec.vec_type)),
                "vec_geo": [list(p.as_tuple()) for p in vec.points],
            }
            for vid, vec in clip.vectors.items()
        },
        "camera_intrinsic_matrix": [list(row) for row in clip.intrinsics.as_matrix()],
        "camera_pose": {
            ts: {"tvec_enu": list(pose.tvec_enu.as_tuple()), "rvec_enu": list(pose.rvec_enu)}
            for ts, pose in clip.poses.items()
        },
    }
    if clip.frames is not None:
        doc["frames"] = [{"timestamp": f.timestamp, "image": f.image} for f in clip.frames]
    return _dump_canonical(doc)


# ---------------------------------------------------------------------------
# label file


def _parse_attr_info(value: Any, path: str, issues: _Issues, strict: bool) -> Optional[Rule]:
    if not isinstance(value, dict):
        issues.error(path, "attr_info must be an object")
        return None
    for key in value:
        if key not in RULE_PROPERTY_KEYS:
            if strict:
                issues.error(_join(path, key), f"unknown property key {key!r}")
            else:
                issues.warning(_join(path, key), f"unknown property key {key!r}")
    missing = [key for key in RULE_PROPERTY_KEYS if key not in value]
    if missing:
        issues.error(path, f"missing properties {missing}")
        return None

    direction_raw = value["LaneDirection"]
    if not isinstance(direction_raw, list) or not all(isinstance(d, str) for d in direction_raw):
        issues.error(_join(path, "LaneDirection"), "LaneDirection must be a list of strings")
        return None
    if len(set(direction_raw)) != len(direction_raw):
        issues.warning(_join(path, "LaneDirection"), "duplicate direction values collapsed")

    text_props = {}
    for key in ("LaneType", "RuleIndex", "AllowedTransport", "EffectiveDate",
                "EffectiveTime", "LowSpeedLimit", "HighSpeedLimit"):
        if not isinstance(value[key], str):
            issues.error(_join(path, key), f"{key} must be a string")
            return None
        text_props[key] = value[key]

    try:
        return Rule(
            lane_type=text_props["LaneType"],
            rule_index=text_props["RuleIndex"],
            lane_direction=frozenset(direction_raw),
            allowed_transport=text_props["AllowedTransport"],
            effective_date=text_props["EffectiveDate"],
            effective_time=text_props["EffectiveTime"],
            low_speed_limit=text_props["LowSpeedLimit"],
            high_speed_limit=text_props["HighSpeedLimit"],
        )
    except ValueError as exc:
        issues.error(path, str(exc))
        return None


def scan_labels(
    raw: bytes | str, clip: ClipData, strict: bool = True
) -> Tuple[Optional[Tuple[Tuple[LabeledRule, ...], CorrespondenceGraph]], List[ValidationIssue]]:
    """Parse a label document against its clip, collecting all issues.

    In strict mode a centerline reference must name an existing type-3
    vector; in lenient mode dangling references are warned about and
    dropped.
    """
    issues = _Issues()
    doc = _load_json(raw, issues)
    if doc is None:
        return None, issues.items
    if not isinstance(doc, dict):
        issues.error("", "top level must be an object keyed by rule")
        return None, issues.items

    centerline_ids = {vec.id for vec in clip.centerlines()}
    labeled: List[LabeledRule] = []
    edges = set()
    for key, entry in doc.items():
        path = _join("", key)
        if not isinstance(entry, dict):
            issues.error(path, "rule entry must be an object")
            continue
        for sub in entry:
            if sub not in _RULE_ENTRY_KEYS:
                issues.warning(_join(path, sub), f"unknown key {sub!r}")
        missing = [sub for sub in ("attr_info", "centerline", "semantic_polygon") if sub not in entry]
        if missing:
            issues.error(path, f"missing keys {missing}")
            continue

        rule = _parse_attr_info(entry["attr_info"], _join(path, "attr_info"), issues, strict)

        ids: List[int] = []
        cl_path = _join(path, "centerline")
        if not isinstance(entry["centerline"], list):
            issues.error(cl_path, "centerline must be a list of vector ids")
        else:
            for i, cid in enumerate(entry["centerline"]):
                id_path = _join(cl_path, i)
                if isinstance(cid, bool) or not isinstance(cid, int) or cid < 0:
                    issues.error(id_path, f"centerline id must be a non-negative integer, got {cid!r}")
                    continue
                if cid not in centerline_ids:
                    detail = (
                        f"centerline {cid} is not a type-3 vector of this clip"
                        if cid in clip.vectors
                        else f"centerline {cid} does not exist in this clip"
                    )
                    if strict:
                        issues.error(id_path, detail)
                    else:
                        issues.warning(id_path, detail + " (dropped)")
                    continue
                ids.append(cid)

        polygon = _as_point_list(entry["semantic_polygon"], _join(path, "semantic_polygon"), issues, minimum=3)

        if rule is None or polygon is None:
            continue
        try:
            item = LabeledRule(key=key, rule=rule, centerline_ids=tuple(ids), semantic_polygon=polygon)
        except ValueError as exc:
            issues.error(path, str(exc))
            continue
        labeled.append(item)
        edges.update((key, cid) for cid in ids)

    if issues.has_errors:
        return None, issues.items
    graph = CorrespondenceGraph(
        rule_keys=frozenset(item.key for item in labeled),
        centerline_ids=frozenset(centerline_ids),
        edges=frozenset(edges),
    )
    return (tuple(labeled), graph), issues.items


def parse_labels(
    raw: bytes | str, clip: ClipData, strict: bool = True
) -> Tuple[Tuple[LabeledRule, ...], CorrespondenceGraph]:
    result, issues = scan_labels(raw, clip, strict)
    if result is None:
        raise DatasetFormatError(issues)
    return result


def rule_to_attr_info(rule: Rule) -> dict:
    """The eight properties as a label-file ``attr_info`` object."""
    return {
        "LaneType": rule.lane_type,
        "RuleIndex": rule.rule_index,
        "LaneDirection": sorted(rule.lane_direction),
        "AllowedTransport": rule.allowed_transport,
        "EffectiveDate": rule.effective_date,
        "EffectiveTime": rule.effective_time,
        "LowSpeedLimit": rule.low_speed_limit,
        "HighSpeedLimit": rule.high_speed_limit,
    }


def write_labels(labeled: Sequence[LabeledRule]) -> str:
    """Serialize labeled rules to the canonical label-file form."""
    doc = {
        item.key: {
            "attr_info": rule_to_attr_info(item.rule),
            "centerline": list(item.centerline_ids),
            "semantic_polygon": [list(p.as_tuple()) for p in item.semantic_polygon],
        }
        for item in labeled
    }
    return _dump_canonical(doc)


# ---------------------------------------------------------------------------
# prediction file


def scan_prediction(
    raw: bytes | str, clip: Optional[ClipData] = None
) -> Tuple[Optional[PredictionSet], List[ValidationIssue]]:
    """Parse a prediction document, optionally validating ids against a clip."""
    issues = _Issues()
    doc = _load_json(raw, issues)
    if doc is None:
        return None, issues.items
    if not isinstance(doc, dict) or "rules" not in doc or not isinstance(doc["rules"], list):
        issues.error("", 'top level must be an object with a "rules" array')
        return None, issues.items
    for key in doc:
        if key != "rules":
            issues.warning(_join("", key), f"unknown key {key!r}")

    centerline_ids = {vec.id for vec in clip.centerlines()} if clip is not None else None
    rules: List[PredictedRule] = []
    edges: List[PredictedEdge] = []
    for pos, entry in enumerate(doc["rules"]):
        path = _join("/rules", pos)
        if not isinstance(entry, dict):
            issues.error(path, "prediction entry must be an object")
            continue
        for sub in entry:
            if sub not in ("attr_info", "confidence", "centerline"):
                issues.warning(_join(path, sub), f"unknown key {sub!r}")
        if "attr_info" not in entry:
            issues.error(path, 'missing "attr_info"')
            continue
        rule = _parse_attr_info(entry["attr_info"], _join(path, "attr_info"), issues, strict=True)
        conf = _as_float(entry.get("confidence", 1.0), _join(path, "confidence"), issues)
        if conf is not None and not (0.0 <= conf <= 1.0):
            issues.error(_join(path, "confidence"), f"confidence {conf} outside [0, 1]")
            conf = None
        if rule is None or conf is None:
            continue
        rules.append(PredictedRule(rule=rule, confidence=conf))

        for i, edge_entry in enumerate(entry.get("centerline", [])):
            epath = _join(path, "centerline", i)
            if not isinstance(edge_entry, dict) or "id" not in edge_entry:
                issues.error(epath, 'edge must be an object with "id" and "confidence"')
                continue
            cid = edge_entry["id"]
            if isinstance(cid, bool) or not isinstance(cid, int) or cid < 0:
                issues.error(_join(epath, "id"), f"centerline id must be a non-negative integer, got {cid!r}")
                continue
            if centerline_ids is not None and cid not in centerline_ids:
                issues.error(_join(epath, "id"), f"centerline {cid} does not exist in this clip")
                continue
            econf = _as_float(edge_entry.get("confidence", 1.0), _join(epath, "confidence"), issues)
            if econf is None:
                continue
            if not (0.0 <= econf <= 1.0):
                issues.error(_join(epath, "confidence"), f"confidence {econf} outside [0, 1]")
                continue
            edges.append(PredictedEdge(rule_position=pos, centerline_id=cid, confidence=econf))

    if issues.has_errors:
        return None, issues.items
    try:
        pred = PredictionSet(rules=tuple(rules), edges=tuple(edges))
    except ValueError as exc:
        issues.error("/rules", str(exc))
        return None, issues.items
    return pred, issues.items


def parse_prediction(raw: bytes | str, clip: Optional[ClipData] = None) -> PredictionSet:
    pred, issues = scan_prediction(raw, clip)
    if pred is None:
        raise DatasetFormatError(issues)
    return pred


def write_prediction(pred: PredictionSet) -> str:
    """Serialize predictions to the canonical prediction-file form."""
    by_position: dict[int, list] = {pos: [] for pos in range(len(pred.rules))}
    for edge in pred.edges:
        by_position[edge.rule_position].append(
            {"id": edge.centerline_id, "confidence": edge.confidence}
        )
    doc = {
        "rules": [
            {
                "attr_info": rule_to_attr_info(entry.rule),
                "confidence": entry.confidence,
                "centerline": sorted(by_position[pos], key=lambda e: e["id"]),
            }
            for pos, entry in enumerate(pred.rules)
        ]
    }
    return _dump_canonical(doc)


def _dump_canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# directory layout


def list_clip_ids(root: Path) -> List[str]:
    """Subdirectories of ``root`` that contain a clip data file, sorted."""
    root = Path(root)
    return sorted(
        entry.name for entry in root.iterdir() if entry.is_dir() and (entry / DATA_FILENAME).is_file()
    )


def load_clip_dir(
    clip_dir: Path, strict: bool = True
) -> Tuple[ClipData, Tuple[LabeledRule, ...], CorrespondenceGraph]:
    """Load ``data.json`` and ``label.json`` from one clip directory."""
    clip_dir = Path(clip_dir)
    clip = parse_clip((clip_dir / DATA_FILENAME).read_bytes())
    label_path = clip_dir / LABEL_FILENAME
    if label_path.is_file():
        labeled, graph = parse_labels(label_path.read_bytes(), clip, strict=strict)
    else:
        labeled = ()
        graph = CorrespondenceGraph(
            rule_keys=frozenset(),
            centerline_ids=frozenset(v.id for v in clip.centerlines()),
            edges=frozenset(),
        )
    return clip, labeled, graph


def save_clip_dir(
    clip_dir: Path,
    clip: ClipData,
    labeled: Optional[Sequence[LabeledRule]] = None,
    prediction: Optional[PredictionSet] = None,
) -> None:
    """Write a clip directory in the standard layout."""
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)
    (clip_dir / DATA_FILENAME).write_text(write_clip(clip), encoding="utf-8")
    if labeled is not None:
        (clip_dir / LABEL_FILENAME).write_text(write_labels(labeled), encoding="utf-8")
    if prediction is not None:
        (clip_dir / PREDICTION_FILENAME).write_text(write_prediction(prediction), encoding="utf-8")
