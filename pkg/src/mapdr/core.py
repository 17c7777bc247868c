"""Domain model for traffic-sign driving rules and vectorized lane maps.

Every type here is immutable after construction and validates its own
invariants, so values can be shared freely between evaluation workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, Optional, Sequence, Tuple


class VecType(IntEnum):
    """Lane vector categories used in clip data files."""

    DIVIDER = 0
    SPECIAL_DIVIDER = 1
    ROAD_BOUNDARY = 2
    CENTERLINE = 3
    CROSSWALK = 4


LANE_TYPES = frozenset(
    {
        "DirectionLane",
        "BusLane",
        "EmergencyLane",
        "VariableDirectionLane",
        "Non-MotorizedLane",
        "VehicleLane",
        "TidalFlowLane",
        "MultiLane",
        "SpeedLimitedLane",
    }
)

LANE_DIRECTIONS = frozenset(
    {"None", "GoStraight", "TurnLeft", "TurnRight", "TurnAround", "Forbidden"}
)

ALLOWED_TRANSPORTS = frozenset({"None", "Bus", "Vehicle", "Non-Motor", "Truck"})

EFFECTIVE_DATES = frozenset({"None", "WorkDays"})

#: The eight rule properties, in canonical file order.
RULE_PROPERTY_KEYS = (
    "LaneType",
    "RuleIndex",
    "LaneDirection",
    "AllowedTransport",
    "EffectiveDate",
    "EffectiveTime",
    "LowSpeedLimit",
    "HighSpeedLimit",
)

#: Quaternions farther than this from unit norm are rejected on load.
QUATERNION_NORM_TOL = 1e-3


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True, order=True)
class Point3:
    """A 3D point in the clip's local ENU frame, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class LaneVector:
    """One vectorized map element: an ordered 3D polyline with a type."""

    id: int
    vec_type: VecType
    points: Tuple[Point3, ...]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"vector id must be non-negative, got {self.id}")
        object.__setattr__(self, "vec_type", VecType(self.vec_type))
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise ValueError(f"vector {self.id} needs at least 2 points")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def as_matrix(self) -> Tuple[Tuple[float, ...], ...]:
        return (
            (self.fx, 0.0, self.cx),
            (0.0, self.fy, self.cy),
            (0.0, 0.0, 1.0),
        )


@dataclass(frozen=True)
class CameraPose:
    """Per-frame camera pose keyed by a nanosecond-epoch timestamp string.

    The quaternion is stored exactly as loaded so files round-trip at full
    64-bit precision; consumers that need a rotation normalize on use.
    """

    timestamp: str
    tvec_enu: Point3
    rvec_enu: Tuple[float, float, float, float]

    def __post_init__(self) -> None:
        quat = tuple(_require_finite("rvec_enu", c) for c in self.rvec_enu)
        if len(quat) != 4:
            raise ValueError("rvec_enu must have 4 components")
        norm = math.sqrt(sum(c * c for c in quat))
        if abs(norm - 1.0) > QUATERNION_NORM_TOL:
            raise ValueError(
                f"pose {self.timestamp}: quaternion norm {norm:.6f} outside unit tolerance"
            )
        object.__setattr__(self, "rvec_enu", quat)

    def unit_quaternion(self) -> Tuple[float, float, float, float]:
        norm = math.sqrt(sum(c * c for c in self.rvec_enu))
        x, y, z, w = self.rvec_enu
        return (x / norm, y / norm, z / norm, w / norm)


@dataclass(frozen=True)
class FrameRef:
    """Opaque reference to one captured image; never decoded by the toolkit."""

    timestamp: str
    image: str


@dataclass(frozen=True)
class ClipData:
    """One traffic scene: sign location, lane vectors, intrinsics, poses."""

    sign_quad: Tuple[Point3, Point3, Point3, Point3]
    vectors: Mapping[int, LaneVector]
    intrinsics: CameraIntrinsics
    poses: Mapping[str, CameraPose]
    frames: Optional[Tuple[FrameRef, ...]] = None

    def __post_init__(self) -> None:
        quad = tuple(self.sign_quad)
        if len(quad) != 4:
            raise ValueError("sign_quad must have exactly 4 points")
        object.__setattr__(self, "sign_quad", quad)
        vectors = dict(self.vectors)
        for vid, vec in vectors.items():
            if vid != vec.id:
                raise ValueError(f"vector keyed {vid} carries id {vec.id}")
        object.__setattr__(self, "vectors", vectors)
        poses = dict(self.poses)
        if not poses:
            raise ValueError("clip needs at least one camera pose")
        for ts, pose in poses.items():
            if ts != pose.timestamp:
                raise ValueError(f"pose keyed {ts} carries timestamp {pose.timestamp}")
        object.__setattr__(self, "poses", poses)
        if self.frames is not None:
            object.__setattr__(self, "frames", tuple(self.frames))

    def centerlines(self) -> Tuple[LaneVector, ...]:
        """Type-3 vectors in ascending id order."""
        return tuple(
            vec
            for vid, vec in sorted(self.vectors.items())
            if vec.vec_type is VecType.CENTERLINE
        )


@dataclass(frozen=True)
class OcrObservation:
    """A detected text or symbol region on the sign, with its polygon.

    Points may be 3D world coordinates or 2D pixel coordinates; the toolkit
    only uses them for overlap grouping.
    """

    polygon: Tuple[Tuple[float, ...], ...]
    text: str

    def __post_init__(self) -> None:
        poly = tuple(tuple(float(c) for c in p) for p in self.polygon)
        object.__setattr__(self, "polygon", poly)
        if len({p for p in poly}) < 3:
            raise ValueError("OCR polygon needs at least 3 distinct points")
        for p in poly:
            if len(p) not in (2, 3):
                raise ValueError("polygon points must be 2D or 3D")
            for c in p:
                _require_finite("polygon coordinate", c)


def _normalize_text(value: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return " ".join(str(value).split())


@dataclass(frozen=True)
class Rule:
    """One lane-level driving rule: eight predefined properties.

    ``lane_direction`` is a set; the remaining properties are single values.
    Enumerated properties must come from the fixed label vocabularies, the
    free-text ones (``rule_index``, ``effective_time`` and the speed limits)
    are kept as opaque strings.
    """

    lane_type: str
    rule_index: str
    lane_direction: frozenset[str]
    allowed_transport: str
    effective_date: str
    effective_time: str
    low_speed_limit: str
    high_speed_limit: str

    def __post_init__(self) -> None:
        if self.lane_type not in LANE_TYPES:
            raise ValueError(f"unknown LaneType {self.lane_type!r}")
        direction = frozenset(self.lane_direction)
        if not direction:
            raise ValueError("LaneDirection must not be empty")
        unknown = direction - LANE_DIRECTIONS
        if unknown:
            raise ValueError(f"unknown LaneDirection values {sorted(unknown)}")
        if "None" in direction and len(direction) > 1:
            raise ValueError('LaneDirection "None" excludes other directions')
        object.__setattr__(self, "lane_direction", direction)
        if self.allowed_transport not in ALLOWED_TRANSPORTS:
            raise ValueError(f"unknown AllowedTransport {self.allowed_transport!r}")
        if self.effective_date not in EFFECTIVE_DATES:
            raise ValueError(f"unknown EffectiveDate {self.effective_date!r}")
        for name in ("rule_index", "effective_time", "low_speed_limit", "high_speed_limit"):
            object.__setattr__(self, name, str(getattr(self, name)))

    def sort_key(self) -> tuple:
        """Deterministic total order over normalized rule content."""
        r = normalize_rule(self)
        return (
            r.lane_type,
            r.rule_index,
            tuple(sorted(r.lane_direction)),
            r.allowed_transport,
            r.effective_date,
            r.effective_time,
            r.low_speed_limit,
            r.high_speed_limit,
        )


def normalize_rule(rule: Rule) -> Rule:
    """Canonicalize the free-text properties of a rule.

    Trims surrounding whitespace and collapses internal runs to single
    spaces; enumerated values are left untouched. Idempotent.
    """
    return Rule(
        lane_type=rule.lane_type,
        rule_index=_normalize_text(rule.rule_index),
        lane_direction=rule.lane_direction,
        allowed_transport=rule.allowed_transport,
        effective_date=rule.effective_date,
        effective_time=_normalize_text(rule.effective_time),
        low_speed_limit=_normalize_text(rule.low_speed_limit),
        high_speed_limit=_normalize_text(rule.high_speed_limit),
    )


def rules_equal(a: Rule, b: Rule) -> bool:
    """True iff all eight properties agree after normalization.

    ``lane_direction`` compares as a set; text comparison is case-sensitive
    because the label vocabulary is fixed-case.
    """
    return normalize_rule(a) == normalize_rule(b)


@dataclass(frozen=True)
class LabeledRule:
    """A ground-truth rule with its annotated centerlines and sign region."""

    key: str
    rule: Rule
    centerline_ids: Tuple[int, ...]
    semantic_polygon: Tuple[Point3, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "centerline_ids", tuple(self.centerline_ids))
        poly = tuple(self.semantic_polygon)
        if len({p.as_tuple() for p in poly}) < 3:
            raise ValueError(f"rule {self.key}: semantic_polygon degenerate")
        object.__setattr__(self, "semantic_polygon", poly)


@dataclass(frozen=True)
class CorrespondenceGraph:
    """Bipartite graph between rule keys and centerline ids."""

    rule_keys: frozenset[str]
    centerline_ids: frozenset[int]
    edges: frozenset[Tuple[str, int]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rule_keys", frozenset(self.rule_keys))
        object.__setattr__(self, "centerline_ids", frozenset(self.centerline_ids))
        edges = frozenset((str(k), int(c)) for k, c in self.edges)
        for key, cid in edges:
            if key not in self.rule_keys:
                raise ValueError(f"edge references unknown rule key {key!r}")
            if cid not in self.centerline_ids:
                raise ValueError(f"edge references unknown centerline {cid}")
        object.__setattr__(self, "edges", edges)


def _require_confidence(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class PredictedRule:
    """A predicted rule with its extraction confidence."""

    rule: Rule
    confidence: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "confidence", _require_confidence("rule confidence", self.confidence)
        )


@dataclass(frozen=True)
class PredictedEdge:
    """A predicted rule-to-centerline association with its confidence.

    Predicted rules have no annotated key space, so edges reference rules by
    ordinal position in the prediction.
    """

    rule_position: int
    centerline_id: int
    confidence: float

    def __post_init__(self) -> None:
        if self.rule_position < 0:
            raise ValueError("rule_position must be non-negative")
        if self.centerline_id < 0:
            raise ValueError("centerline_id must be non-negative")
        object.__setattr__(
            self, "confidence", _require_confidence("edge confidence", self.confidence)
        )


@dataclass(frozen=True)
class PredictionSet:
    """A model's output for one clip: rules plus confidence-weighted edges."""

    rules: Tuple[PredictedRule, ...]
    edges: Tuple[PredictedEdge, ...]

    def __post_init__(self) -> None:
        rules = tuple(self.rules)
        edges = tuple(
            sorted(self.edges, key=lambda e: (e.rule_position, e.centerline_id))
        )
        seen = set()
        for edge in edges:
            if edge.rule_position >= len(rules):
                raise ValueError(
                    f"edge references rule position {edge.rule_position} "
                    f"but only {len(rules)} rules are predicted"
                )
            pair = (edge.rule_position, edge.centerline_id)
            if pair in seen:
                raise ValueError(f"duplicate edge {pair}")
            seen.add(pair)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "edges", edges)

    def edges_of(self, position: int) -> Tuple[PredictedEdge, ...]:
        return tuple(e for e in self.edges if e.rule_position == position)


@dataclass(frozen=True)
class ThresholdPoint:
    """Overall precision/recall at one confidence threshold.

    Carries the raw subgraph counts so clip curves can be pooled later.
    """

    threshold: float
    p_all: float
    r_all: float
    pred_subgraphs: int
    subgraph_hits: int


@dataclass(frozen=True)
class MetricReport:
    """All benchmark numbers for one clip, or micro-averaged over many."""

    gt_rules: int
    pred_rules: int
    rule_matches: int
    gt_edges: int
    pred_edges: int
    edge_hits: int
    gt_subgraphs: int
    pred_subgraphs: int
    subgraph_hits: int
    p_re: float
    r_re: float
    p_cr: float
    r_cr: float
    p_all: float
    r_all: float
    overall_curve: Tuple[ThresholdPoint, ...]
    ap: float

    def __post_init__(self) -> None:
        counts = {
            "gt_rules": self.gt_rules,
            "pred_rules": self.pred_rules,
            "rule_matches": self.rule_matches,
            "gt_edges": self.gt_edges,
            "pred_edges": self.pred_edges,
            "edge_hits": self.edge_hits,
            "gt_subgraphs": self.gt_subgraphs,
            "pred_subgraphs": self.pred_subgraphs,
            "subgraph_hits": self.subgraph_hits,
        }
        for name, value in counts.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.rule_matches > min(self.gt_rules, self.pred_rules):
            raise ValueError("rule_matches exceeds rule counts")
        if self.edge_hits > min(self.gt_edges, self.pred_edges):
            raise ValueError("edge_hits exceeds edge counts")
        if self.subgraph_hits > min(self.gt_subgraphs, self.pred_subgraphs):
            raise ValueError("subgraph_hits exceeds subgraph counts")
        for name in ("p_re", "r_re", "p_cr", "r_cr", "p_all", "r_all", "ap"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        object.__setattr__(self, "overall_curve", tuple(self.overall_curve))
