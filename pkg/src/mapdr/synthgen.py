"""Seeded generation of synthetic clips with analytically known metric
outcomes.

Scenes are straight roads: k centerlines flanked by dividers and road
boundaries, a sign spanning the road ahead, and one rule per indexed lane
counted left to right. Because every count is fixed by construction, a
corrupted prediction's metrics are known exactly without running the metric
engine, which makes these scenes the oracle harness for it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from mapdr import geometry
from mapdr.core import (
    LANE_TYPES,
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
from mapdr.metrics import safe_ratio

_DIRECTION_CHOICES = (
    frozenset({"GoStraight"}),
    frozenset({"TurnLeft"}),
    frozenset({"TurnRight"}),
    frozenset({"TurnAround"}),
    frozenset({"Forbidden"}),
    frozenset({"GoStraight", "TurnLeft"}),
    frozenset({"GoStraight", "TurnRight"}),
    frozenset({"TurnLeft", "TurnAround"}),
    frozenset({"None"}),
)

_TRANSPORT_CHOICES = ("None", "Bus", "Vehicle", "Non-Motor", "Truck")
_DATE_CHOICES = ("None", "WorkDays")
_TIME_CHOICES = ("None", "7:00-9:00", "17:00-19:00", "7:00-9:00 17:00-19:00", "22:00-6:00")
_LOW_SPEED_CHOICES = ("None", "40", "50", "60")
_HIGH_SPEED_CHOICES = ("None", "60", "80", "100", "120")

_BASE_TIMESTAMP_NS = 1_700_000_000_000_000_000
_FRAME_INTERVAL_NS = 200_000_000


@dataclass(frozen=True)
class SceneConfig:
    """Shape of a generated scene."""

    lane_count: int
    rule_count: int
    lane_width: float = 3.5
    clip_length: float = 80.0
    frame_spacing: float = 2.0
    sign_distance: float = 60.0
    lane_type_weights: Optional[Mapping[str, float]] = None

    def __post_init__(self) -> None:
        if not (1 <= self.lane_count <= 8):
            raise ValueError("lane_count must be in [1, 8]")
        if not (1 <= self.rule_count <= self.lane_count):
            raise ValueError("rule_count must be in [1, lane_count]")
        for name in ("lane_width", "clip_length", "frame_spacing", "sign_distance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lane_type_weights is not None:
            weights = dict(self.lane_type_weights)
            unknown = set(weights) - LANE_TYPES
            if unknown:
                raise ValueError(f"unknown lane types {sorted(unknown)}")
            if any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
                raise ValueError("lane type weights must be non-negative and not all zero")
            object.__setattr__(self, "lane_type_weights", weights)

    def weighted_lane_types(self) -> Tuple[Tuple[str, ...], Tuple[float, ...]]:
        if self.lane_type_weights is None:
            types = tuple(sorted(LANE_TYPES))
            return types, tuple(1.0 for _ in types)
        items = sorted(self.lane_type_weights.items())
        return tuple(t for t, _ in items), tuple(w for _, w in items)


@dataclass(frozen=True)
class CorruptionSpec:
    """How to degrade a perfect prediction, with a separable confidence model.

    Confidences of true edges are drawn from [c_lo_correct, 1] and of added
    false edges from [0, c_hi_wrong]; requiring the former bound above the
    latter guarantees a threshold exists that keeps exactly the true edges.
    """

    drop_rule_p: float = 0.0
    perturb_property_p: float = 0.0
    drop_edge_p: float = 0.0
    add_edge_p: float = 0.0
    c_lo_correct: float = 0.7
    c_hi_wrong: float = 0.3

    def __post_init__(self) -> None:
        for name in ("drop_rule_p", "perturb_property_p", "drop_edge_p", "add_edge_p",
                     "c_lo_correct", "c_hi_wrong"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.c_lo_correct <= self.c_hi_wrong:
            raise ValueError("c_lo_correct must exceed c_hi_wrong")

    @property
    def separating_threshold(self) -> float:
        return (self.c_lo_correct + self.c_hi_wrong) / 2.0


@dataclass(frozen=True)
class ExpectedCounts:
    """Counts recorded while corrupting; the analytic metric oracle.

    ``edge_hits`` doubles as the number of surviving true edges, which is
    exactly the predicted subgraph count at the separating threshold.
    """

    gt_rules: int
    pred_rules: int
    rule_matches: int
    gt_edges: int
    pred_edges: int
    edge_hits: int
    subgraph_hits: int

    def __post_init__(self) -> None:
        if min(self.gt_rules, self.pred_rules, self.rule_matches, self.gt_edges,
               self.pred_edges, self.edge_hits, self.subgraph_hits) < 0:
            raise ValueError("counts must be non-negative")
        if self.rule_matches > min(self.gt_rules, self.pred_rules):
            raise ValueError("rule_matches exceeds rule counts")
        if self.edge_hits > min(self.gt_edges, self.pred_edges):
            raise ValueError("edge_hits exceeds edge counts")
        if self.subgraph_hits > self.edge_hits:
            raise ValueError("subgraph_hits exceeds surviving true edges")

    def expected_values(self) -> Dict[str, float]:
        """Metric values implied by the counts, keyed like a report.

        Overall precision/recall are stated at the separating threshold,
        where the gated edges are exactly the surviving true edges.
        """
        return {
            "p_re": safe_ratio(self.rule_matches, self.pred_rules, self.gt_rules),
            "r_re": safe_ratio(self.rule_matches, self.gt_rules, self.pred_rules),
            "p_cr": safe_ratio(self.edge_hits, self.pred_edges, self.gt_edges),
            "r_cr": safe_ratio(self.edge_hits, self.gt_edges, self.pred_edges),
            "p_all": safe_ratio(self.subgraph_hits, self.edge_hits, self.gt_edges),
            "r_all": safe_ratio(self.subgraph_hits, self.gt_edges, self.edge_hits),
        }

    def to_dict(self) -> Dict[str, int]:
        return {
            "gt_rules": self.gt_rules,
            "pred_rules": self.pred_rules,
            "rule_matches": self.rule_matches,
            "gt_edges": self.gt_edges,
            "pred_edges": self.pred_edges,
            "edge_hits": self.edge_hits,
            "subgraph_hits": self.subgraph_hits,
        }


@dataclass(frozen=True)
class CorruptionLogEntry:
    """One predicted edge as the corruptor created it."""

    confidence: float
    true_edge: bool
    rule_clean: bool


def _polyline(vid: int, vec_type: VecType, y: float, length: float, z: float = 0.0) -> LaneVector:
    xs = [length * i / 8 for i in range(9)]
    return LaneVector(
        id=vid, vec_type=vec_type, points=tuple(Point3(x, y, z) for x in xs)
    )


def _lane_offsets(lane_count: int, lane_width: float) -> List[float]:
    # lane 1 is the leftmost as seen by a driver facing the sign (+y here)
    return [((lane_count + 1) / 2 - i) * lane_width for i in range(1, lane_count + 1)]


def _sign_quad(cfg: SceneConfig) -> Tuple[Point3, Point3, Point3, Point3]:
    half = cfg.lane_count * cfg.lane_width / 2 + 0.5
    x = cfg.sign_distance
    # wound so the face normal points back toward the oncoming camera
    return (
        Point3(x, half, 4.5),
        Point3(x, half, 2.5),
        Point3(x, -half, 2.5),
        Point3(x, -half, 4.5),
    )


def _forward_pose(timestamp: str, x: float, y: float = 0.0, z: float = 1.6) -> CameraPose:
    # camera right = -y, camera down = -z, camera forward = +x
    rotation = [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
    quat = geometry.rotation_to_quat(rotation, order="xyzw")
    return CameraPose(timestamp=timestamp, tvec_enu=Point3(x, y, z), rvec_enu=quat)


_DEFAULT_INTRINSICS = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=620.0)


def _sample_rule(rng: random.Random, index: int, cfg: SceneConfig) -> Rule:
    types, weights = cfg.weighted_lane_types()
    return Rule(
        lane_type=rng.choices(types, weights=weights)[0],
        rule_index=str(index),
        lane_direction=rng.choice(_DIRECTION_CHOICES),
        allowed_transport=rng.choice(_TRANSPORT_CHOICES),
        effective_date=rng.choice(_DATE_CHOICES),
        effective_time=rng.choice(_TIME_CHOICES),
        low_speed_limit=rng.choice(_LOW_SPEED_CHOICES),
        high_speed_limit=rng.choice(_HIGH_SPEED_CHOICES),
    )


def _semantic_polygon(cfg: SceneConfig, lane_y: float) -> Tuple[Point3, ...]:
    x = cfg.sign_distance
    return (
        Point3(x, lane_y + 0.4, 4.2),
        Point3(x, lane_y + 0.4, 2.8),
        Point3(x, lane_y - 0.4, 2.8),
        Point3(x, lane_y - 0.4, 4.2),
    )


def generate_clip(
    cfg: SceneConfig, seed: int
) -> Tuple[ClipData, Tuple[LabeledRule, ...], CorrespondenceGraph]:
    """Build one deterministic synthetic clip.

    The i-th rule (``RuleIndex`` "i") is associated with the i-th lane in
    left-to-right order, so ``geometry.lateral_order`` recovers the
    generation order and an index-driven predictor is exact on these scenes.
    """
    rng = random.Random(seed)
    k, width = cfg.lane_count, cfg.lane_width
    offsets = _lane_offsets(k, width)

    specs: List[Tuple[VecType, float]] = [(VecType.CENTERLINE, y) for y in offsets]
    specs += [(VecType.DIVIDER, y + width / 2) for y in offsets]
    specs.append((VecType.DIVIDER, offsets[-1] - width / 2))
    boundary = k * width / 2 + 0.3
    specs += [(VecType.ROAD_BOUNDARY, boundary), (VecType.ROAD_BOUNDARY, -boundary)]

    ids = list(range(len(specs)))
    rng.shuffle(ids)
    vectors = {
        vid: _polyline(vid, vec_type, y, cfg.clip_length)
        for vid, (vec_type, y) in zip(ids, specs)
    }
    lane_ids = ids[:k]  # generation order: lane 1 .. lane k, left to right

    frame_count = max(1, int(cfg.clip_length / cfg.frame_spacing))
    poses = {}
    frames = []
    for i in range(frame_count):
        ts = str(_BASE_TIMESTAMP_NS + i * _FRAME_INTERVAL_NS)
        poses[ts] = _forward_pose(ts, x=i * cfg.frame_spacing)
        frames.append(FrameRef(timestamp=ts, image=f"frames/{ts}.jpg"))

    clip = ClipData(
        sign_quad=_sign_quad(cfg),
        vectors=vectors,
        intrinsics=_DEFAULT_INTRINSICS,
        poses=poses,
        frames=tuple(frames),
    )

    labeled = []
    edges = set()
    for i in range(1, cfg.rule_count + 1):
        rule = _sample_rule(rng, i, cfg)
        lane_id = lane_ids[i - 1]
        labeled.append(
            LabeledRule(
                key=str(i - 1),
                rule=rule,
                centerline_ids=(lane_id,),
                semantic_polygon=_semantic_polygon(cfg, offsets[i - 1]),
            )
        )
        edges.add((str(i - 1), lane_id))

    graph = CorrespondenceGraph(
        rule_keys=frozenset(item.key for item in labeled),
        centerline_ids=frozenset(lane_ids),
        edges=frozenset(edges),
    )
    return clip, tuple(labeled), graph


def _perturb_rule(rng: random.Random, rule: Rule) -> Rule:
    """Change exactly one property, never ``RuleIndex``, to a different value.

    Leaving the index alone keeps the perturbed rule distinct from every
    ground-truth rule of its scene, so it can never be matched by accident.
    """
    fields = {
        "lane_type": sorted(LANE_TYPES),
        "lane_direction": list(_DIRECTION_CHOICES),
        "allowed_transport": list(_TRANSPORT_CHOICES),
        "effective_date": list(_DATE_CHOICES),
        "effective_time": list(_TIME_CHOICES),
        "low_speed_limit": list(_LOW_SPEED_CHOICES),
        "high_speed_limit": list(_HIGH_SPEED_CHOICES),
    }
    name = rng.choice(sorted(fields))
    current = getattr(rule, name)
    replacement = rng.choice([v for v in fields[name] if v != current])
    return Rule(
        lane_type=rule.lane_type if name != "lane_type" else replacement,
        rule_index=rule.rule_index,
        lane_direction=rule.lane_direction if name != "lane_direction" else replacement,
        allowed_transport=rule.allowed_transport if name != "allowed_transport" else replacement,
        effective_date=rule.effective_date if name != "effective_date" else replacement,
        effective_time=rule.effective_time if name != "effective_time" else replacement,
        low_speed_limit=rule.low_speed_limit if name != "low_speed_limit" else replacement,
        high_speed_limit=rule.high_speed_limit if name != "high_speed_limit" else replacement,
    )


def corrupt_with_log(
    labeled: Sequence[LabeledRule],
    graph: CorrespondenceGraph,
    spec: CorruptionSpec,
    seed: int,
) -> Tuple[PredictionSet, ExpectedCounts, Tuple[CorruptionLogEntry, ...]]:
    """Corrupt a ground truth into a prediction, counting as it goes.

    The returned counts and per-edge log are bookkeeping of the corruption
    itself, never derived by re-scoring, so they stay independent of the
    metric engine under test.
    """
    rng = random.Random(seed)
    centerline_pool = sorted(graph.centerline_ids)

    pred_rules: List[PredictedRule] = []
    pred_edges: List[PredictedEdge] = []
    log: List[CorruptionLogEntry] = []
    matches = 0
    true_kept = 0
    clean_kept = 0
    added = 0

    for item in labeled:
        if rng.random() < spec.drop_rule_p:
            continue
        perturbed = rng.random() < spec.perturb_property_p
        rule = _perturb_rule(rng, item.rule) if perturbed else item.rule
        if not perturbed:
            matches += 1
        position = len(pred_rules)
        pred_rules.append(PredictedRule(rule=rule, confidence=1.0))

        for cid in item.centerline_ids:
            if rng.random() < spec.drop_edge_p:
                continue
            confidence = rng.uniform(spec.c_lo_correct, 1.0)
            pred_edges.append(
                PredictedEdge(rule_position=position, centerline_id=cid, confidence=confidence)
            )
            log.append(CorruptionLogEntry(confidence, true_edge=True, rule_clean=not perturbed))
            true_kept += 1
            if not perturbed:
                clean_kept += 1

        if rng.random() < spec.add_edge_p:
            candidates = [c for c in centerline_pool if c not in item.centerline_ids]
            if candidates:
                cid = rng.choice(candidates)
                confidence = rng.uniform(0.0, spec.c_hi_wrong)
                pred_edges.append(
                    PredictedEdge(rule_position=position, centerline_id=cid, confidence=confidence)
                )
                log.append(CorruptionLogEntry(confidence, true_edge=False, rule_clean=not perturbed))
                added += 1

    counts = ExpectedCounts(
        gt_rules=len(labeled),
        pred_rules=len(pred_rules),
        rule_matches=matches,
        gt_edges=len(graph.edges),
        pred_edges=true_kept + added,
        edge_hits=true_kept,
        subgraph_hits=clean_kept,
    )
    return PredictionSet(rules=tuple(pred_rules), edges=tuple(pred_edges)), counts, tuple(log)


def corrupt(
    labeled: Sequence[LabeledRule],
    graph: CorrespondenceGraph,
    spec: CorruptionSpec,
    seed: int,
) -> Tuple[PredictionSet, ExpectedCounts]:
    """:func:`corrupt_with_log` without the per-edge log."""
    pred, counts, _ = corrupt_with_log(labeled, graph, spec, seed)
    return pred, counts


def perfect_prediction(labeled: Sequence[LabeledRule]) -> PredictionSet:
    """The ground truth restated as a prediction with full confidence."""
    rules = tuple(PredictedRule(rule=item.rule, confidence=1.0) for item in labeled)
    edges = tuple(
        PredictedEdge(rule_position=pos, centerline_id=cid, confidence=1.0)
        for pos, item in enumerate(labeled)
        for cid in item.centerline_ids
    )
    return PredictionSet(rules=rules, edges=edges)


def worked_example_fixture() -> Tuple[
    ClipData, Tuple[LabeledRule, ...], CorrespondenceGraph, PredictionSet
]:
    """A hand-built scene with known metric outcomes, used as a golden test.

    Ground truth: 5 rules over 8 centerlines with 6 association edges. The
    prediction carries 6 rules of which exactly 3 are property-perfect, and
    5 edges of which 3 connect a rule's slot to one of its true lanes but
    only 1 of those belongs to a property-perfect rule. The resulting
    metrics are 1/2, 3/5, 3/5, 1/2 for the sub-tasks and 1/5, 1/6 overall.
    """
    cfg = SceneConfig(lane_count=8, rule_count=1)
    offsets = _lane_offsets(8, cfg.lane_width)
    vectors = {
        vid: _polyline(vid, VecType.CENTERLINE, y, cfg.clip_length)
        for vid, y in enumerate(offsets)
    }
    ts = str(_BASE_TIMESTAMP_NS)
    clip = ClipData(
        sign_quad=_sign_quad(cfg),
        vectors=vectors,
        intrinsics=_DEFAULT_INTRINSICS,
        poses={ts: _forward_pose(ts, x=0.0)},
    )

    def rule(index: int, **overrides) -> Rule:
        base = dict(
            lane_type="DirectionLane",
            rule_index=str(index),
            lane_direction=frozenset({"GoStraight"}),
            allowed_transport="None",
            effective_date="None",
            effective_time="None",
            low_speed_limit="None",
            high_speed_limit="None",
        )
        base.update(overrides)
        return Rule(**base)

    gt_rules = (
        rule(1, lane_direction=frozenset({"GoStraight", "TurnLeft"})),
        rule(2),
        rule(3, lane_direction=frozenset({"TurnLeft"})),
        rule(4, lane_type="BusLane", allowed_transport="Bus",
             lane_direction=frozenset({"None"}), effective_time="7:00-9:00"),
        rule(5, lane_type="SpeedLimitedLane", high_speed_limit="80"),
    )
    lanes_of = {0: (0,), 1: (1,), 2: (2, 3), 3: (4,), 4: (5,)}
    labeled = tuple(
        LabeledRule(
            key=str(i),
            rule=gt_rules[i],
            centerline_ids=lanes_of[i],
            semantic_polygon=_semantic_polygon(cfg, offsets[i]),
        )
        for i in range(5)
    )
    graph = CorrespondenceGraph(
        rule_keys=frozenset(item.key for item in labeled),
        centerline_ids=frozenset(vectors),
        edges=frozenset((item.key, cid) for item in labeled for cid in item.centerline_ids),
    )

    pred_rules = (
        PredictedRule(gt_rules[0], 1.0),                                    # exact
        PredictedRule(gt_rules[1], 1.0),                                    # exact
        PredictedRule(gt_rules[2], 1.0),                                    # exact
        PredictedRule(_swap_transport(gt_rules[3]), 1.0),                   # one property off
        PredictedRule(_swap_transport(gt_rules[4]), 1.0),                   # one property off
        PredictedRule(rule(6, lane_direction=frozenset({"TurnRight"})), 1.0),  # hallucinated
    )
    pred_edges = (
        PredictedEdge(0, 0, 1.0),  # right lane, perfect rule: the one full hit
        PredictedEdge(1, 6, 1.0),  # wrong lane under a perfect rule
        PredictedEdge(3, 4, 1.0),  # right lane, rule misread
        PredictedEdge(4, 5, 1.0),  # right lane, rule misread
        PredictedEdge(5, 7, 1.0),  # edge claimed by the hallucinated rule
    )
    return clip, labeled, graph, PredictionSet(rules=pred_rules, edges=pred_edges)


def _swap_transport(rule: Rule) -> Rule:
    replacement = "Truck" if rule.allowed_transport != "Truck" else "Vehicle"
    return Rule(
        lane_type=rule.lane_type,
        rule_index=rule.rule_index,
        lane_direction=rule.lane_direction,
        allowed_transport=replacement,
        effective_date=rule.effective_date,
        effective_time=rule.effective_time,
        low_speed_limit=rule.low_speed_limit,
        high_speed_limit=rule.high_speed_limit,
    )
