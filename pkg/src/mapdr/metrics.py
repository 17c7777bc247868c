"""Precision/recall metrics for rule extraction, correspondence reasoning,
and the combined task, plus the threshold-swept average precision.

Conventions
-----------

* Rule matching is exact: a predicted rule counts only if all eight
  normalized properties equal a ground-truth rule's, and matching is
  one-to-one.
* Correspondence reasoning is scored with ground-truth rules on the rule
  side. Predicted edges are keyed to ground-truth rule slots by content
  match where one exists and otherwise by ``RuleIndex`` (the rule's stated
  slot on the sign), so an association can be topologically right even when
  the rule's other properties were misread.
* The overall metric counts a predicted (rule, lane) subgraph as correct
  only when the rule is exactly matched and the matched rule carries that
  ground-truth edge.
* Empty-denominator convention: a ratio with an empty denominator set is
  1.0 when the opposite side is also empty, else 0.0.
* All tie-breaks run on canonical orderings (ground-truth keys in natural
  order, predicted entries ordered by content), so every metric is
  invariant under permutations of the prediction file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from mapdr.core import (
    CorrespondenceGraph,
    LabeledRule,
    MetricReport,
    PredictionSet,
    Rule,
    ThresholdPoint,
    normalize_rule,
)

DEFAULT_THRESHOLD_COUNT = 100


def threshold_grid(count: int = DEFAULT_THRESHOLD_COUNT) -> Tuple[float, ...]:
    """``count`` uniformly spaced thresholds covering [0, 1] inclusive."""
    if count < 2:
        raise ValueError("threshold count must be at least 2")
    return tuple(i / (count - 1) for i in range(count))


def safe_ratio(numerator: int, denominator: int, opposite: int) -> float:
    """``numerator / denominator`` with the empty-set convention.

    When the denominator set is empty the ratio is 1.0 if the opposite
    side's set is empty too, else 0.0.
    """
    if denominator == 0:
        return 1.0 if opposite == 0 else 0.0
    return numerator / denominator


def _gt_key_order(key: str) -> tuple:
    # natural order for the digit keys label files actually use
    if key.isdigit():
        return (0, int(key), key)
    return (1, 0, key)


@dataclass(frozen=True)
class RuleMatching:
    """A one-to-one matching between ground-truth and predicted rules."""

    pairs: Tuple[Tuple[str, int], ...]
    unmatched_gt: Tuple[str, ...]
    unmatched_pred: Tuple[int, ...]

    def __post_init__(self) -> None:
        keys = [k for k, _ in self.pairs]
        positions = [p for _, p in self.pairs]
        if len(set(keys)) != len(keys) or len(set(positions)) != len(positions):
            raise ValueError("matching must be one-to-one")

    @property
    def gt_count(self) -> int:
        return len(self.pairs) + len(self.unmatched_gt)

    @property
    def pred_count(self) -> int:
        return len(self.pairs) + len(self.unmatched_pred)

    def matched_key_by_position(self) -> Dict[int, str]:
        return {pos: key for key, pos in self.pairs}


def match_rules(
    gt_rules: Sequence[Tuple[str, Rule]],
    pred_rules: Sequence[Rule],
    pred_priority: Optional[Sequence[int]] = None,
) -> RuleMatching:
    """Maximum one-to-one matching of predicted to ground-truth rules.

    Because equality is exact, the maximum matching pairs, within each
    equivalence class of rule content, the lowest ground-truth keys with
    the earliest predicted entries. ``pred_priority`` optionally replaces
    document order with another deterministic ordering of positions.
    """
    if pred_priority is None:
        pred_priority = range(len(pred_rules))

    gt_classes: Dict[Rule, List[str]] = {}
    for key, rule in gt_rules:
        gt_classes.setdefault(normalize_rule(rule), []).append(key)
    for keys in gt_classes.values():
        keys.sort(key=_gt_key_order)

    pred_classes: Dict[Rule, List[int]] = {}
    for pos in pred_priority:
        pred_classes.setdefault(normalize_rule(pred_rules[pos]), []).append(pos)

    pairs: List[Tuple[str, int]] = []
    matched_positions = set()
    for value, keys in gt_classes.items():
        for key, pos in zip(keys, pred_classes.get(value, [])):
            pairs.append((key, pos))
            matched_positions.add(pos)

    matched_keys = {k for k, _ in pairs}
    unmatched_gt = sorted((k for k, _ in gt_rules if k not in matched_keys), key=_gt_key_order)
    unmatched_pred = sorted(p for p in range(len(pred_rules)) if p not in matched_positions)
    return RuleMatching(
        pairs=tuple(sorted(pairs, key=lambda kp: _gt_key_order(kp[0]))),
        unmatched_gt=tuple(unmatched_gt),
        unmatched_pred=tuple(unmatched_pred),
    )


def rule_extraction_pr(matching: RuleMatching) -> Tuple[float, float]:
    """Precision and recall of the rule-extraction sub-task."""
    hits = len(matching.pairs)
    precision = safe_ratio(hits, matching.pred_count, matching.gt_count)
    recall = safe_ratio(hits, matching.gt_count, matching.pred_count)
    return precision, recall


def correspondence_pr(
    gt_graph: CorrespondenceGraph, pred_edges: Iterable[Tuple[str, int]]
) -> Tuple[float, float]:
    """Precision and recall of an edge set keyed by ground-truth rule keys."""
    pred_edges = set(pred_edges)
    for key, cid in pred_edges:
        if key not in gt_graph.rule_keys:
            raise ValueError(f"edge references unknown rule key {key!r}")
        if cid not in gt_graph.centerline_ids:
            raise ValueError(f"edge references unknown centerline {cid}")
    hits = len(pred_edges & gt_graph.edges)
    precision = safe_ratio(hits, len(pred_edges), len(gt_graph.edges))
    recall = safe_ratio(hits, len(gt_graph.edges), len(pred_edges))
    return precision, recall


def canonical_prediction_order(pred: PredictionSet) -> Tuple[int, ...]:
    """Positions of the predicted rules sorted by content.

    Sorting by (rule content, confidence, attached edges) makes every
    downstream tie-break independent of the order rules appear in the
    prediction file; fully identical entries are interchangeable.
    """

    def entry_key(pos: int) -> tuple:
        entry = pred.rules[pos]
        edges = tuple((e.centerline_id, e.confidence) for e in pred.edges_of(pos))
        return (entry.rule.sort_key(), entry.confidence, edges, pos)

    return tuple(sorted(range(len(pred.rules)), key=entry_key))


def align_rule_slots(
    gt_rules: Sequence[Tuple[str, Rule]],
    pred: PredictionSet,
    matching: Optional[RuleMatching] = None,
) -> Dict[int, Optional[str]]:
    """Assign each predicted rule the ground-truth rule slot it speaks for.

    Content-matched rules take their matched slot. The remainder are
    aligned within groups sharing a normalized ``RuleIndex``: the index is
    the rule's stated position on the sign, so it identifies the slot even
    when other properties were predicted wrong. Predicted rules with no
    available slot map to ``None``.
    """
    order = canonical_prediction_order(pred)
    if matching is None:
        matching = match_rules(gt_rules, [entry.rule for entry in pred.rules], order)
    slots: Dict[int, Optional[str]] = {pos: None for pos in range(len(pred.rules))}
    slots.update(matching.matched_key_by_position())
    taken = set(matching.matched_key_by_position().values())

    gt_by_index: Dict[str, List[str]] = {}
    for key, rule in gt_rules:
        if key in taken:
            continue
        gt_by_index.setdefault(normalize_rule(rule).rule_index, []).append(key)
    for keys in gt_by_index.values():
        keys.sort(key=_gt_key_order)

    pred_by_index: Dict[str, List[int]] = {}
    for pos in order:
        if slots[pos] is not None:
            continue
        index = normalize_rule(pred.rules[pos].rule).rule_index
        pred_by_index.setdefault(index, []).append(pos)

    for index, positions in pred_by_index.items():
        for key, pos in zip(gt_by_index.get(index, []), positions):
            slots[pos] = key
    return slots


@dataclass(frozen=True)
class _ScoredEdge:
    confidence: float
    cr_hit: bool
    overall_hit: bool


def _score_edges(
    gt_rules: Sequence[Tuple[str, Rule]],
    gt_graph: CorrespondenceGraph,
    pred: PredictionSet,
) -> Tuple[RuleMatching, List[_ScoredEdge]]:
    order = canonical_prediction_order(pred)
    matching = match_rules(gt_rules, [entry.rule for entry in pred.rules], order)
    slots = align_rule_slots(gt_rules, pred, matching)
    matched = matching.matched_key_by_position()
    scored = []
    for edge in pred.edges:
        slot = slots.get(edge.rule_position)
        cr_hit = slot is not None and (slot, edge.centerline_id) in gt_graph.edges
        match_key = matched.get(edge.rule_position)
        overall_hit = match_key is not None and (match_key, edge.centerline_id) in gt_graph.edges
        scored.append(_ScoredEdge(edge.confidence, cr_hit, overall_hit))
    return matching, scored


def overall_pr(
    gt_rules: Sequence[Tuple[str, Rule]],
    gt_graph: CorrespondenceGraph,
    pred: PredictionSet,
    threshold: float,
) -> Tuple[float, float]:
    """Precision and recall of the combined task at one confidence threshold.

    The threshold gates edge confidence only; a gated edge counts as a hit
    iff its rule is exactly matched and the matched slot carries that edge.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ValueError("threshold must be in [0, 1]")
    _, scored = _score_edges(gt_rules, gt_graph, pred)
    kept = [e for e in scored if e.confidence >= threshold]
    hits = sum(e.overall_hit for e in kept)
    gt_total = len(gt_graph.edges)
    precision = safe_ratio(hits, len(kept), gt_total)
    recall = safe_ratio(hits, gt_total, len(kept))
    return precision, recall


def area_under_pr(
    points: Iterable[Tuple[float, float]], precision_at_max_threshold: float
) -> float:
    """Trapezoidal area under a (recall, precision) point cloud.

    Identical recall values collapse to their best precision. If no point
    sits at recall zero, the curve is anchored there with the precision
    observed at the highest threshold.
    """
    best: Dict[float, float] = {}
    for recall, precision in points:
        if recall not in best or precision > best[recall]:
            best[recall] = precision
    if 0.0 not in best:
        best[0.0] = precision_at_max_threshold
    curve = sorted(best.items())
    area = 0.0
    for (r0, p0), (r1, p1) in zip(curve, curve[1:]):
        area += (p0 + p1) / 2.0 * (r1 - r0)
    return area


def average_precision(
    gt_rules: Sequence[Tuple[str, Rule]],
    gt_graph: CorrespondenceGraph,
    pred: PredictionSet,
    threshold_count: int = DEFAULT_THRESHOLD_COUNT,
) -> Tuple[float, Tuple[ThresholdPoint, ...]]:
    """Sweep the overall metric over a uniform threshold grid and integrate.

    Returns the area under the precision-recall curve together with the
    per-threshold curve points.
    """
    _, scored = _score_edges(gt_rules, gt_graph, pred)
    gt_total = len(gt_graph.edges)
    curve = []
    for tau in threshold_grid(threshold_count):
        kept = [e for e in scored if e.confidence >= tau]
        hits = sum(e.overall_hit for e in kept)
        precision = safe_ratio(hits, len(kept), gt_total)
        recall = safe_ratio(hits, gt_total, len(kept))
        curve.append(
            ThresholdPoint(
                threshold=tau,
                p_all=precision,
                r_all=recall,
                pred_subgraphs=len(kept),
                subgraph_hits=hits,
            )
        )
    ap = area_under_pr(
        [(pt.r_all, pt.p_all) for pt in curve], precision_at_max_threshold=curve[-1].p_all
    )
    return ap, tuple(curve)


def evaluate_clip(
    labeled: Sequence[LabeledRule],
    gt_graph: CorrespondenceGraph,
    pred: PredictionSet,
    threshold_count: int = DEFAULT_THRESHOLD_COUNT,
) -> MetricReport:
    """Compute the full metric report of one prediction against one clip."""
    gt_rules = [(item.key, item.rule) for item in labeled]
    matching, scored = _score_edges(gt_rules, gt_graph, pred)

    p_re, r_re = rule_extraction_pr(matching)

    gt_total = len(gt_graph.edges)
    cr_hits = sum(e.cr_hit for e in scored)
    p_cr = safe_ratio(cr_hits, len(scored), gt_total)
    r_cr = safe_ratio(cr_hits, gt_total, len(scored))

    curve = []
    for tau in threshold_grid(threshold_count):
        kept = [e for e in scored if e.confidence >= tau]
        hits = sum(e.overall_hit for e in kept)
        curve.append(
            ThresholdPoint(
                threshold=tau,
                p_all=safe_ratio(hits, len(kept), gt_total),
                r_all=safe_ratio(hits, gt_total, len(kept)),
                pred_subgraphs=len(kept),
                subgraph_hits=hits,
            )
        )
    ap = area_under_pr(
        [(pt.r_all, pt.p_all) for pt in curve], precision_at_max_threshold=curve[-1].p_all
    )

    base = curve[0]
    return MetricReport(
        gt_rules=len(gt_rules),
        pred_rules=len(pred.rules),
        rule_matches=len(matching.pairs),
        gt_edges=gt_total,
        pred_edges=len(scored),
        edge_hits=cr_hits,
        gt_subgraphs=gt_total,
        pred_subgraphs=base.pred_subgraphs,
        subgraph_hits=base.subgraph_hits,
        p_re=p_re,
        r_re=r_re,
        p_cr=p_cr,
        r_cr=r_cr,
        p_all=base.p_all,
        r_all=base.r_all,
        overall_curve=tuple(curve),
        ap=ap,
    )


def aggregate(reports: Sequence[MetricReport]) -> MetricReport:
    """Micro-average clip reports: pool counts, then divide.

    The average precision is recomputed from the pooled per-threshold
    counts, so every report must have been swept over the same grid.
    """
    if not reports:
        raise ValueError("aggregate needs at least one clip report")
    grids = {tuple(pt.threshold for pt in r.overall_curve) for r in reports}
    if len(grids) != 1:
        raise ValueError("clip reports use different threshold grids")
    taus = grids.pop()

    def total(name: str) -> int:
        return sum(getattr(r, name) for r in reports)

    gt_rules = total("gt_rules")
    pred_rules = total("pred_rules")
    rule_matches = total("rule_matches")
    gt_edges = total("gt_edges")
    pred_edges = total("pred_edges")
    edge_hits = total("edge_hits")

    curve = []
    for i, tau in enumerate(taus):
        kept = sum(r.overall_curve[i].pred_subgraphs for r in reports)
        hits = sum(r.overall_curve[i].subgraph_hits for r in reports)
        curve.append(
            ThresholdPoint(
                threshold=tau,
                p_all=safe_ratio(hits, kept, gt_edges),
                r_all=safe_ratio(hits, gt_edges, kept),
                pred_subgraphs=kept,
                subgraph_hits=hits,
            )
        )
    ap = area_under_pr(
        [(pt.r_all, pt.p_all) for pt in curve], precision_at_max_threshold=curve[-1].p_all
    )
    base = curve[0]
    return MetricReport(
        gt_rules=gt_rules,
        pred_rules=pred_rules,
        rule_matches=rule_matches,
        gt_edges=gt_edges,
        pred_edges=pred_edges,
        edge_hits=edge_hits,
        gt_subgraphs=gt_edges,
        pred_subgraphs=base.pred_subgraphs,
        subgraph_hits=base.subgraph_hits,
        p_re=safe_ratio(rule_matches, pred_rules, gt_rules),
        r_re=safe_ratio(rule_matches, gt_rules, pred_rules),
        p_cr=safe_ratio(edge_hits, pred_edges, gt_edges),
        r_cr=safe_ratio(edge_hits, gt_edges, pred_edges),
        p_all=base.p_all,
        r_all=base.r_all,
        overall_curve=tuple(curve),
        ap=ap,
    )


def report_to_dict(report: MetricReport) -> dict:
    """JSON-ready form of a report; numbers stay at full precision."""
    return {
        "counts": {
            "gt_rules": report.gt_rules,
            "pred_rules": report.pred_rules,
            "rule_matches": report.rule_matches,
            "gt_edges": report.gt_edges,
            "pred_edges": report.pred_edges,
            "edge_hits": report.edge_hits,
            "gt_subgraphs": report.gt_subgraphs,
            "pred_subgraphs": report.pred_subgraphs,
            "subgraph_hits": report.subgraph_hits,
        },
        "p_re": report.p_re,
        "r_re": report.r_re,
        "p_cr": report.p_cr,
        "r_cr": report.r_cr,
        "p_all": report.p_all,
        "r_all": report.r_all,
        "curve": [
            {
                "t": pt.threshold,
                "p": pt.p_all,
                "r": pt.r_all,
                "pred": pt.pred_subgraphs,
                "hits": pt.subgraph_hits,
            }
            for pt in report.overall_curve
        ],
        "ap": report.ap,
    }


def report_from_dict(doc: Mapping) -> MetricReport:
    counts = doc["counts"]
    curve = tuple(
        ThresholdPoint(
            threshold=pt["t"],
            p_all=pt["p"],
            r_all=pt["r"],
            pred_subgraphs=pt["pred"],
            subgraph_hits=pt["hits"],
        )
        for pt in doc["curve"]
    )
    return MetricReport(
        gt_rules=counts["gt_rules"],
        pred_rules=counts["pred_rules"],
        rule_matches=counts["rule_matches"],
        gt_edges=counts["gt_edges"],
        pred_edges=counts["pred_edges"],
        edge_hits=counts["edge_hits"],
        gt_subgraphs=counts["gt_subgraphs"],
        pred_subgraphs=counts["pred_subgraphs"],
        subgraph_hits=counts["subgraph_hits"],
        p_re=doc["p_re"],
        r_re=doc["r_re"],
        p_cr=doc["p_cr"],
        r_cr=doc["r_cr"],
        p_all=doc["p_all"],
        r_all=doc["r_all"],
        overall_curve=curve,
        ap=doc["ap"],
    )
