"""A deterministic, non-learned reference predictor.

Two pieces: similarity-threshold grouping (connected components over a
cosine-similarity matrix, the post-processing step a token-level grouping
model needs), and a geometric correspondence baseline that maps each rule's
stated index to the same-numbered lane counted left to right from the sign.
The baseline exists to exercise the metric pipeline end to end; it is exact
on synthetic index-aligned scenes and only a floor on anything else.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from mapdr import geometry
from mapdr.core import (
    ClipData,
    OcrObservation,
    PredictedEdge,
    PredictedRule,
    PredictionSet,
    Rule,
    normalize_rule,
)

DEFAULT_CLUSTER_THRESHOLD = 0.5


def validate_similarity_matrix(sim: np.ndarray) -> np.ndarray:
    sim = np.asarray(sim, dtype=float)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError("similarity matrix must be square")
    if sim.size and (np.min(sim) < -1.0 or np.max(sim) > 1.0):
        raise ValueError("similarities must lie in [-1, 1]")
    if not np.allclose(sim, sim.T, atol=1e-9, rtol=0.0):
        raise ValueError("similarity matrix must be symmetric")
    if not np.allclose(np.diag(sim), 1.0, atol=1e-9, rtol=0.0):
        raise ValueError("similarity matrix must have a unit diagonal")
    return sim


def cluster_by_similarity(sim: np.ndarray, threshold: float) -> Tuple[Tuple[int, ...], ...]:
    """Partition indices into connected components of ``sim >= threshold``.

    Components are returned sorted by their smallest member, members
    ascending, so the labeling is deterministic.
    """
    sim = validate_similarity_matrix(sim)
    if not (-1.0 < threshold < 1.0):
        raise ValueError("threshold must be inside (-1, 1)")
    n = sim.shape[0]
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if sim[i, j] >= threshold:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, List[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return tuple(tuple(sorted(members)) for _, members in sorted(groups.items()))


def group_by_polygon_overlap(
    observations: Sequence[OcrObservation],
) -> Tuple[Tuple[int, ...], ...]:
    """Group OCR observations whose polygons overlap on the sign plane.

    Optional input mode: 3D polygons are flattened onto the principal plane
    of all points before the pairwise intersection test.
    """
    from shapely.geometry import Polygon

    if not observations:
        return ()
    flat = [_flatten_polygon(obs.polygon, observations) for obs in observations]
    polys = [Polygon(p).buffer(0) for p in flat]
    n = len(polys)
    sim = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            if polys[i].intersects(polys[j]):
                sim[i, j] = sim[j, i] = 1.0
    return cluster_by_similarity(sim, DEFAULT_CLUSTER_THRESHOLD)


def _flatten_polygon(
    polygon: Sequence[Sequence[float]], observations: Sequence[OcrObservation]
) -> np.ndarray:
    points = np.asarray(polygon, dtype=float)
    if points.shape[1] == 2:
        return points
    cloud = np.vstack([np.asarray(o.polygon, dtype=float) for o in observations if len(o.polygon[0]) == 3])
    center = cloud.mean(axis=0)
    _, _, axes = np.linalg.svd(cloud - center, full_matrices=False)
    return (points - center) @ axes[:2].T


def infer_correspondence(rules: Sequence[Rule], clip: ClipData) -> PredictionSet:
    """Associate each rule to the lane its index points at, left to right.

    ``RuleIndex`` is read as a 1-based lane number; rules whose index is
    not a digit string or falls outside the lane count get no edges. Rules
    are passed through verbatim with full confidence.
    """
    order = geometry.lateral_order(clip.centerlines(), clip.sign_quad)
    pred_rules = []
    edges = []
    for position, rule in enumerate(rules):
        pred_rules.append(PredictedRule(rule=rule, confidence=1.0))
        index_text = normalize_rule(rule).rule_index
        if index_text.isdigit():
            index = int(index_text)
            if 1 <= index <= len(order):
                edges.append(
                    PredictedEdge(
                        rule_position=position,
                        centerline_id=order[index - 1],
                        confidence=1.0,
                    )
                )
    return PredictionSet(rules=tuple(pred_rules), edges=tuple(edges))
