import random
from dataclasses import replace

import pytest

from mapdr import metrics, synthgen
from mapdr.core import (
    CorrespondenceGraph,
    PredictedEdge,
    PredictedRule,
    PredictionSet,
)
from mapdr.metrics import (
    aggregate,
    area_under_pr,
    average_precision,
    correspondence_pr,
    evaluate_clip,
    match_rules,
    overall_pr,
    rule_extraction_pr,
    safe_ratio,
)
from tests.conftest import permute_prediction
from tests.test_core import make_rule

GOLDEN = (0.5, 0.6, 0.6, 0.5, 0.2, 1 / 6)


@pytest.fixture(scope="module")
def worked_example():
    return synthgen.worked_example_fixture()


def small_scene(seed=0, lanes=4, rules=3):
    cfg = synthgen.SceneConfig(lane_count=lanes, rule_count=rules)
    return synthgen.generate_clip(cfg, seed)


class TestGolden:
    def test_six_numbers_exact(self, worked_example):
        _, labeled, graph, pred = worked_example
        report = evaluate_clip(labeled, graph, pred)
        got = (report.p_re, report.r_re, report.p_cr, report.r_cr, report.p_all, report.r_all)
        assert got == GOLDEN

    def test_counts(self, worked_example):
        _, labeled, graph, pred = worked_example
        report = evaluate_clip(labeled, graph, pred)
        assert report.gt_rules == 5
        assert report.pred_rules == 6
        assert report.rule_matches == 3
        assert report.gt_edges == 6
        assert report.pred_edges == 5
        assert report.edge_hits == 3
        assert report.subgraph_hits == 1


class TestMatchRules:
    def test_identity(self):
        gt = [("0", make_rule(rule_index="1")), ("1", make_rule(rule_index="2"))]
        matching = match_rules(gt, [r for _, r in gt])
        assert len(matching.pairs) == 2
        assert rule_extraction_pr(matching) == (1.0, 1.0)

    def test_duplicate_predictions_match_once(self):
        rule = make_rule()
        matching = match_rules([("0", rule)], [rule, rule])
        assert len(matching.pairs) == 1
        assert matching.unmatched_pred == (1,)

    def test_worked_counts(self, worked_example):
        _, labeled, _, pred = worked_example
        matching = match_rules(
            [(item.key, item.rule) for item in labeled], [p.rule for p in pred.rules]
        )
        assert len(matching.pairs) == 3
        assert matching.gt_count == 5
        assert matching.pred_count == 6

    def test_tie_break_lowest_key_lowest_position(self):
        rule = make_rule()
        matching = match_rules([("3", rule), ("1", rule)], [rule, rule, rule])
        assert matching.pairs == (("1", 0), ("3", 1))

    def test_whitespace_differences_still_match(self):
        gt = [("0", make_rule(effective_time="7:00 - 9:00"))]
        matching = match_rules(gt, [make_rule(effective_time=" 7:00  - 9:00 ")])
        assert len(matching.pairs) == 1


class TestConventions:
    def test_empty_prediction_nonempty_gt(self):
        matching = match_rules([("0", make_rule())], [])
        assert rule_extraction_pr(matching) == (0.0, 0.0)

    def test_both_empty(self):
        matching = match_rules([], [])
        assert rule_extraction_pr(matching) == (1.0, 1.0)

    def test_safe_ratio(self):
        assert safe_ratio(0, 0, 0) == 1.0
        assert safe_ratio(0, 0, 3) == 0.0
        assert safe_ratio(1, 2, 5) == 0.5


class TestCorrespondencePr:
    def graph(self):
        return CorrespondenceGraph(
            rule_keys={"a", "b", "c"},
            centerline_ids={1, 2, 3, 4},
            edges={("a", 1), ("a", 2), ("b", 2), ("b", 3), ("c", 3), ("c", 4)},
        )

    def test_worked_counts(self):
        graph = self.graph()
        pred = {("a", 1), ("a", 2), ("b", 2), ("b", 4), ("c", 1)}
        assert correspondence_pr(graph, pred) == (3 / 5, 3 / 6)

    def test_perfect(self):
        graph = self.graph()
        assert correspondence_pr(graph, set(graph.edges)) == (1.0, 1.0)

    def test_empty_prediction(self):
        assert correspondence_pr(self.graph(), set()) == (0.0, 0.0)

    def test_unknown_endpoint_raises(self):
        with pytest.raises(ValueError):
            correspondence_pr(self.graph(), {("z", 1)})
        with pytest.raises(ValueError):
            correspondence_pr(self.graph(), {("a", 99)})


class TestOverall:
    def test_worked_example(self, worked_example):
        _, labeled, graph, pred = worked_example
        gt = [(item.key, item.rule) for item in labeled]
        assert overall_pr(gt, graph, pred, 0.0) == (0.2, 1 / 6)

    def test_perfect_at_half_threshold(self):
        _, labeled, graph = small_scene()
        pred = synthgen.perfect_prediction(labeled)
        gt = [(item.key, item.rule) for item in labeled]
        assert overall_pr(gt, graph, pred, 0.5) == (1.0, 1.0)

    def test_wrong_property_voids_the_subgraph(self):
        _, labeled, graph = small_scene(rules=1)
        item = labeled[0]
        wrong = replace(item.rule, high_speed_limit="120")
        pred = PredictionSet(
            rules=(PredictedRule(wrong, 1.0),),
            edges=(PredictedEdge(0, item.centerline_ids[0], 1.0),),
        )
        gt = [(item.key, item.rule)]
        # the association is right, so correspondence credit is earned,
        # but the overall subgraph needs the rule to be right too
        report = evaluate_clip([item], graph, pred)
        assert report.edge_hits == 1
        assert overall_pr(gt, graph, pred, 0.0) == (0.0, 0.0)

    def test_threshold_gates_edges(self):
        _, labeled, graph = small_scene(rules=2)
        base = synthgen.perfect_prediction(labeled)
        edges = tuple(
            replace(e, confidence=0.9 if i == 0 else 0.2) for i, e in enumerate(base.edges)
        )
        pred = PredictionSet(rules=base.rules, edges=edges)
        gt = [(item.key, item.rule) for item in labeled]
        assert overall_pr(gt, graph, pred, 0.5) == (1.0, 0.5)


class TestAveragePrecision:
    def test_all_correct_full_confidence(self):
        _, labeled, graph = small_scene()
        pred = synthgen.perfect_prediction(labeled)
        gt = [(item.key, item.rule) for item in labeled]
        ap, curve = average_precision(gt, graph, pred)
        assert ap == 1.0
        assert all(pt.p_all == 1.0 and pt.r_all == 1.0 for pt in curve)
        assert len(curve) == 100

    def test_empty_prediction(self):
        _, labeled, graph = small_scene()
        gt = [(item.key, item.rule) for item in labeled]
        ap, _ = average_precision(gt, graph, PredictionSet(rules=(), edges=()))
        assert ap == 0.0

    def test_two_edge_case_matches_enumeration_oracle(self):
        # one rule, two true lanes; prediction keeps the first edge at 0.9
        # and claims a wrong lane at 0.4
        clip, labeled, graph = small_scene(rules=1)
        item = labeled[0]
        lanes = sorted(v.id for v in clip.centerlines())
        true_lane = item.centerline_ids[0]
        second_true = next(c for c in lanes if c != true_lane)
        wrong_lane = next(c for c in lanes if c not in (true_lane, second_true))
        item = replace(item, centerline_ids=(true_lane, second_true))
        graph = CorrespondenceGraph(
            rule_keys={item.key},
            centerline_ids=set(lanes),
            edges={(item.key, true_lane), (item.key, second_true)},
        )
        pred = PredictionSet(
            rules=(PredictedRule(item.rule, 1.0),),
            edges=(
                PredictedEdge(0, true_lane, 0.9),
                PredictedEdge(0, wrong_lane, 0.4),
            ),
        )
        ap, _ = average_precision([(item.key, item.rule)], graph, pred)

        # independent enumeration of the same grid
        points = {}
        for i in range(100):
            tau = i / 99
            kept = [c for c in (0.9, 0.4) if c >= tau]
            hits = sum(1 for c in kept if c == 0.9)
            precision = hits / len(kept) if kept else 0.0
            recall = hits / 2
            if recall not in points or precision > points[recall]:
                points[recall] = precision
        expected = 0.0
        curve = sorted(points.items())
        for (r0, p0), (r1, p1) in zip(curve, curve[1:]):
            expected += (p0 + p1) / 2 * (r1 - r0)

        assert abs(ap - expected) < 1e-15
        assert ap == 0.25

    def test_area_anchors_recall_zero(self):
        assert area_under_pr([(1.0, 1.0)], precision_at_max_threshold=1.0) == 1.0
        assert area_under_pr([(0.0, 0.0)], precision_at_max_threshold=0.0) == 0.0
        assert area_under_pr([(0.5, 0.5), (0.5, 1.0)], precision_at_max_threshold=0.0) == 0.25


class TestInvariants:
    def corrupted(self, seed):
        spec = synthgen.CorruptionSpec(
            drop_rule_p=0.2, perturb_property_p=0.3, drop_edge_p=0.2, add_edge_p=0.6
        )
        k = 2 + seed % 7
        _, labeled, graph = synthgen.generate_clip(
            synthgen.SceneConfig(lane_count=k, rule_count=1 + seed % k), seed
        )
        pred, _ = synthgen.corrupt(labeled, graph, spec, seed + 99)
        return labeled, graph, pred

    def test_recall_monotone_in_threshold(self):
        for seed in range(25):
            labeled, graph, pred = self.corrupted(seed)
            gt = [(item.key, item.rule) for item in labeled]
            previous = None
            for tau in (0.0, 0.25, 0.5, 0.75, 1.0):
                _, recall = overall_pr(gt, graph, pred, tau)
                if previous is not None:
                    assert recall <= previous + 1e-15
                previous = recall

    def test_overall_hits_bounded_by_subtask_hits(self):
        for seed in range(25):
            labeled, graph, pred = self.corrupted(seed)
            report = evaluate_clip(labeled, graph, pred)
            assert report.subgraph_hits <= min(report.edge_hits, report.rule_matches)

    def test_permutation_invariance(self, worked_example):
        _, labeled, graph, pred = worked_example
        reference = evaluate_clip(labeled, graph, pred)
        rng = random.Random(5)
        for _ in range(10):
            order = list(range(len(pred.rules)))
            rng.shuffle(order)
            shuffled = permute_prediction(pred, order)
            report = evaluate_clip(labeled, graph, shuffled)
            assert report == reference

    def test_permutation_invariance_on_corrupted(self):
        rng = random.Random(1)
        for seed in range(15):
            labeled, graph, pred = self.corrupted(seed)
            reference = evaluate_clip(labeled, graph, pred)
            order = list(range(len(pred.rules)))
            rng.shuffle(order)
            report = evaluate_clip(labeled, graph, permute_prediction(pred, order))
            assert report == reference


class TestAggregate:
    def test_single_clip_identity(self):
        _, labeled, graph = small_scene()
        pred = synthgen.perfect_prediction(labeled)
        report = evaluate_clip(labeled, graph, pred)
        assert aggregate([report]) == report

    def test_micro_average_pools_counts(self):
        _, labeled, graph = small_scene(rules=2)
        spec = synthgen.CorruptionSpec(drop_rule_p=0.5, c_lo_correct=1.0)
        rng_seed = next(
            s for s in range(100)
            if synthgen.corrupt(labeled, graph, spec, s)[1].pred_rules == 1
        )
        pred, counts = synthgen.corrupt(labeled, graph, spec, rng_seed)
        half = evaluate_clip(labeled, graph, pred)
        assert (half.rule_matches, half.gt_rules) == (1, 2)
        pooled = aggregate([half, half])
        assert pooled.rule_matches == 2
        assert pooled.gt_rules == 4
        assert pooled.r_re == 0.5

    def test_pooled_counts_match_oracle(self):
        spec = synthgen.CorruptionSpec(
            drop_rule_p=0.25, perturb_property_p=0.25, drop_edge_p=0.2, add_edge_p=0.4
        )
        reports, expected = [], []
        for seed in range(50):
            k = 1 + seed % 8
            _, labeled, graph = synthgen.generate_clip(
                synthgen.SceneConfig(lane_count=k, rule_count=1 + (seed // 2) % k), seed
            )
            pred, counts = synthgen.corrupt(labeled, graph, spec, seed * 3 + 7)
            reports.append(evaluate_clip(labeled, graph, pred))
            expected.append(counts)
        pooled = aggregate(reports)
        assert pooled.gt_rules == sum(c.gt_rules for c in expected)
        assert pooled.pred_rules == sum(c.pred_rules for c in expected)
        assert pooled.rule_matches == sum(c.rule_matches for c in expected)
        assert pooled.gt_edges == sum(c.gt_edges for c in expected)
        assert pooled.pred_edges == sum(c.pred_edges for c in expected)
        assert pooled.edge_hits == sum(c.edge_hits for c in expected)
        assert pooled.p_re == safe_ratio(
            pooled.rule_matches, pooled.pred_rules, pooled.gt_rules
        )

    def test_mismatched_grids_rejected(self):
        _, labeled, graph = small_scene()
        pred = synthgen.perfect_prediction(labeled)
        a = evaluate_clip(labeled, graph, pred, threshold_count=100)
        b = evaluate_clip(labeled, graph, pred, threshold_count=50)
        with pytest.raises(ValueError):
            aggregate([a, b])


class TestReportSerialization:
    def test_round_trip(self, worked_example):
        _, labeled, graph, pred = worked_example
        report = evaluate_clip(labeled, graph, pred)
        doc = metrics.report_to_dict(report)
        assert metrics.report_from_dict(doc) == report
