import math

import pytest
from hypothesis import given, settings

from mapdr.core import (
    CameraIntrinsics,
    CameraPose,
    CorrespondenceGraph,
    LaneVector,
    Point3,
    PredictedEdge,
    PredictedRule,
    PredictionSet,
    Rule,
    VecType,
    normalize_rule,
    rules_equal,
)
from tests.conftest import rules


def make_rule(**overrides) -> Rule:
    base = dict(
        lane_type="DirectionLane",
        rule_index="1",
        lane_direction=frozenset({"GoStraight"}),
        allowed_transport="None",
        effective_date="None",
        effective_time="None",
        low_speed_limit="None",
        high_speed_limit="None",
    )
    base.update(overrides)
    return Rule(**base)


class TestNormalize:
    def test_trims_surrounding_whitespace(self):
        a = make_rule(effective_time="7:00 - 9:00")
        b = make_rule(effective_time=" 7:00 - 9:00 ")
        assert normalize_rule(b).effective_time == "7:00 - 9:00"
        assert normalize_rule(a) == normalize_rule(b)

    def test_collapses_internal_whitespace(self):
        r = make_rule(effective_time="7:00   -\t9:00")
        assert normalize_rule(r).effective_time == "7:00 - 9:00"

    def test_direction_is_a_set(self):
        a = make_rule(lane_direction=frozenset({"GoStraight", "TurnLeft"}))
        b = make_rule(lane_direction=frozenset({"TurnLeft", "GoStraight"}))
        assert normalize_rule(a) == normalize_rule(b)

    @settings(max_examples=1000, deadline=None)
    @given(rules())
    def test_idempotent(self, rule):
        once = normalize_rule(rule)
        assert normalize_rule(once) == once


class TestRulesEqual:
    def test_identical(self):
        r = make_rule()
        assert rules_equal(r, r)

    def test_single_property_mismatch(self):
        a = make_rule(high_speed_limit="120")
        b = make_rule(high_speed_limit="100")
        assert not rules_equal(a, b)

    def test_label_file_example_rules_differ(self):
        # the two rules of the example label file share everything except
        # their index and directions
        a = make_rule(rule_index="1", lane_direction=frozenset({"GoStraight", "TurnLeft"}))
        b = make_rule(rule_index="2", lane_direction=frozenset({"GoStraight"}))
        assert not rules_equal(a, b)

    def test_case_sensitive(self):
        a = make_rule(effective_time="None")
        b = make_rule(effective_time="none")
        assert not rules_equal(a, b)

    @settings(deadline=None)
    @given(rules(), rules(), rules())
    def test_equivalence_relation(self, a, b, c):
        assert rules_equal(a, a)
        assert rules_equal(a, b) == rules_equal(b, a)
        if rules_equal(a, b) and rules_equal(b, c):
            assert rules_equal(a, c)


class TestRuleInvariants:
    def test_empty_direction_rejected(self):
        with pytest.raises(ValueError):
            make_rule(lane_direction=frozenset())

    def test_none_direction_must_be_singleton(self):
        with pytest.raises(ValueError):
            make_rule(lane_direction=frozenset({"None", "GoStraight"}))

    @pytest.mark.parametrize(
        "field, value",
        [
            ("lane_type", "CarpoolLane"),
            ("lane_direction", frozenset({"UTurn"})),
            ("allowed_transport", "Bicycle"),
            ("effective_date", "Weekends"),
        ],
    )
    def test_unknown_vocabulary_rejected(self, field, value):
        with pytest.raises(ValueError):
            make_rule(**{field: value})


class TestGeometryTypes:
    def test_point_requires_finite(self):
        with pytest.raises(ValueError):
            Point3(math.nan, 0.0, 0.0)

    def test_vector_needs_two_points(self):
        with pytest.raises(ValueError):
            LaneVector(id=0, vec_type=VecType.CENTERLINE, points=(Point3(0, 0, 0),))

    def test_intrinsics_require_positive_focals(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=-1.0, fy=1.0, cx=0.0, cy=0.0)

    def test_pose_accepts_rounded_unit_quaternion(self):
        pose = CameraPose("1", Point3(0, 0, 0), (0.0, 0.0, 0.0, 1.0 + 9e-4))
        assert pose.rvec_enu[3] == 1.0 + 9e-4  # stored exactly as given
        norm = math.sqrt(sum(c * c for c in pose.unit_quaternion()))
        assert abs(norm - 1.0) < 1e-12

    def test_pose_rejects_far_from_unit(self):
        with pytest.raises(ValueError):
            CameraPose("1", Point3(0, 0, 0), (0.0, 0.0, 0.0, 1.01))


class TestGraphAndPrediction:
    def test_graph_rejects_unknown_endpoints(self):
        with pytest.raises(ValueError):
            CorrespondenceGraph(rule_keys={"0"}, centerline_ids={1}, edges={("0", 2)})
        with pytest.raises(ValueError):
            CorrespondenceGraph(rule_keys={"0"}, centerline_ids={1}, edges={("9", 1)})

    def test_prediction_rejects_duplicate_edges(self):
        rule = PredictedRule(make_rule(), 1.0)
        with pytest.raises(ValueError):
            PredictionSet(
                rules=(rule,),
                edges=(PredictedEdge(0, 1, 0.5), PredictedEdge(0, 1, 0.9)),
            )

    def test_prediction_rejects_dangling_position(self):
        rule = PredictedRule(make_rule(), 1.0)
        with pytest.raises(ValueError):
            PredictionSet(rules=(rule,), edges=(PredictedEdge(1, 1, 0.5),))

    def test_confidence_bounds(self):
        with pytest.raises(ValueError):
            PredictedRule(make_rule(), 1.5)
        with pytest.raises(ValueError):
            PredictedEdge(0, 0, -0.1)
