"""Benchmark toolkit for lane-level driving-rule extraction and
rule-lane correspondence reasoning on vectorized HD maps."""

from mapdr.core import (
    CameraIntrinsics,
    CameraPose,
    ClipData,
    CorrespondenceGraph,
    FrameRef,
    LabeledRule,
    LaneVector,
    MetricReport,
    OcrObservation,
    Point3,
    PredictedEdge,
    PredictedRule,
    PredictionSet,
    Rule,
    VecType,
    normalize_rule,
    rules_equal,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "ClipData",
    "CorrespondenceGraph",
    "FrameRef",
    "LabeledRule",
    "LaneVector",
    "MetricReport",
    "OcrObservation",
    "Point3",
    "PredictedEdge",
    "PredictedRule",
    "PredictionSet",
    "Rule",
    "VecType",
    "normalize_rule",
    "rules_equal",
    "__version__",
]
