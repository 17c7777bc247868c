"""Reading the benchmark's clip and label files into training records.

This package talks to the evaluation toolkit only through its public file
formats (data.json / label.json in, prediction.json out), so the small
amount of JSON handling lives here rather than importing the toolkit.
Coordinates are re-centered on the sign: lane geometry relative to the sign
is what the association task is about, and it keeps the periodic point
encoding away from large absolute ENU offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

CENTERLINE_TYPE = 3

LANE_TYPES = (
    "BusLane",
    "DirectionLane",
    "EmergencyLane",
    "MultiLane",
    "Non-MotorizedLane",
    "SpeedLimitedLane",
    "TidalFlowLane",
    "VariableDirectionLane",
    "VehicleLane",
)
LANE_DIRECTIONS = ("Forbidden", "GoStraight", "None", "TurnAround", "TurnLeft", "TurnRight")
TRANSPORTS = ("Bus", "Non-Motor", "None", "Truck", "Vehicle")
DATES = ("None", "WorkDays")


@dataclass(frozen=True)
class VectorRecord:
    vec_id: int
    type_id: int
    points: np.ndarray  # (n, 3), sign-centered


@dataclass(frozen=True)
class RuleRecord:
    attr_info: dict
    centerline_ids: Tuple[int, ...]
    lane_type_id: int
    direction_ids: Tuple[int, ...]
    transport_id: int
    date_id: int
    index_bucket: int  # clamped digit value of RuleIndex, last bucket = other


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    vectors: Tuple[VectorRecord, ...]
    sign_corners: np.ndarray  # (4, 3), sign-centered
    rules: Tuple[RuleRecord, ...]


def _rule_index_bucket(text: str, vocab: int) -> int:
    text = text.strip()
    if text.isdigit() and int(text) < vocab:
        return int(text)
    return vocab  # shared out-of-vocabulary bucket


def _rule_record(attr_info: dict, centerline_ids: Sequence[int], index_vocab: int) -> RuleRecord:
    return RuleRecord(
        attr_info=attr_info,
        centerline_ids=tuple(int(c) for c in centerline_ids),
        lane_type_id=LANE_TYPES.index(attr_info["LaneType"]),
        direction_ids=tuple(sorted(LANE_DIRECTIONS.index(d) for d in set(attr_info["LaneDirection"]))),
        transport_id=TRANSPORTS.index(attr_info["AllowedTransport"]),
        date_id=DATES.index(attr_info["EffectiveDate"]),
        index_bucket=_rule_index_bucket(attr_info["RuleIndex"], index_vocab),
    )


def load_clip(clip_dir: Path, index_vocab: int = 16) -> ClipRecord:
    clip_dir = Path(clip_dir)
    data = json.loads((clip_dir / "data.json").read_text(encoding="utf-8"))
    labels = json.loads((clip_dir / "label.json").read_text(encoding="utf-8"))

    quad = np.asarray(data["traffic_board_pose"], dtype=np.float64)
    center = quad.mean(axis=0)

    vectors = []
    for vid_text in sorted(data["vector"], key=int):
        entry = data["vector"][vid_text]
        points = np.asarray(entry["vec_geo"], dtype=np.float64) - center
        vectors.append(VectorRecord(vec_id=int(vid_text), type_id=int(entry["type"]), points=points))

    rules = [
        _rule_record(labels[key]["attr_info"], labels[key]["centerline"], index_vocab)
        for key in sorted(labels, key=lambda k: (len(k), k))
    ]
    return ClipRecord(
        clip_id=clip_dir.name,
        vectors=tuple(vectors),
        sign_corners=quad - center,
        rules=tuple(rules),
    )


def load_dataset(root: Path, index_vocab: int = 16) -> List[ClipRecord]:
    root = Path(root)
    clips = []
    for entry in sorted(root.iterdir()):
        if entry.is_dir() and (entry / "data.json").is_file() and (entry / "label.json").is_file():
            clips.append(load_clip(entry, index_vocab))
    if not clips:
        raise ValueError(f"no clips with labels under {root}")
    return clips


def split_dataset(clips: Sequence[ClipRecord], train_fraction: float = 0.9):
    """Deterministic train/test split over clips sorted by id."""
    clips = sorted(clips, key=lambda c: c.clip_id)
    cut = max(1, min(len(clips) - 1, round(len(clips) * train_fraction))) if len(clips) > 1 else 1
    return clips[:cut], clips[cut:]


def association_labels(clip: ClipRecord, rule: RuleRecord) -> np.ndarray:
    """Per-vector binary labels: 1 where the rule governs that vector."""
    wanted = set(rule.centerline_ids)
    return np.array([1.0 if v.vec_id in wanted else 0.0 for v in clip.vectors])


def write_prediction(clip: ClipRecord, edge_scores: Dict[int, Dict[int, float]], out_dir: Path) -> Path:
    """Emit one clip's prediction file in the toolkit's canonical schema.

    ``edge_scores[rule_position][vec_id]`` holds the association confidence
    of each centerline vector; rules are passed through verbatim.
    """
    doc = {
        "rules": [
            {
                "attr_info": rule.attr_info,
                "confidence": 1.0,
                "centerline": [
                    {"id": vec_id, "confidence": float(score)}
                    for vec_id, score in sorted(edge_scores.get(position, {}).items())
                ],
            }
            for position, rule in enumerate(clip.rules)
        ]
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "prediction.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
