from pathlib import Path

import pytest
from hypothesis import strategies as st

from mapdr.core import (
    ALLOWED_TRANSPORTS,
    EFFECTIVE_DATES,
    LANE_DIRECTIONS,
    LANE_TYPES,
    PredictedEdge,
    PredictionSet,
    Rule,
)

DATA_DIR = Path(__file__).parent / "data"
PAPER_CLIP_DIR = DATA_DIR / "paper_clip"


@pytest.fixture(scope="session")
def paper_clip_raw() -> bytes:
    return (PAPER_CLIP_DIR / "data.json").read_bytes()


@pytest.fixture(scope="session")
def paper_label_raw() -> bytes:
    return (PAPER_CLIP_DIR / "label.json").read_bytes()


_PLAIN_DIRECTIONS = sorted(LANE_DIRECTIONS - {"None"})

_free_text = st.text(
    alphabet="0123456789:- aZ日",
    max_size=12,
)

lane_directions = st.one_of(
    st.just(frozenset({"None"})),
    st.sets(st.sampled_from(_PLAIN_DIRECTIONS), min_size=1, max_size=3).map(frozenset),
)


@st.composite
def rules(draw) -> Rule:
    return Rule(
        lane_type=draw(st.sampled_from(sorted(LANE_TYPES))),
        rule_index=draw(_free_text),
        lane_direction=draw(lane_directions),
        allowed_transport=draw(st.sampled_from(sorted(ALLOWED_TRANSPORTS))),
        effective_date=draw(st.sampled_from(sorted(EFFECTIVE_DATES))),
        effective_time=draw(_free_text),
        low_speed_limit=draw(_free_text),
        high_speed_limit=draw(_free_text),
    )


def permute_prediction(pred: PredictionSet, order) -> PredictionSet:
    """Reorder prediction entries, carrying the edges along with their rules."""
    order = list(order)
    assert sorted(order) == list(range(len(pred.rules)))
    position_map = {old: new for new, old in enumerate(order)}
    return PredictionSet(
        rules=tuple(pred.rules[old] for old in order),
        edges=tuple(
            PredictedEdge(
                rule_position=position_map[e.rule_position],
                centerline_id=e.centerline_id,
                confidence=e.confidence,
            )
            for e in pred.edges
        ),
    )
