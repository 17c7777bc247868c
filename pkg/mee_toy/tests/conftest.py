import subprocess
from pathlib import Path

import numpy as np
import pytest

from mee_toy.data import RuleRecord, VectorRecord


def synth_corpus(out_dir: Path, clips: int, lanes: int = 4, rules: int = 4, seed: int = 1) -> Path:
    """Generate a corpus through the evaluation toolkit's CLI."""
    result = subprocess.run(
        [
            "mapdr", "synth", "-o", str(out_dir),
            "--clips", str(clips), "--lanes", str(lanes),
            "--rules", str(rules), "--seed", str(seed),
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    return out_dir


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    return synth_corpus(tmp_path_factory.mktemp("corpus") / "ds", clips=12)


def toy_vectors(n_vectors: int = 3, n_points: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [
        VectorRecord(
            vec_id=i,
            type_id=3 if i == 0 else i % 5,
            points=rng.normal(scale=10.0, size=(n_points, 3)),
        )
        for i in range(n_vectors)
    ]


def toy_rule(index_bucket: int = 1, lane_type_id: int = 1) -> RuleRecord:
    return RuleRecord(
        attr_info={},
        centerline_ids=(0,),
        lane_type_id=lane_type_id,
        direction_ids=(1,),
        transport_id=2,
        date_id=0,
        index_bucket=index_bucket,
    )


def toy_sign(seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(scale=3.0, size=(4, 3))
