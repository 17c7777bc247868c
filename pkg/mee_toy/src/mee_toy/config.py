"""Encoder hyperparameters, loadable from a single JSON config file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

MASK_SCHEDULES = ("intra_first", "inter_first", "intra_only", "inter_only")


@dataclass(frozen=True)
class EncoderConfig:
    width: int = 64
    heads: int = 4
    vector_depth: int = 2
    fusion_depth: int = 2
    max_vectors: int = 120
    type_count: int = 5
    max_points: int = 64
    head_hidden: int = 32
    point_frequencies: int = 8
    min_wavelength: float = 1.0
    max_wavelength: float = 200.0
    mask_schedule: str = "intra_first"
    rule_index_vocab: int = 16  # digit indices above this share one bucket

    def __post_init__(self) -> None:
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if min(self.vector_depth, self.fusion_depth) < 1:
            raise ValueError("encoder depths must be at least 1")
        if self.max_vectors < 1 or self.max_points < 2:
            raise ValueError("capacity limits too small")
        if self.mask_schedule not in MASK_SCHEDULES:
            raise ValueError(f"mask_schedule must be one of {MASK_SCHEDULES}")
        if not (0 < self.min_wavelength < self.max_wavelength):
            raise ValueError("wavelength range must be positive and increasing")

    def to_json(self, path: Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: Path) -> "EncoderConfig":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
