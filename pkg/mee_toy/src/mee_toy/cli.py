"""Command line: train the toy encoder and emit benchmark predictions."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from mee_toy.config import EncoderConfig
from mee_toy.train import train_toy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mee-toy")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a clip corpus and write test-split predictions")
    p.add_argument("dataset_dir")
    p.add_argument("-o", "--out", required=True, help="prediction output directory")
    p.add_argument("--config", default=None, help="encoder config JSON")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)

    w = sub.add_parser("write-config", help="write the default encoder config")
    w.add_argument("-o", "--out", required=True)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "write-config":
        EncoderConfig().to_json(Path(args.out))
        print(f"config written to {args.out}")
        return 0

    config = EncoderConfig.from_json(Path(args.config)) if args.config else EncoderConfig()
    try:
        result = train_toy(
            Path(args.dataset_dir),
            epochs=args.epochs,
            seed=args.seed,
            config=config,
            out_dir=Path(args.out),
            lr=args.lr,
            batch_size=args.batch_size,
        )
    except (ValueError, OSError) as exc:
        print(f"mee-toy: {exc}", file=sys.stderr)
        return 1
    loss_text = "n/a" if result.final_loss is None else f"{result.final_loss:.6f}"
    print(
        f"epochs={args.epochs} final_loss={loss_text} "
        f"test_auc={result.test_auc:.4f} test_clips={len(result.test_clip_ids)}"
    )
    print(f"predictions written to {result.prediction_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
