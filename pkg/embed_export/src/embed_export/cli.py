"""Command line for the embedding export bridge."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Export pooled last-hidden-state sentence embeddings to JSONL.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="export embeddings for a sentence CSV")
    p.add_argument("--input", required=True, help="sentence CSV (id,sentence[,mos])")
    p.add_argument("--model", required=True, help="model identifier or local model path")
    p.add_argument("--pooling", required=True, choices=["cls", "eos"],
                   help="cls: first position (bidirectional encoders); "
                        "eos: last unpadded position (causal models)")
    p.add_argument("--out", required=True, help="output embedding JSONL")
    p.add_argument("--batch-size", type=int, default=8)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(input_csv=args.input, model_id=args.model, pooling=args.pooling,
                    output_path=args.out, batch_size=args.batch_size)
    try:
        written = export_embeddings(job)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {written} embeddings to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
