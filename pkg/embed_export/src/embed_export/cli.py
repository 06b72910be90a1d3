"""Command line for exporting transformer embeddings to TGEB files."""

from __future__ import annotations

import argparse
import sys

from .export import ExportConfig, ExportError, export
from .formats import FormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Run a frozen transformer over essay JSONL and write TGEB embeddings.")
    parser.add_argument("--essays", required=True, help="input essays JSONL")
    parser.add_argument("--out", required=True, help="output TGEB path")
    parser.add_argument("--model", required=True,
                        help="model name or local path (needs a fast tokenizer)")
    parser.add_argument("--max-length", type=int, default=512, dest="max_length",
                        help="truncation window in subwords (default 512; 1024 for long-input models)")
    parser.add_argument("--device", default="cpu", help="inference device (default cpu)")
    parser.add_argument("--report", help="sidecar report path (default <out>.report.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExportConfig(model=args.model, max_length=args.max_length, device=args.device)
    try:
        report = export(args.essays, args.out, config, report_path=args.report)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {report.num_essays} essays (dim {report.dim}) to {args.out}")
    if report.truncated_essays:
        print(f"truncated: {', '.join(report.truncated_essays)}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
