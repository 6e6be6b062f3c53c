from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoder import DEFAULT_MODEL, BridgeConfig, BridgeError, ModelUnavailable, encode_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-bridge",
        description="Encode a corpus JSONL with a sentence-embedding model "
        "and emit the vector JSONL format.",
    )
    parser.add_argument("--model", default=DEFAULT_MODEL, help="model id or local path")
    parser.add_argument("--in", dest="input_path", required=True, help="corpus JSONL input")
    parser.add_argument("--out", dest="output_path", required=True, help="vector JSONL output")
    parser.add_argument("--batch", type=int, default=64, help="encoding batch size")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(
            model=args.model,
            input_path=Path(args.input_path),
            output_path=Path(args.output_path),
            batch_size=args.batch,
        )
        count = encode_file(config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ModelUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"encoded {count} texts -> {args.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
