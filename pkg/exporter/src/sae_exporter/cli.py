"""Command-line exporter: dataset JSON in, interchange embeddings out.

Exit codes: 0 ok, 1 runtime failure (including model load), 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .export import ModelLoadError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sae-export", description=__doc__)
    parser.add_argument("--data", required=True, help="dataset JSON (HotpotQA shape)")
    parser.add_argument("--model", required=True, help="encoder name or local path")
    parser.add_argument("--mode", choices=["selector", "reasoner"], required=True)
    parser.add_argument("--max-len", type=int, default=512)
    parser.add_argument("--out", required=True, help="interchange output file")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        manifest = export(args.data, args.model, args.mode, args.max_len, args.out)
    except ModelLoadError as e:
        print(str(e), file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - single CLI failure boundary
        logging.getLogger("sae-export").error("%s", e)
        if args.verbose:
            raise
        return 1
    print(
        f"exported {len(manifest.slots)} slots (dim {manifest.dim}) to {args.out}; "
        f"checksum {manifest.checksum[:16]}..."
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
