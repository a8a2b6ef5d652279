"""Command line entry point.

    extract-bridge extract --audio-manifest wavs.tsv --checkpoint DIR \\
        --layer 8 --out feats_out [--attention] [--batch-size 4] [-v]

Exit codes: 0 success, 1 runtime failure (bad checkpoint, no decodable
audio, IO errors), 2 usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import BridgeError
from .extract import ExtractJob, extract


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract-bridge",
        description="Extract frame features from audio with a pretrained speech encoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    ext = sub.add_parser("extract", help="run feature extraction over an audio manifest")
    ext.add_argument("--audio-manifest", required=True, help="TSV of utt_id<TAB>wav path")
    ext.add_argument("--checkpoint", required=True, help="transformers checkpoint dir or hub id")
    ext.add_argument("--layer", required=True, type=int, help="hidden state index to export (0 = conv output)")
    ext.add_argument("--out", required=True, help="output directory")
    ext.add_argument("--attention", action="store_true", help="also write per-frame received attention")
    ext.add_argument("--batch-size", type=int, default=1, help="audio files loaded ahead of the model")
    ext.add_argument("-v", "--verbose", action="store_true", help="log per-utterance progress")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        job = ExtractJob(
            audio_manifest=args.audio_manifest,
            checkpoint=args.checkpoint,
            layer=args.layer,
            out_dir=args.out,
            emit_attention=args.attention,
            batch_size=args.batch_size,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = extract(job)
    except (BridgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
