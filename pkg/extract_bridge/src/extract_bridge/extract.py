"""Feature extraction over an audio manifest.

Reads ``utt_id<TAB>path`` rows, runs each decodable utterance through the
encoder, and writes one FEAT1 file per utterance plus a manifest of what was
actually produced. Undecodable audio is skipped with a warning; a layer the
model does not have aborts the whole job instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .audio import load_wav
from .encoder import TransformersEncoder
from .errors import AudioError, LayerError, ManifestError
from .feat1 import write_feat1

log = logging.getLogger("extract_bridge")


@dataclass(frozen=True)
class ExtractJob:
    audio_manifest: Path
    checkpoint: str
    layer: int
    out_dir: Path
    emit_attention: bool = False
    batch_size: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "audio_manifest", Path(self.audio_manifest))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.layer < 0:
            raise ValueError(f"layer must be >= 0, got {self.layer}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def read_audio_manifest(path: str | Path) -> list[tuple[str, Path]]:
    """Parse utt_id<TAB>path rows; paths resolve relative to the manifest."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    base = path.parent
    entries: list[tuple[str, Path]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ManifestError(f"{path}:{lineno}: expected utt_id<TAB>path")
        utt_id, rel = parts
        if utt_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
        seen.add(utt_id)
        audio = Path(rel)
        if not audio.is_absolute():
            audio = base / audio
        entries.append((utt_id, audio))
    if not entries:
        raise ManifestError(f"{path}: no entries")
    return entries


def _chunks(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i : i + size]


def extract(job: ExtractJob, encoder: TransformersEncoder | None = None) -> Path:
    """Run the job and return the path of the written feature manifest.

    batch_size only bounds how much audio is loaded ahead of the model; each
    utterance is a separate forward pass, so outputs never depend on how
    utterances were grouped.
    """
    if encoder is None:
        encoder = TransformersEncoder(job.checkpoint)
    if job.layer > encoder.num_layers:
        raise LayerError(
            f"layer {job.layer} requested but checkpoint has hidden states "
            f"0..{encoder.num_layers}"
        )
    entries = read_audio_manifest(job.audio_manifest)

    feats_dir = job.out_dir / "feats"
    feats_dir.mkdir(parents=True, exist_ok=True)
    attn_dir = job.out_dir / "attn"
    if job.emit_attention:
        attn_dir.mkdir(parents=True, exist_ok=True)

    source = f"extract-bridge:{Path(job.checkpoint).name}:layer{job.layer}"
    written: list[str] = []
    for batch in _chunks(entries, job.batch_size):
        loaded = []
        for utt_id, audio_path in batch:
            try:
                loaded.append((utt_id, load_wav(audio_path, encoder.sample_rate)))
            except AudioError as exc:
                log.warning("skipping %s: %s", utt_id, exc)
        for utt_id, wav in loaded:
            feats, attn = encoder.encode(wav, job.layer, attention=job.emit_attention)
            write_feat1(
                feats_dir / f"{utt_id}.feat1",
                utt_id,
                feats,
                encoder.frame_rate_hz,
                layer=job.layer,
                source=source,
            )
            if job.emit_attention:
                write_feat1(
                    attn_dir / f"{utt_id}.feat1",
                    utt_id,
                    attn.reshape(1, -1),
                    encoder.frame_rate_hz,
                    layer=job.layer,
                    source=source + ":attention",
                )
            written.append(utt_id)

    if not written:
        raise ManifestError("no utterance could be decoded; nothing extracted")

    manifest = job.out_dir / "manifest.tsv"
    manifest.write_text(
        "".join(f"{u}\tfeats/{u}.feat1\n" for u in written), encoding="utf-8"
    )
    if job.emit_attention:
        (job.out_dir / "attn_manifest.tsv").write_text(
            "".join(f"{u}\tattn/{u}.feat1\n" for u in written), encoding="utf-8"
        )
    log.info("wrote %d utterances to %s", len(written), manifest)
    return manifest
