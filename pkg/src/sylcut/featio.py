"""Readers and writers for feature files, alignments, segmentations and manifests.

FEAT1 feature file layout:
    bytes 0-5    ASCII magic ``FEAT1\\n``
    bytes 6-9    unsigned 32-bit little-endian header length H
    bytes 10..   H bytes of UTF-8 JSON with keys
                 utt_id, num_frames, dim, frame_rate_hz, layer, source
    then         num_frames * dim IEEE-754 float32, little-endian, frame-major

Alignment / segmentation TSV columns: utt_id, tier, start_s, end_s, label
(label empty for unclustered hypothesis segments; extra columns are
tolerated). Lines starting with ``#`` are comments. Times are seconds,
written with 6 decimal places.

Manifest: ``utt_id<TAB>path`` per line; relative paths resolve against the
manifest's directory.

Frame convention used everywhere: frame i covers [i/fr, (i+1)/fr) seconds,
so a boundary at frame index b sits at b/fr seconds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    FormatError,
    ManifestError,
    TruncationError,
    ValidationError,
)

FEAT1_MAGIC = b"FEAT1\n"

# Slack for float comparisons on second-valued boundaries (TSV round-trips
# through 6 decimal places, so anything below 1e-7 s is noise).
TIME_EPS = 1e-9


@dataclass(frozen=True)
class FeatureSequence:
    """A T x D matrix of frame embeddings plus frame-rate metadata."""

    utt_id: str
    frames: np.ndarray
    frame_rate_hz: float
    layer: int = 0
    source: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.frames, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(
                f"{self.utt_id}: frames must be a T x D matrix with T,D >= 1, "
                f"got shape {np.shape(self.frames)}"
            )
        if not np.isfinite(arr).all():
            raise DataError(f"{self.utt_id}: frames contain NaN or Inf")
        if not self.frame_rate_hz > 0:
            raise ValidationError(f"{self.utt_id}: frame_rate_hz must be > 0")
        if self.layer < 0:
            raise ValidationError(f"{self.utt_id}: layer must be >= 0")
        object.__setattr__(self, "frames", arr)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.frame_rate_hz


@dataclass(frozen=True)
class Alignment:
    """Reference time spans with labels for one utterance and one tier."""

    utt_id: str
    tier: str
    entries: tuple[tuple[float, float, str], ...]

    def __post_init__(self):
        entries = tuple((float(s), float(e), str(lab)) for s, e, lab in self.entries)
        for i, (s, e, _) in enumerate(entries):
            if not s < e:
                raise ValidationError(
                    f"{self.utt_id}: entry {i} has start {s} >= end {e}"
                )
            if i and s < entries[i - 1][0]:
                raise ValidationError(f"{self.utt_id}: entries not sorted by start")
            if i and s < entries[i - 1][1] - TIME_EPS:
                raise ValidationError(
                    f"{self.utt_id}: entries {i - 1} and {i} overlap "
                    f"({entries[i - 1][:2]} vs {entries[i][:2]})"
                )
        object.__setattr__(self, "entries", entries)

    def spans(self) -> list[tuple[float, float]]:
        return [(s, e) for s, e, _ in self.entries]

    def labels(self) -> list[str]:
        return [lab for _, _, lab in self.entries]

    def boundary_times(self) -> list[float]:
        """Sorted, deduplicated union of entry starts and ends."""
        return sorted({t for s, e, _ in self.entries for t in (s, e)})


@dataclass(frozen=True)
class Segmentation:
    """Contiguous segments tiling [0, duration] for one utterance.

    ``labels`` optionally carries one label per segment (cluster ids for
    hypothesis files); ``fine_labels`` carries the finer cluster id when a
    two-step clustering produced both.
    """

    utt_id: str
    boundaries_s: tuple[float, ...]
    labels: tuple[str, ...] | None = None
    fine_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        bounds = tuple(float(b) for b in self.boundaries_s)
        if len(bounds) < 2:
            raise ValidationError(f"{self.utt_id}: need at least 2 boundaries")
        if abs(bounds[0]) > TIME_EPS:
            raise ValidationError(f"{self.utt_id}: first boundary must be 0.0")
        if any(b >= a for a, b in zip(bounds[1:], bounds[:-1])):
            raise ValidationError(f"{self.utt_id}: boundaries not strictly increasing")
        object.__setattr__(self, "boundaries_s", bounds)
        for name in ("labels", "fine_labels"):
            val = getattr(self, name)
            if val is not None:
                val = tuple(str(v) for v in val)
                if len(val) != len(bounds) - 1:
                    raise ValidationError(
                        f"{self.utt_id}: {len(val)} {name} for {len(bounds) - 1} segments"
                    )
                object.__setattr__(self, name, val)

    @property
    def num_segments(self) -> int:
        return len(self.boundaries_s) - 1

    @property
    def duration_s(self) -> float:
        return self.boundaries_s[-1]

    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.boundaries_s[:-1], self.boundaries_s[1:]))

    def interior_boundaries(self) -> list[float]:
        """Boundaries without the free utterance edges, for scoring."""
        return list(self.boundaries_s[1:-1])


def frame_to_seconds(frame: float, frame_rate_hz: float) -> float:
    return frame / frame_rate_hz


def segment_frame_range(
    start_s: float, end_s: float, frame_rate_hz: float, num_frames: int
) -> tuple[int, int]:
    """Half-open frame range [a, b) of frames whose span intersects [start_s, end_s).

    A small tolerance absorbs the rounding introduced by 6-decimal TSV times;
    the half-microsecond write error scales by frame_rate_hz in frame units.
    Returns an empty range (a == b) when the segment is shorter than any
    frame overlap; callers decide how to handle that.
    """
    eps = min(1e-6 * frame_rate_hz, 0.45)
    a = int(np.floor(start_s * frame_rate_hz + eps))
    b = int(np.ceil(end_s * frame_rate_hz - eps))
    a = max(a, 0)
    b = min(b, num_frames)
    return a, max(b, a)


def _header_bytes(seq: FeatureSequence) -> bytes:
    header = {
        "utt_id": seq.utt_id,
        "num_frames": seq.num_frames,
        "dim": seq.dim,
        "frame_rate_hz": seq.frame_rate_hz,
        "layer": seq.layer,
        "source": seq.source,
    }
    return json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_feature_file(seq: FeatureSequence, path: str | Path) -> None:
    """Write ``seq`` as a FEAT1 file. Lossless round-trip with read_feature_file."""
    header = _header_bytes(seq)
    with open(path, "wb") as f:
        f.write(FEAT1_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(seq.frames.astype("<f4", copy=False).tobytes(order="C"))


def read_feature_file(path: str | Path) -> FeatureSequence:
    """Read a FEAT1 file; values come back bit-identical to what was stored."""
    with open(path, "rb") as f:
        magic = f.read(len(FEAT1_MAGIC))
        if magic != FEAT1_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {FEAT1_MAGIC!r}")
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise TruncationError(f"{path}: missing header length")
        (hlen,) = struct.unpack("<I", raw_len)
        raw_header = f.read(hlen)
        if len(raw_header) != hlen:
            raise TruncationError(f"{path}: header truncated")
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unparseable header: {exc}") from exc
        try:
            num_frames = int(header["num_frames"])
            dim = int(header["dim"])
            meta = {
                "utt_id": str(header["utt_id"]),
                "frame_rate_hz": float(header["frame_rate_hz"]),
                "layer": int(header["layer"]),
                "source": str(header["source"]),
            }
        except KeyError as exc:
            raise FormatError(f"{path}: header missing key {exc}") from exc
        payload = f.read()
    expected = num_frames * dim * 4
    if len(payload) != expected:
        raise TruncationError(
            f"{path}: payload is {len(payload)} bytes, header declares "
            f"{num_frames}x{dim} floats = {expected} bytes"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(num_frames, dim)
    if not np.isfinite(frames).all():
        raise DataError(f"{path}: payload contains NaN or Inf")
    return FeatureSequence(frames=frames, **meta)


def _parse_time(token: str, path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: non-numeric time {token!r}") from exc


def _tsv_rows(path: str | Path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 4:
                raise FormatError(f"{path}:{lineno}: expected >= 4 columns, got {len(cols)}")
            yield lineno, cols


def read_alignment_tsv(path: str | Path, tier: str) -> dict[str, Alignment]:
    """Read and validate reference alignments for one tier, grouped per utterance."""
    grouped: dict[str, list[tuple[float, float, str, int]]] = {}
    for lineno, cols in _tsv_rows(path):
        utt_id, row_tier = cols[0], cols[1]
        if row_tier != tier:
            continue
        start = _parse_time(cols[2], path, lineno)
        end = _parse_time(cols[3], path, lineno)
        label = cols[4] if len(cols) > 4 else ""
        grouped.setdefault(utt_id, []).append((start, end, label, lineno))
    out: dict[str, Alignment] = {}
    for utt_id, rows in grouped.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        for prev, cur in zip(rows, rows[1:]):
            if cur[0] < prev[1] - TIME_EPS:
                raise ValidationError(
                    f"{path}: utterance {utt_id!r} has overlapping {tier} entries "
                    f"at lines {prev[3]} and {cur[3]}"
                )
        out[utt_id] = Alignment(utt_id, tier, tuple((s, e, lab) for s, e, lab, _ in rows))
    return out


def read_segmentation_tsv(path: str | Path) -> dict[str, Segmentation]:
    """Read hypothesis segmentations; segments must tile [0, duration].

    The tier column is ignored; a 6th ``fine=<id>`` column, when present,
    populates ``fine_labels``.
    """
    grouped: dict[str, list[tuple[float, float, str, str | None, int]]] = {}
    for lineno, cols in _tsv_rows(path):
        utt_id = cols[0]
        start = _parse_time(cols[2], path, lineno)
        end = _parse_time(cols[3], path, lineno)
        label = cols[4] if len(cols) > 4 else ""
        fine = None
        if len(cols) > 5 and cols[5].startswith("fine="):
            fine = cols[5][len("fine="):]
        grouped.setdefault(utt_id, []).append((start, end, label, fine, lineno))
    out: dict[str, Segmentation] = {}
    for utt_id, rows in grouped.items():
        rows.sort(key=lambda r: r[0])
        for prev, cur in zip(rows, rows[1:]):
            if abs(cur[0] - prev[1]) > TIME_EPS:
                raise ValidationError(
                    f"{path}: utterance {utt_id!r} segments do not tile: gap or overlap "
                    f"between lines {prev[4]} and {cur[4]}"
                )
        bounds = (0.0,) + tuple(r[1] for r in rows)
        labels = tuple(r[2] for r in rows)
        fines = tuple(r[3] for r in rows)
        out[utt_id] = Segmentation(
            utt_id,
            bounds,
            labels=labels if any(labels) else None,
            fine_labels=fines if all(f is not None for f in fines) else None,
        )
    return out


def _format_row(utt_id, tier, start, end, label="", extra=None) -> str:
    cols = [utt_id, tier, f"{start:.6f}", f"{end:.6f}", label]
    if extra is not None:
        cols.append(extra)
    return "\t".join(cols) + "\n"


def write_segmentation_tsv(
    segs, path: str | Path, tier: str = "segment"
) -> None:
    """Write segmentations (iterable or dict of Segmentation) as TSV."""
    if isinstance(segs, dict):
        segs = segs.values()
    with open(path, "w", encoding="utf-8") as f:
        for seg in segs:
            for i, (start, end) in enumerate(seg.segments()):
                label = seg.labels[i] if seg.labels is not None else ""
                extra = f"fine={seg.fine_labels[i]}" if seg.fine_labels is not None else None
                f.write(_format_row(seg.utt_id, tier, start, end, label, extra))


def write_alignment_tsv(alignments, path: str | Path) -> None:
    """Write alignments (iterable or dict of Alignment) as TSV."""
    if isinstance(alignments, dict):
        alignments = alignments.values()
    with open(path, "w", encoding="utf-8") as f:
        for ali in alignments:
            for start, end, label in ali.entries:
                f.write(_format_row(ali.utt_id, ali.tier, start, end, label))


def read_manifest(path: str | Path) -> list[tuple[str, Path]]:
    """Read an utt_id<TAB>path manifest, order preserved, duplicates rejected."""
    base = Path(path).parent
    out: list[tuple[str, Path]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ManifestError(f"{path}:{lineno}: expected utt_id<TAB>path")
            utt_id, rel = parts
            if utt_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            seen.add(utt_id)
            p = Path(rel)
            out.append((utt_id, p if p.is_absolute() else base / p))
    return out


def write_manifest(entries, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, p in entries:
            f.write(f"{utt_id}\t{p}\n")
