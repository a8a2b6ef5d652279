"""Writer for the FEAT1 feature file format.

Layout:
    bytes 0-5    ASCII magic ``FEAT1\\n``
    bytes 6-9    unsigned 32-bit little-endian header length H
    bytes 10..   H bytes of UTF-8 JSON with keys
                 utt_id, num_frames, dim, frame_rate_hz, layer, source
    then         num_frames * dim IEEE-754 float32, little-endian, frame-major

This is an independent implementation of the format the downstream
segmentation toolkit reads; keeping it separate means the byte contract is
exercised from two codebases instead of one.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import BridgeError

FEAT1_MAGIC = b"FEAT1\n"


def feat1_bytes(
    utt_id: str,
    frames: np.ndarray,
    frame_rate_hz: float,
    layer: int = 0,
    source: str = "",
) -> bytes:
    frames = np.ascontiguousarray(frames, dtype=np.float32)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise BridgeError(
            f"{utt_id}: frames must be T x D with T,D >= 1, got {frames.shape}"
        )
    if not np.isfinite(frames).all():
        raise BridgeError(f"{utt_id}: frames contain NaN or Inf")
    if not frame_rate_hz > 0:
        raise BridgeError(f"{utt_id}: frame_rate_hz must be > 0")
    header = json.dumps(
        {
            "utt_id": utt_id,
            "num_frames": int(frames.shape[0]),
            "dim": int(frames.shape[1]),
            "frame_rate_hz": float(frame_rate_hz),
            "layer": int(layer),
            "source": source,
        },
        sort_keys=True,
    ).encode("utf-8")
    payload = frames.astype("<f4", copy=False).tobytes()
    return FEAT1_MAGIC + struct.pack("<I", len(header)) + header + payload


def write_feat1(
    path: str | Path,
    utt_id: str,
    frames: np.ndarray,
    frame_rate_hz: float,
    layer: int = 0,
    source: str = "",
) -> None:
    """Atomic write: the file appears complete or not at all."""
    path = Path(path)
    blob = feat1_bytes(utt_id, frames, frame_rate_hz, layer, source)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
