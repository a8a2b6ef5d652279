"""Synthetic corpora with planted segment boundaries and unit labels.

Each utterance concatenates segments; a segment repeats one of n_types
unit-norm centroid vectors for a random number of frames and adds
isotropic Gaussian noise. Consecutive segments always use different
types, so every planted boundary is recoverable in principle. Everything
is a pure function of the seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featio import (
    Alignment,
    FeatureSequence,
    write_alignment_tsv,
    write_feature_file,
    write_manifest,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthSpec:
    n_utts: int
    dim: int
    frame_rate_hz: float
    n_types: int
    seg_len_frames: tuple[int, int]
    segs_per_utt: tuple[int, int]
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.n_utts < 1 or self.dim < 1 or self.n_types < 1:
            raise ValueError("n_utts, dim and n_types must be >= 1")
        if not self.frame_rate_hz > 0:
            raise ValueError("frame_rate_hz must be > 0")
        for name in ("seg_len_frames", "segs_per_utt"):
            lo, hi = getattr(self, name)
            if not (1 <= lo <= hi):
                raise ValueError(f"{name} must satisfy 1 <= min <= max, got {lo, hi}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class SynthResult:
    features: dict[str, FeatureSequence]
    refs: dict[str, Alignment]
    centroids: np.ndarray  # n_types x dim, unit rows

    def max_cross_type_cosine(self) -> float:
        """Largest cosine between distinct centroids; a merge threshold above
        this keeps noise-free segments of different types unmerged."""
        if len(self.centroids) < 2:
            return -1.0
        sims = self.centroids @ self.centroids.T
        np.fill_diagonal(sims, -np.inf)
        return float(sims.max())


def _unit_centroids(rng: np.random.Generator, n_types: int, dim: int) -> np.ndarray:
    c = rng.standard_normal((n_types, dim))
    norms = np.linalg.norm(c, axis=1, keepdims=True)
    while (norms == 0).any():  # probability ~0, but keep the invariant hard
        c = rng.standard_normal((n_types, dim))
        norms = np.linalg.norm(c, axis=1, keepdims=True)
    return c / norms


def generate(spec: SynthSpec) -> SynthResult:
    """Generate the corpus described by ``spec``, deterministically."""
    if spec.dim < spec.n_types:
        log.warning(
            "dim=%d < n_types=%d: centroids cannot be near-orthogonal",
            spec.dim, spec.n_types,
        )
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.n_utts + 1)
    centroids = _unit_centroids(np.random.default_rng(children[0]), spec.n_types, spec.dim)
    features: dict[str, FeatureSequence] = {}
    refs: dict[str, Alignment] = {}
    for i in range(spec.n_utts):
        rng = np.random.default_rng(children[i + 1])
        utt_id = f"synth_{i:04d}"
        n_segs = int(rng.integers(spec.segs_per_utt[0], spec.segs_per_utt[1] + 1))
        types: list[int] = []
        for _ in range(n_segs):
            if types and spec.n_types > 1:
                t = int(rng.integers(spec.n_types - 1))
                if t >= types[-1]:
                    t += 1
            else:
                t = int(rng.integers(spec.n_types))
            types.append(t)
        lengths = rng.integers(
            spec.seg_len_frames[0], spec.seg_len_frames[1] + 1, size=n_segs
        )
        blocks = []
        entries = []
        frame = 0
        for t, length in zip(types, lengths):
            block = np.repeat(centroids[t][None, :], length, axis=0)
            if spec.noise_sigma > 0:
                block = block + spec.noise_sigma * rng.standard_normal(block.shape)
            blocks.append(block)
            entries.append(
                (frame / spec.frame_rate_hz, (frame + int(length)) / spec.frame_rate_hz,
                 f"t{t}")
            )
            frame += int(length)
        features[utt_id] = FeatureSequence(
            utt_id=utt_id,
            frames=np.concatenate(blocks, axis=0),
            frame_rate_hz=spec.frame_rate_hz,
            source="synth",
        )
        refs[utt_id] = Alignment(utt_id, "unit", tuple(entries))
    return SynthResult(features, refs, centroids)


def write_corpus(result: SynthResult, out_dir: str | Path) -> Path:
    """Write FEAT1 files, refs.tsv and manifest.tsv; returns the manifest path.

    Manifest paths are relative so the corpus directory is relocatable.
    """
    out = Path(out_dir)
    feat_dir = out / "feats"
    feat_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for utt_id in sorted(result.features):
        rel = Path("feats") / f"{utt_id}.feat1"
        write_feature_file(result.features[utt_id], out / rel)
        entries.append((utt_id, rel))
    write_alignment_tsv(
        [result.refs[u] for u in sorted(result.refs)], out / "refs.tsv"
    )
    manifest = out / "manifest.tsv"
    write_manifest(entries, manifest)
    return manifest
