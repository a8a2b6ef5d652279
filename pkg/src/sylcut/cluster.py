"""Segment pooling and the two-step KMeans -> agglomerative categorizer.

Segments are embedded as the arithmetic mean of their frames. A large
KMeans inventory (Euclidean, Lloyd's iterations from a seeded kmeans++
init) is then reduced by agglomerating fine centroids under cosine
distance, with size-weighted centroid averaging, until k2 clusters remain.
Setting k2 = k1 degrades exactly to plain KMeans assignment.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .featio import (
    FeatureSequence,
    Segmentation,
    read_feature_file,
    segment_frame_range,
    write_feature_file,
)

log = logging.getLogger(__name__)

KMEANS_MAX_ITER = 100
KMEANS_REL_TOL = 1e-4
ASSIGN_CHUNK = 8192


@dataclass(frozen=True)
class SegmentEmbedding:
    utt_id: str
    span: tuple[float, float]
    vector: np.ndarray


@dataclass(frozen=True)
class ClusterModel:
    """Fine centroid inventory plus the fine->coarse merge map."""

    kmeans_centroids: np.ndarray
    merge_map: np.ndarray
    k1: int
    k2: int
    seed: int

    def __post_init__(self):
        if self.merge_map.shape != (self.k1,):
            raise ValidationError("merge_map must have one entry per fine cluster")
        if self.k2 < 1 or self.k2 > self.k1:
            raise ValidationError("need 1 <= k2 <= k1")
        if len(np.unique(self.merge_map)) != self.k2:
            raise ValidationError("merge_map must be a surjection onto k2 clusters")


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-segment cluster labels: (utt_id, span, fine_id, coarse_id)."""

    entries: tuple[tuple[str, tuple[float, float], int, int], ...]


def pool_segments(seq: FeatureSequence, seg: Segmentation) -> list[SegmentEmbedding]:
    """Mean-pool the frames overlapped by each segment.

    A segment too short to overlap any frame falls back to its single
    nearest frame with a warning.
    """
    out = []
    for start, end in seg.segments():
        a, b = segment_frame_range(start, end, seq.frame_rate_hz, seq.num_frames)
        if b <= a:
            nearest = (start + end) / 2.0 * seq.frame_rate_hz - 0.5
            i = int(np.clip(round(nearest), 0, seq.num_frames - 1))
            log.warning(
                "%s: segment [%.6f, %.6f) shorter than one frame; using frame %d",
                seq.utt_id, start, end, i,
            )
            a, b = i, i + 1
        vec = seq.frames[a:b].mean(axis=0, dtype=np.float64)
        out.append(SegmentEmbedding(seq.utt_id, (start, end), vec))
    return out


def _as_matrix(embs) -> np.ndarray:
    if isinstance(embs, np.ndarray):
        return np.asarray(embs, dtype=np.float64)
    return np.stack([e.vector for e in embs]).astype(np.float64)


def _nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid per point (ties -> lowest index) and
    the squared distance to it, chunked to bound memory."""
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist2 = np.empty(n)
    c_sq = (centroids ** 2).sum(axis=1)
    for lo in range(0, n, ASSIGN_CHUNK):
        hi = min(lo + ASSIGN_CHUNK, n)
        chunk = points[lo:hi]
        d2 = ((chunk ** 2).sum(axis=1)[:, None] - 2.0 * (chunk @ centroids.T)) + c_sq
        labels[lo:hi] = np.argmin(d2, axis=1)
        dist2[lo:hi] = d2[np.arange(hi - lo), labels[lo:hi]]
    return labels, np.maximum(dist2, 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            chosen[j] = rng.choice(n, p=d2 / total)
        else:
            # all remaining points coincide with a centroid; any pick works
            chosen[j] = int(np.argmin(d2))
        d2 = np.minimum(d2, ((points - points[chosen[j]]) ** 2).sum(axis=1))
    return points[chosen].copy()


def fit_kmeans(embs, k1: int, seed: int) -> np.ndarray:
    """Lloyd's iterations from a seeded kmeans++ init; returns k1 x D float32.

    Stops when the relative inertia improvement drops below 1e-4 or after
    100 iterations. Empty clusters are re-seeded to the point currently
    farthest from its assigned centroid. Deterministic for a fixed seed.
    """
    points = _as_matrix(embs)
    n = points.shape[0]
    if k1 > n:
        raise ValidationError(f"k1={k1} exceeds the {n} available segments; lower k1")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, k1, rng)
    prev_inertia = np.inf
    for _ in range(KMEANS_MAX_ITER):
        labels, dist2 = _nearest(points, centroids)
        counts = np.bincount(labels, minlength=k1)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(dist2))
            centroids[c] = points[far]
            labels[far] = c
            dist2[far] = 0.0
            counts = np.bincount(labels, minlength=k1)
        inertia = float(dist2.sum())
        assert inertia <= prev_inertia * (1 + 1e-12) + 1e-12, "inertia increased"
        if inertia == 0.0 or prev_inertia - inertia < KMEANS_REL_TOL * prev_inertia:
            break
        prev_inertia = inertia
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        centroids = sums / counts[:, None]
    return centroids.astype(np.float32)


def _cosine_distance_row(c: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(centroids, axis=1)
    nc = np.linalg.norm(c)
    sims = np.full(centroids.shape[0], -1.0)
    ok = (norms > 0) & (nc > 0)
    if nc > 0:
        sims[ok] = (centroids[ok] @ c) / (norms[ok] * nc)
    return 1.0 - sims


def agglomerate(centroids: np.ndarray, k2: int, sizes=None) -> np.ndarray:
    """Merge fine centroids under cosine distance until k2 clusters remain.

    Clusters are represented by the size-weighted mean of their member
    centroids; each step fuses the closest active pair, ties broken by the
    lowest index pair. Returns the k1 -> k2 merge map, coarse ids numbered
    by each coarse cluster's smallest fine member.
    """
    cents = np.asarray(centroids, dtype=np.float64).copy()
    k1 = cents.shape[0]
    if not 1 <= k2 <= k1:
        raise ValidationError(f"need 1 <= k2 <= k1, got k2={k2}, k1={k1}")
    weights = np.ones(k1) if sizes is None else np.asarray(sizes, dtype=np.float64)
    members: list[list[int] | None] = [[i] for i in range(k1)]
    dist = np.full((k1, k1), np.inf)
    for i in range(k1):
        row = _cosine_distance_row(cents[i], cents)
        dist[i] = row
        dist[:, i] = row
    idx = np.arange(k1)
    dist[idx[:, None] >= idx[None, :]] = np.inf  # keep i < j only
    active = k1
    while active > k2:
        i, j = np.unravel_index(np.argmin(dist), dist.shape)  # row-major: lowest pair
        total = weights[i] + weights[j]
        cents[i] = (weights[i] * cents[i] + weights[j] * cents[j]) / total
        weights[i] = total
        members[i].extend(members[j])
        members[j] = None
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        row = _cosine_distance_row(cents[i], cents)
        row[[m is None for m in members]] = np.inf
        row[i] = np.inf
        dist[i, i + 1:] = row[i + 1:]
        dist[:i, i] = row[:i]
        active -= 1
    merge_map = np.empty(k1, dtype=np.int64)
    groups = sorted((min(m), m) for m in members if m is not None)
    for coarse, (_, m) in enumerate(groups):
        merge_map[m] = coarse
    return merge_map


def fit(embs, k1: int, k2: int, seed: int) -> ClusterModel:
    """Two-step fit: KMeans inventory, then agglomeration of its centroids."""
    points = _as_matrix(embs)
    centroids = fit_kmeans(points, k1, seed)
    labels, _ = _nearest(points, centroids.astype(np.float64))
    sizes = np.bincount(labels, minlength=k1)
    merge_map = agglomerate(centroids, k2, sizes=sizes)
    return ClusterModel(centroids, merge_map, k1=k1, k2=k2, seed=seed)


def assign(embs: list[SegmentEmbedding], model: ClusterModel) -> ClusterAssignment:
    """Nearest fine centroid by Euclidean distance, coarse id via merge map."""
    points = _as_matrix(embs)
    if points.shape[1] != model.kmeans_centroids.shape[1]:
        raise ValidationError(
            f"embedding dim {points.shape[1]} does not match model dim "
            f"{model.kmeans_centroids.shape[1]}"
        )
    fine, _ = _nearest(points, model.kmeans_centroids.astype(np.float64))
    coarse = model.merge_map[fine]
    entries = tuple(
        (e.utt_id, e.span, int(f), int(c))
        for e, f, c in zip(embs, fine, coarse)
    )
    return ClusterAssignment(entries)


def save_model(model: ClusterModel, model_dir: str | Path) -> None:
    """Persist as JSON sidecar (k1, k2, seed, merge_map) + FEAT1 centroids."""
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "k1": model.k1,
        "k2": model.k2,
        "seed": model.seed,
        "merge_map": model.merge_map.tolist(),
    }
    with open(model_dir / "model.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    write_feature_file(
        FeatureSequence("centroids", model.kmeans_centroids, 1.0, source="cluster-model"),
        model_dir / "centroids.feat1",
    )


def load_model(model_dir: str | Path) -> ClusterModel:
    model_dir = Path(model_dir)
    with open(model_dir / "model.json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    cents = read_feature_file(model_dir / "centroids.feat1").frames
    return ClusterModel(
        cents,
        np.asarray(meta["merge_map"], dtype=np.int64),
        k1=int(meta["k1"]),
        k2=int(meta["k2"]),
        seed=int(meta["seed"]),
    )


def assignment_segmentations(
    assignment: ClusterAssignment,
) -> dict[str, Segmentation]:
    """Regroup assignment entries into labelled per-utterance segmentations."""
    per_utt: dict[str, list[tuple[tuple[float, float], int, int]]] = {}
    for utt_id, span, fine, coarse in assignment.entries:
        per_utt.setdefault(utt_id, []).append((span, fine, coarse))
    out = {}
    for utt_id, rows in per_utt.items():
        rows.sort(key=lambda r: r[0][0])
        bounds = (0.0,) + tuple(span[1] for span, _, _ in rows)
        out[utt_id] = Segmentation(
            utt_id,
            bounds,
            labels=tuple(str(c) for _, _, c in rows),
            fine_labels=tuple(str(f) for _, f, _ in rows),
        )
    return out
