"""K-way normalized-cut segmentation of a similarity matrix.

The objective over contiguous intervals A_1..A_K partitioning the frames is

    sum_i cut(A_i, V - A_i) / vol(A_i)

minimized exactly by dynamic programming in O(K T^2) with O(1) interval
costs from prefix sums. ``ncut_exhaustive`` enumerates all contiguous
partitions for small T and serves as the DP's oracle. ``merge_segments``
implements the oversegment-then-merge variant: run the DP with an
intentionally large K, then greedily fuse adjacent segments while their
mean-feature cosine stays at or above a threshold.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .featio import FeatureSequence, Segmentation
from .ssm import SimMatrix, compute_ssm


@dataclass(frozen=True)
class MergeParams:
    """Segmenter hyperparameters.

    sec_per_syllable converts utterance duration into the oversegmentation
    count K. merge_thres is the cosine floor for fusing adjacent segments;
    values above 1 disable merging entirely (cosine never exceeds 1).
    Segments shorter than min_segment_frames are absorbed into their more
    similar neighbour after merging (no-op at the default of 1).
    """

    sec_per_syllable: float = 0.15
    merge_thres: float = 0.3
    min_segment_frames: int = 1

    def __post_init__(self):
        if not self.sec_per_syllable > 0:
            raise ValueError("sec_per_syllable must be > 0")
        if self.min_segment_frames < 1:
            raise ValueError("min_segment_frames must be >= 1")


@dataclass(frozen=True)
class NcutSolution:
    """Optimal boundaries b_0=0 < ... < b_k=T and the achieved objective."""

    boundaries: tuple[int, ...]
    score: float
    k: int


def choose_k(duration_s: float, p: MergeParams, t_frames: int) -> int:
    """Round-half-up duration / sec_per_syllable, clamped to [1, t_frames]."""
    if not duration_s > 0:
        raise ValueError("duration_s must be > 0")
    k = int(np.floor(duration_s / p.sec_per_syllable + 0.5))
    return max(1, min(k, t_frames))


def _interval_costs(sm: SimMatrix) -> np.ndarray:
    """cost[s, t] = cut([s,t)) / vol([s,t)) for 0 <= s < t <= T, +inf elsewhere.

    Zero-volume intervals (possible after min-subtraction zeroes whole rows)
    cost 0: non-negative weights force cut <= vol, so vol = 0 implies cut = 0.
    """
    p = sm.prefix
    diag = p.diagonal()
    vol = p[:, -1][None, :] - p[:, -1][:, None]
    block = diag[None, :] + diag[:, None] - p - p.T
    cut = vol - block
    np.maximum(cut, 0.0, out=cut)
    cost = np.zeros_like(cut)
    np.divide(cut, vol, out=cost, where=vol > 0)
    n = cost.shape[0]
    idx = np.arange(n)
    cost[idx[:, None] >= idx[None, :]] = np.inf
    return cost


def ncut_dp(sm: SimMatrix, k: int) -> NcutSolution:
    """Minimize the K-way normalized cut over contiguous partitions.

    dp[j][t] = min over s < t of dp[j-1][s] + cost(s, t); ties break toward
    the earlier split point s, which makes the recovered boundaries the
    lexicographically smallest optimum read from the last boundary backwards.
    """
    t_frames = sm.num_frames
    if not 1 <= k <= t_frames:
        raise ValueError(f"k must be in [1, {t_frames}], got {k}")
    # cost_t[t, s]: transposed so each layer reduces along contiguous rows
    cost_t = np.ascontiguousarray(_interval_costs(sm).T)
    n = t_frames + 1
    dp = np.full(n, np.inf)
    dp[0] = 0.0
    back = np.zeros((k + 1, n), dtype=np.int32)
    cols = np.arange(n)
    scores = np.empty_like(cost_t)
    for j in range(1, k + 1):
        np.add(dp[None, :], cost_t, out=scores)
        arg = np.argmin(scores, axis=1)
        back[j] = arg
        dp = scores[cols, arg]
    bounds = [t_frames]
    for j in range(k, 0, -1):
        bounds.append(int(back[j, bounds[-1]]))
    bounds.reverse()
    return NcutSolution(boundaries=tuple(bounds), score=float(dp[t_frames]), k=k)


def ncut_exhaustive(sm: SimMatrix, k: int, max_frames: int = 20) -> NcutSolution:
    """Globally minimal Ncut_k by enumerating every contiguous partition.

    Test oracle for ncut_dp: costs are evaluated with the same prefix-sum
    expressions and summed left to right, so scores and tie-breaks are
    bit-comparable with the DP. Refuses T > max_frames.
    """
    t_frames = sm.num_frames
    if t_frames > max_frames:
        raise ValueError(f"exhaustive enumeration refused for T={t_frames} > {max_frames}")
    if not 1 <= k <= t_frames:
        raise ValueError(f"k must be in [1, {t_frames}], got {k}")
    cost = _interval_costs(sm)
    best_score = np.inf
    best_bounds: tuple[int, ...] | None = None
    best_key: tuple[int, ...] | None = None
    for interior in itertools.combinations(range(1, t_frames), k - 1):
        bounds = (0, *interior, t_frames)
        score = 0.0
        for a, b in zip(bounds[:-1], bounds[1:]):
            score = score + cost[a, b]
        key = tuple(reversed(interior))
        if score < best_score or (score == best_score and key < best_key):
            best_score = score
            best_bounds = bounds
            best_key = key
    assert best_bounds is not None
    return NcutSolution(boundaries=best_bounds, score=float(best_score), k=k)


def _segment_means(frames: np.ndarray, bounds: list[int]) -> list[np.ndarray]:
    return [
        frames[a:b].mean(axis=0, dtype=np.float64)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return -1.0
    return float(u @ v) / (nu * nv)


def merge_segments(
    seq: FeatureSequence, sol: NcutSolution, p: MergeParams
) -> Segmentation:
    """Fuse adjacent oversegmented intervals whose mean features agree.

    Repeatedly merges the adjacent pair with the highest cosine similarity
    between mean feature vectors while that similarity is >= merge_thres,
    recomputing the merged mean from the frames each time. A zero-norm mean
    gets cosine -1 against anything, so it is only ever merged when the
    threshold itself is -1 or lower.
    """
    bounds = list(sol.boundaries)
    means = _segment_means(seq.frames, bounds)
    while len(means) > 1:
        sims = [_cosine(means[i], means[i + 1]) for i in range(len(means) - 1)]
        best = int(np.argmax(sims))
        if sims[best] < p.merge_thres:
            break
        del bounds[best + 1]
        means[best] = seq.frames[bounds[best]:bounds[best + 1]].mean(
            axis=0, dtype=np.float64
        )
        del means[best + 1]
    if p.min_segment_frames > 1:
        bounds, means = _absorb_short_segments(seq.frames, bounds, means, p)
    fr = seq.frame_rate_hz
    return Segmentation(seq.utt_id, tuple(b / fr for b in bounds))


def _absorb_short_segments(frames, bounds, means, p: MergeParams):
    """Merge segments shorter than min_segment_frames into the closer neighbour."""
    while len(bounds) > 2:
        lengths = [b - a for a, b in zip(bounds[:-1], bounds[1:])]
        short = [i for i, ln in enumerate(lengths) if ln < p.min_segment_frames]
        if not short:
            break
        i = short[0]
        left = _cosine(means[i - 1], means[i]) if i > 0 else -np.inf
        right = _cosine(means[i], means[i + 1]) if i < len(means) - 1 else -np.inf
        j = i - 1 if left >= right else i
        del bounds[j + 1]
        means[j] = frames[bounds[j]:bounds[j + 1]].mean(axis=0, dtype=np.float64)
        del means[j + 1]
    return bounds, means


def segment_utterance(
    seq: FeatureSequence, p: MergeParams, *, center: bool = False
) -> Segmentation:
    """Full segmenter: SSM -> duration-based K -> Ncut DP -> merge."""
    sm = compute_ssm(seq, center=center)
    k = choose_k(seq.duration_s, p, seq.num_frames)
    sol = ncut_dp(sm, k)
    return merge_segments(seq, sol, p)


def segments_from_attention(
    utt_id: str,
    attn: np.ndarray,
    frame_rate_hz: float,
    threshold_quantile: float,
) -> Segmentation:
    """Boundaries at midpoints between runs of high-attention frames.

    Frames whose weight exceeds the utterance-level quantile form maximal
    runs; each interior boundary sits halfway between one run's end and the
    next run's start, converted to seconds. With no active frames (all-zero
    or constant attention) the whole utterance is one segment.
    """
    attn = np.asarray(attn, dtype=np.float64).ravel()
    if attn.size == 0:
        raise ValueError("attention vector is empty")
    if not np.isfinite(attn).all() or (attn < 0).any():
        raise ValueError(f"{utt_id}: attention weights must be finite and >= 0")
    if not 0.0 <= threshold_quantile <= 1.0:
        raise ValueError("threshold_quantile must be in [0, 1]")
    t = attn.size
    duration = t / frame_rate_hz
    active = attn > np.quantile(attn, threshold_quantile)
    runs: list[tuple[int, int]] = []
    start = None
    for i, flag in enumerate(active):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, t))
    bounds = [0.0]
    for (_, end), (nxt, _) in zip(runs[:-1], runs[1:]):
        bounds.append((end + nxt) / 2.0 / frame_rate_hz)
    bounds.append(duration)
    return Segmentation(utt_id, tuple(bounds))
