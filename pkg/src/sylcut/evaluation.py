"""Scoring of hypothesized boundaries and clusters against reference alignments.

Boundary scoring matches each reference boundary, left to right, to the
nearest unused hypothesis boundary within a tolerance window (ties go to
the earlier hypothesis). Utterance-edge boundaries are free and must be
stripped before matching. Segment-level matching solves a maximum
total-IoU one-to-one assignment (Hungarian, zero-weight dummy padding);
cluster purity and detected-unit counts are computed over IoU-matched
segments only, with the unmatched fraction reported alongside. Corpus
metrics are micro-averages over pooled counts.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .featio import Alignment, Segmentation, TIME_EPS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundaryScore:
    n_ref: int
    n_hyp: int
    n_hit: int
    precision: float
    recall: float
    f1: float
    r_value: float


@dataclass(frozen=True)
class MatchingResult:
    """One-to-one IoU matching between hypothesis and reference segments."""

    pairs: tuple[tuple[int, int, float], ...]  # (hyp index, ref index, iou)
    unmatched_hyp: tuple[int, ...]
    unmatched_ref: tuple[int, ...]


@dataclass(frozen=True)
class ClusterScore:
    purity: float
    detected: int
    per_cluster: tuple[tuple[str, str, int, float], ...]  # (id, majority, size, best f1)
    n_matched: int


@dataclass(frozen=True)
class TokenScore:
    n_ref: int
    n_hyp: int
    n_ref_hit: int
    n_hyp_hit: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    corpus: dict
    per_utt: list[dict] = field(default_factory=list)
    missing_ref: list[str] = field(default_factory=list)
    missing_hyp: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "corpus": self.corpus,
            "per_utt": self.per_utt,
            "missing_ref": self.missing_ref,
            "missing_hyp": self.missing_hyp,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def r_value(hr: float, os: float) -> float:
    """Boundary-detection R-value from hit rate and over-segmentation."""
    r1 = math.sqrt((1.0 - hr) ** 2 + os ** 2)
    r2 = (-os + hr - 1.0) / math.sqrt(2.0)
    return 1.0 - (abs(r1) + abs(r2)) / 2.0


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def boundary_score_from_counts(n_hit: int, n_ref: int, n_hyp: int) -> BoundaryScore:
    """Precision/recall/F1/R-value from (possibly pooled) match counts."""
    if n_ref == 0 and n_hyp == 0:
        return BoundaryScore(0, 0, 0, 1.0, 1.0, 1.0, 1.0)
    if n_ref == 0:
        return BoundaryScore(n_ref, n_hyp, n_hit, 0.0, 0.0, 0.0, 0.0)
    precision = n_hit / n_hyp if n_hyp > 0 else 0.0
    recall = n_hit / n_ref
    over_seg = n_hyp / n_ref - 1.0
    return BoundaryScore(
        n_ref, n_hyp, n_hit, precision, recall, _f1(precision, recall),
        r_value(recall, over_seg),
    )


def _greedy_match(ref_s, hyp_s, tol_s: float) -> tuple[list[int], list[bool]]:
    """Left-to-right matching of reference boundaries to hypothesis boundaries.

    Returns, per reference boundary, the matched hypothesis index (-1 for a
    miss), plus a used-flag per hypothesis boundary. Each hypothesis boundary
    is usable once; equidistant candidates resolve to the earlier one.
    """
    if tol_s < 0:
        raise ValueError("tolerance must be >= 0")
    hyp = list(hyp_s)
    used = [False] * len(hyp)
    match = []
    for r in ref_s:
        best = -1
        best_d = None
        for i, h in enumerate(hyp):
            if used[i]:
                continue
            d = abs(h - r)
            if best_d is None or d < best_d:  # earlier index wins ties
                best, best_d = i, d
        if best >= 0 and best_d <= tol_s:
            used[best] = True
            match.append(best)
        else:
            match.append(-1)
    return match, used


def match_boundaries(ref_s, hyp_s, tol_s: float) -> BoundaryScore:
    """Score interior boundary lists (utterance edges already stripped)."""
    match, _ = _greedy_match(ref_s, hyp_s, tol_s)
    n_hit = sum(1 for m in match if m >= 0)
    return boundary_score_from_counts(n_hit, len(list(ref_s)), len(list(hyp_s)))


def _iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union


def match_segments_iou(ref_spans, hyp_spans) -> MatchingResult:
    """Hungarian maximum total-IoU matching with zero-weight dummy padding.

    Pairs with IoU = 0 count as unmatched on both sides.
    """
    n_hyp, n_ref = len(hyp_spans), len(ref_spans)
    if n_hyp == 0 or n_ref == 0:
        return MatchingResult((), tuple(range(n_hyp)), tuple(range(n_ref)))
    n = max(n_hyp, n_ref)
    iou = np.zeros((n, n))
    for i, h in enumerate(hyp_spans):
        for j, r in enumerate(ref_spans):
            iou[i, j] = _iou(h, r)
    rows, cols = linear_sum_assignment(iou, maximize=True)
    pairs = []
    for i, j in zip(rows, cols):
        if i < n_hyp and j < n_ref and iou[i, j] > 0:
            pairs.append((int(i), int(j), float(iou[i, j])))
    matched_h = {i for i, _, _ in pairs}
    matched_r = {j for _, j, _ in pairs}
    return MatchingResult(
        tuple(pairs),
        tuple(i for i in range(n_hyp) if i not in matched_h),
        tuple(j for j in range(n_ref) if j not in matched_r),
    )


def purity_and_ds(pairs) -> ClusterScore:
    """Cluster purity and detected-unit count from (cluster id, label) pairs.

    Each IoU-matched hypothesis segment contributes its cluster id and the
    reference label it inherited. Purity is the matched-segment fraction
    whose cluster majority label equals their own; a label counts as
    detected when some cluster scores F1 > 0.5 for it.
    """
    pairs = list(pairs)
    if not pairs:
        log.warning("no matched segments; purity undefined, reporting 0")
        return ClusterScore(0.0, 0, (), 0)
    by_cluster: dict[str, Counter] = {}
    label_totals: Counter = Counter()
    for cluster_id, label in pairs:
        by_cluster.setdefault(str(cluster_id), Counter())[label] += 1
        label_totals[label] += 1
    total = len(pairs)
    purity_num = 0
    best_f1: dict[str, float] = {lab: 0.0 for lab in label_totals}
    per_cluster = []
    for cluster_id in sorted(by_cluster):
        counts = by_cluster[cluster_id]
        size = sum(counts.values())
        majority, _ = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
        purity_num += counts[majority]
        cluster_best = 0.0
        for label, c in counts.items():
            f1 = _f1(c / size, c / label_totals[label])
            cluster_best = max(cluster_best, f1)
            best_f1[label] = max(best_f1[label], f1)
        per_cluster.append((cluster_id, majority, size, cluster_best))
    detected = sum(1 for f1 in best_f1.values() if f1 > 0.5)
    return ClusterScore(purity_num / total, detected, tuple(per_cluster), total)


def token_f1(ref: Alignment, hyp_boundaries, tol_s: float) -> TokenScore:
    """Token-level score: a token is hit only when both its edges matched.

    Unlike interior boundary scoring, the matching here includes utterance
    edges (a first word's start boundary at 0.0 is still a real edge).
    Hypothesis tokens are the spans between adjacent hypothesis boundaries.
    """
    ref_bounds = ref.boundary_times()
    hyp_bounds = sorted(hyp_boundaries)
    match, used = _greedy_match(ref_bounds, hyp_bounds, tol_s)
    ref_matched = {b for b, m in zip(ref_bounds, match) if m >= 0}
    ref_hits = sum(
        1 for s, e, _ in ref.entries if s in ref_matched and e in ref_matched
    )
    hyp_hits = sum(
        1 for u, v in zip(used[:-1], used[1:]) if u and v
    )
    n_ref = len(ref.entries)
    n_hyp = max(len(hyp_bounds) - 1, 0)
    precision = hyp_hits / n_hyp if n_hyp else 0.0
    recall = ref_hits / n_ref if n_ref else 0.0
    return TokenScore(n_ref, n_hyp, ref_hits, hyp_hits, precision, recall,
                      _f1(precision, recall))


def _interior(times, duration: float) -> list[float]:
    return [t for t in times if t > TIME_EPS and abs(t - duration) > TIME_EPS]


def filter_multisyllabic(
    units: dict[str, Alignment], words: dict[str, Alignment]
) -> dict[str, Alignment]:
    """Keep only unit entries inside words containing two or more units.

    Scoring sub-word units inside single-unit words would conflate word
    detection with unit detection, so those are dropped. Utterances stay in
    the result (possibly with no entries) so corpus coverage is unchanged;
    an utterance without word alignments keeps nothing.
    """
    out: dict[str, Alignment] = {}
    for utt_id, ali in units.items():
        word = words.get(utt_id)
        if word is None:
            log.warning("%s: no word alignment; dropping all unit entries", utt_id)
            out[utt_id] = Alignment(utt_id, ali.tier, ())
            continue
        kept = []
        for ws, we in word.spans():
            inside = [
                e for e in ali.entries
                if e[0] >= ws - TIME_EPS and e[1] <= we + TIME_EPS
            ]
            if len(inside) >= 2:
                kept.extend(inside)
        kept.sort(key=lambda e: (e[0], e[1]))
        out[utt_id] = Alignment(utt_id, ali.tier, tuple(kept))
    return out


@dataclass(frozen=True)
class EvalConfig:
    tolerance_s: float = 0.05
    tokens: bool = False
    allow_partial: bool = False

    def __post_init__(self):
        if not self.tolerance_s > 0:
            raise ValueError("tolerance_s must be > 0")


def evaluate_corpus(
    refs: dict[str, Alignment],
    hyps: dict[str, Segmentation],
    config: EvalConfig = EvalConfig(),
    manifest=None,
) -> EvalReport:
    """Micro-averaged corpus metrics over the utterances shared by refs and hyps.

    Mismatched utterance sets are listed in the report and raise unless
    ``allow_partial``. When hypothesis segments carry labels, they are
    treated as cluster ids and purity / detected counts are added (both for
    coarse labels and, when present, fine ones).
    """
    if manifest is not None:
        order = [u for u, _ in manifest]
        hyps = {u: hyps[u] for u in order if u in hyps}
    shared = sorted(set(refs) & set(hyps))
    missing_ref = sorted(set(hyps) - set(refs))
    missing_hyp = sorted(set(refs) - set(hyps))
    if (missing_ref or missing_hyp) and not config.allow_partial:
        raise ValidationError(
            f"utterance sets disagree: {len(missing_ref)} hypotheses without "
            f"references {missing_ref[:5]}, {len(missing_hyp)} references without "
            f"hypotheses {missing_hyp[:5]}"
        )
    tot_hit = tot_ref = tot_hyp = 0
    tok_ref = tok_hyp = tok_ref_hit = tok_hyp_hit = 0
    coarse_pairs: list[tuple[str, str]] = []
    fine_pairs: list[tuple[str, str]] = []
    n_hyp_segments = 0
    n_unmatched_hyp = 0
    have_labels = False
    per_utt = []
    for utt_id in shared:
        ref, hyp = refs[utt_id], hyps[utt_id]
        duration = hyp.duration_s
        ref_b = _interior(ref.boundary_times(), duration)
        hyp_b = hyp.interior_boundaries()
        score = match_boundaries(ref_b, hyp_b, config.tolerance_s)
        tot_hit += score.n_hit
        tot_ref += score.n_ref
        tot_hyp += score.n_hyp
        row = {
            "utt_id": utt_id,
            "n_ref": score.n_ref,
            "n_hyp": score.n_hyp,
            "n_hit": score.n_hit,
            "precision": score.precision,
            "recall": score.recall,
            "f1": score.f1,
            "r_value": score.r_value,
        }
        if config.tokens:
            tok = token_f1(ref, hyp.boundaries_s, config.tolerance_s)
            tok_ref += tok.n_ref
            tok_hyp += tok.n_hyp
            tok_ref_hit += tok.n_ref_hit
            tok_hyp_hit += tok.n_hyp_hit
            row["token_f1"] = tok.f1
        if hyp.labels is not None:
            have_labels = True
            matching = match_segments_iou(ref.spans(), hyp.segments())
            n_hyp_segments += hyp.num_segments
            n_unmatched_hyp += len(matching.unmatched_hyp)
            ref_labels = ref.labels()
            for h_idx, r_idx, _ in matching.pairs:
                coarse_pairs.append((hyp.labels[h_idx], ref_labels[r_idx]))
                if hyp.fine_labels is not None:
                    fine_pairs.append((hyp.fine_labels[h_idx], ref_labels[r_idx]))
        per_utt.append(row)
    pooled = boundary_score_from_counts(tot_hit, tot_ref, tot_hyp)
    corpus = {
        "n_utts": len(shared),
        "n_ref": pooled.n_ref,
        "n_hyp": pooled.n_hyp,
        "n_hit": pooled.n_hit,
        "precision": pooled.precision,
        "recall": pooled.recall,
        "f1": pooled.f1,
        "r_value": pooled.r_value,
    }
    if config.tokens:
        tp = tok_hyp_hit / tok_hyp if tok_hyp else 0.0
        tr = tok_ref_hit / tok_ref if tok_ref else 0.0
        corpus["token_precision"] = tp
        corpus["token_recall"] = tr
        corpus["token_f1"] = _f1(tp, tr)
    if have_labels:
        cscore = purity_and_ds(coarse_pairs)
        corpus["purity"] = cscore.purity
        corpus["detected"] = cscore.detected
        corpus["n_matched_segments"] = cscore.n_matched
        corpus["unmatched_hyp_fraction"] = (
            n_unmatched_hyp / n_hyp_segments if n_hyp_segments else 0.0
        )
        if fine_pairs:
            fscore = purity_and_ds(fine_pairs)
            corpus["purity_fine"] = fscore.purity
            corpus["detected_fine"] = fscore.detected
    return EvalReport(
        corpus=corpus, per_utt=per_utt,
        missing_ref=missing_ref, missing_hyp=missing_hyp,
    )


def format_report(report: EvalReport, percent: bool = False) -> str:
    """Human-readable table of the corpus metrics."""
    scale = 100.0 if percent else 1.0
    fmt = "{:.1f}" if percent else "{:.4f}"
    lines = [f"utterances: {report.corpus['n_utts']}"]
    for key in (
        "precision", "recall", "f1", "r_value",
        "token_precision", "token_recall", "token_f1",
        "purity", "purity_fine", "unmatched_hyp_fraction",
    ):
        if key in report.corpus:
            lines.append(f"{key:>24}: " + fmt.format(report.corpus[key] * scale))
    for key in ("detected", "detected_fine", "n_ref", "n_hyp", "n_hit"):
        if key in report.corpus:
            lines.append(f"{key:>24}: {report.corpus[key]}")
    return "\n".join(lines)
