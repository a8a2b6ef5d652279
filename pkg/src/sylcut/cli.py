"""Command line entry points: segment | cluster | evaluate | sweep | synth | pipeline.

Every subcommand accepts ``--config FILE`` (a JSON object of flag defaults,
explicit flags win) and ``--workers`` (default from env SYLCUT_WORKERS).
Utterances are processed by a thread pool but results are always written in
manifest order, so reruns with the same inputs are byte-identical.

Exit codes: 0 success, 1 validation/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

from . import cluster as cluster_mod
from .errors import DataError, FormatError, SylcutError, ValidationError
from .evaluation import (
    EvalConfig,
    evaluate_corpus,
    filter_multisyllabic,
    format_report,
)
from .featio import (
    FeatureSequence,
    Segmentation,
    read_alignment_tsv,
    read_feature_file,
    read_manifest,
    read_segmentation_tsv,
    write_segmentation_tsv,
)
from .mincut import MergeParams, segment_utterance, segments_from_attention
from .synth import SynthSpec, generate, write_corpus

log = logging.getLogger("sylcut")


class UsageError(Exception):
    """Bad flag/config combination; maps to exit code 2."""


def _env_workers() -> int:
    try:
        return max(1, int(os.environ.get("SYLCUT_WORKERS", "1")))
    except ValueError:
        return 1


def _par_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        yield from map(fn, items)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            yield from ex.map(fn, items)


def _require(ns, *names: str) -> None:
    for name in names:
        if getattr(ns, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _merge_params(ns) -> MergeParams:
    try:
        return MergeParams(
            sec_per_syllable=ns.sec_per_syllable,
            merge_thres=ns.merge_thres,
            min_segment_frames=ns.min_segment_frames,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _resolve_tolerance(ns) -> float:
    if ns.tolerance_s is not None:
        return ns.tolerance_s
    return 0.03 if ns.zerospeech else 0.05


def _eval_config(ns, tokens: bool = False) -> EvalConfig:
    try:
        return EvalConfig(
            tolerance_s=_resolve_tolerance(ns),
            tokens=tokens,
            allow_partial=ns.allow_partial,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_feature(utt_id: str, path: Path) -> FeatureSequence:
    seq = read_feature_file(path)
    if seq.utt_id != utt_id:
        raise DataError(
            f"{path}: header utt_id {seq.utt_id!r} != manifest utt_id {utt_id!r}"
        )
    return seq


def _load_features(entries, workers: int) -> list[FeatureSequence]:
    return list(_par_map(lambda e: _load_feature(*e), entries, workers))


def _segment_one(params: MergeParams, center: bool, seq: FeatureSequence) -> Segmentation:
    return segment_utterance(seq, params, center=center)


# ---------------------------------------------------------------- segment


def cmd_segment(ns) -> int:
    _require(ns, "manifest", "out")
    params = _merge_params(ns)
    if not 0.0 <= ns.attention_quantile <= 1.0:
        raise UsageError("--attention-quantile must be in [0, 1]")
    entries = read_manifest(ns.manifest)

    def work(item):
        utt_id, path = item
        try:
            seq = _load_feature(utt_id, path)
            if ns.attention:
                if seq.dim != 1 and seq.num_frames != 1:
                    raise DataError(
                        f"{path}: attention file must be Tx1 or 1xT, "
                        f"got {seq.num_frames}x{seq.dim}"
                    )
                seg = segments_from_attention(
                    utt_id, seq.frames.ravel(), seq.frame_rate_hz,
                    ns.attention_quantile,
                )
            else:
                seg = segment_utterance(seq, params, center=ns.center)
            return seg, None
        except (SylcutError, OSError) as exc:
            return None, f"{utt_id}: {exc}"

    ordered: list[Segmentation] = []
    failures: list[str] = []
    for seg, err in _par_map(work, entries, ns.workers):
        if err is not None:
            failures.append(err)
        else:
            ordered.append(seg)
    for msg in failures:
        log.error("%s", msg)
    if failures and not ns.allow_partial:
        raise DataError(
            f"{len(failures)} of {len(entries)} utterances failed "
            f"(use --allow-partial to keep the rest)"
        )
    write_segmentation_tsv(ordered, ns.out, tier=ns.out_tier)
    log.info("wrote %d segmentations to %s", len(ordered), ns.out)
    return 0


# ---------------------------------------------------------------- cluster


def cmd_cluster(ns) -> int:
    _require(ns, "manifest", "segments", "model_dir", "assignments")
    if not 1 <= ns.k2 <= ns.k1:
        raise UsageError(f"need 1 <= k2 <= k1, got k1={ns.k1} k2={ns.k2}")
    entries = read_manifest(ns.manifest)
    segs = read_segmentation_tsv(ns.segments)
    manifest_ids = [u for u, _ in entries]
    missing = [u for u in manifest_ids if u not in segs]
    extra = sorted(set(segs) - set(manifest_ids))
    if missing or extra:
        msg = (
            f"{len(missing)} manifest utterances lack segments {missing[:5]}; "
            f"{len(extra)} segmented utterances not in manifest {extra[:5]}"
        )
        if not ns.allow_partial:
            raise ValidationError(msg)
        log.warning("%s", msg)
    work = [(u, p) for u, p in entries if u in segs]

    def pool_one(item):
        utt_id, path = item
        return cluster_mod.pool_segments(_load_feature(utt_id, path), segs[utt_id])

    embs: list[cluster_mod.SegmentEmbedding] = []
    for lst in _par_map(pool_one, work, ns.workers):
        embs.extend(lst)
    model = cluster_mod.fit(embs, ns.k1, ns.k2, ns.seed)
    cluster_mod.save_model(model, ns.model_dir)
    assignment = cluster_mod.assign(embs, model)
    out_segs = cluster_mod.assignment_segmentations(assignment)
    write_segmentation_tsv(
        [out_segs[u] for u, _ in work if u in out_segs], ns.assignments
    )
    log.info(
        "fit k1=%d k2=%d on %d segments; model -> %s, assignments -> %s",
        ns.k1, ns.k2, len(embs), ns.model_dir, ns.assignments,
    )
    return 0


# ---------------------------------------------------------------- evaluate


def _load_refs(ns):
    refs = read_alignment_tsv(ns.refs, ns.tier)
    if getattr(ns, "multisyllabic_only", False):
        if not ns.word_tier:
            raise UsageError("--multisyllabic-only requires --word-tier")
        words = read_alignment_tsv(ns.refs, ns.word_tier)
        refs = filter_multisyllabic(refs, words)
    return refs


def cmd_evaluate(ns) -> int:
    _require(ns, "refs", "hyp")
    refs = _load_refs(ns)
    hyps = read_segmentation_tsv(ns.hyp)
    report = evaluate_corpus(refs, hyps, _eval_config(ns, tokens=ns.tokens))
    if ns.report_out is not None:
        Path(ns.report_out).write_text(report.to_json() + "\n", encoding="utf-8")
        log.info("report -> %s", ns.report_out)
    print(format_report(report, percent=ns.percent))
    return 0


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepRow:
    sec_per_syllable: float
    merge_thres: float
    r_value: float
    f1: float


def run_sweep(
    seqs: list[FeatureSequence],
    refs,
    grid: list[tuple[float, float]],
    *,
    min_segment_frames: int = 1,
    center: bool = False,
    config: EvalConfig = EvalConfig(),
    workers: int = 1,
) -> tuple[list[SweepRow], SweepRow]:
    """Evaluate every (sec_per_syllable, merge_thres) grid point.

    Returns all rows in grid order plus the best row: highest R-value,
    ties broken toward the smaller merge_thres, then the smaller
    sec_per_syllable.
    """
    if not grid:
        raise UsageError("empty hyperparameter grid")
    rows = []
    for sps, mt in grid:
        params = MergeParams(
            sec_per_syllable=sps, merge_thres=mt,
            min_segment_frames=min_segment_frames,
        )
        hyps = {}
        for seg in _par_map(partial(_segment_one, params, center), seqs, workers):
            hyps[seg.utt_id] = seg
        rep = evaluate_corpus(refs, hyps, config)
        rows.append(SweepRow(sps, mt, rep.corpus["r_value"], rep.corpus["f1"]))
    best = max(rows, key=lambda r: (r.r_value, -r.merge_thres, -r.sec_per_syllable))
    return rows, best


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc


def cmd_sweep(ns) -> int:
    _require(ns, "manifest", "refs")
    grid = sorted({
        (float(s), float(m))
        for s in ns.sec_per_syllable
        for m in ns.merge_thres
    })
    if not grid:
        raise UsageError("empty hyperparameter grid")
    if ns.min_segment_frames < 1:
        raise UsageError("--min-segment-frames must be >= 1")
    entries = read_manifest(ns.manifest)
    seqs = _load_features(entries, ns.workers)
    refs = _load_refs(ns)
    rows, best = run_sweep(
        seqs, refs, grid,
        min_segment_frames=ns.min_segment_frames,
        center=ns.center,
        config=_eval_config(ns),
        workers=ns.workers,
    )
    lines = ["sec_per_syllable\tmerge_thres\tr_value\tf1"]
    for r in rows:
        lines.append(
            f"{r.sec_per_syllable:g}\t{r.merge_thres:g}\t{r.r_value:.6f}\t{r.f1:.6f}"
        )
    lines.append(
        f"best\t{best.sec_per_syllable:g}\t{best.merge_thres:g}"
        f"\t{best.r_value:.6f}\t{best.f1:.6f}"
    )
    table = "\n".join(lines)
    if ns.out is not None:
        Path(ns.out).write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


# ---------------------------------------------------------------- synth


def cmd_synth(ns) -> int:
    _require(ns, "out_dir")
    try:
        spec = SynthSpec(
            n_utts=ns.n_utts,
            dim=ns.dim,
            frame_rate_hz=ns.frame_rate_hz,
            n_types=ns.n_types,
            seg_len_frames=tuple(ns.seg_len_frames),
            segs_per_utt=tuple(ns.segs_per_utt),
            noise_sigma=ns.noise_sigma,
            seed=ns.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = generate(spec)
    manifest = write_corpus(result, ns.out_dir)
    log.info("wrote %d utterances under %s", spec.n_utts, ns.out_dir)
    print(manifest)
    return 0


# ---------------------------------------------------------------- pipeline


def cmd_pipeline(ns) -> int:
    _require(ns, "manifest", "refs", "out_dir")
    if not 1 <= ns.k2 <= ns.k1:
        raise UsageError(f"need 1 <= k2 <= k1, got k1={ns.k1} k2={ns.k2}")
    params = _merge_params(ns)
    config = _eval_config(ns, tokens=ns.tokens)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(ns).items()
        if k not in ("func", "config", "verbose")
    }
    (out / "config.json").write_text(
        json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    entries = read_manifest(ns.manifest)
    seqs = _load_features(entries, ns.workers)
    segs = list(_par_map(partial(_segment_one, params, ns.center), seqs, ns.workers))
    write_segmentation_tsv(segs, out / "segments.tsv")
    embs: list[cluster_mod.SegmentEmbedding] = []
    for seq, seg in zip(seqs, segs):
        embs.extend(cluster_mod.pool_segments(seq, seg))
    model = cluster_mod.fit(embs, ns.k1, ns.k2, ns.seed)
    cluster_mod.save_model(model, out / "model")
    assignment = cluster_mod.assign(embs, model)
    hyp_segs = cluster_mod.assignment_segmentations(assignment)
    write_segmentation_tsv(
        [hyp_segs[s.utt_id] for s in segs if s.utt_id in hyp_segs],
        out / "assignments.tsv",
    )
    refs = _load_refs(ns)
    report = evaluate_corpus(refs, hyp_segs, config)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(format_report(report, percent=ns.percent))
    log.info("pipeline artifacts under %s", out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", metavar="JSON",
        help="JSON object of flag defaults for this subcommand; explicit flags win",
    )
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument(
        "--workers", type=int, default=_env_workers(),
        help="parallel workers over utterances (default: env SYLCUT_WORKERS or 1)",
    )

    seg_core = argparse.ArgumentParser(add_help=False)
    seg_core.add_argument("--sec-per-syllable", type=float, default=0.15)
    seg_core.add_argument("--merge-thres", type=float, default=0.3)
    seg_core.add_argument("--min-segment-frames", type=int, default=1)
    seg_core.add_argument(
        "--center", action="store_true",
        help="subtract the utterance mean from features before the similarity matrix",
    )

    ev_core = argparse.ArgumentParser(add_help=False)
    ev_core.add_argument("--tier", default="syllable")
    ev_core.add_argument(
        "--tolerance-s", type=float, default=None,
        help="boundary tolerance in seconds (default 0.05, or 0.03 with --zerospeech)",
    )
    ev_core.add_argument("--zerospeech", action="store_true")
    ev_core.add_argument("--allow-partial", action="store_true")
    ev_core.add_argument(
        "--word-tier", default=None,
        help="word tier name, needed by --multisyllabic-only",
    )
    ev_core.add_argument(
        "--multisyllabic-only", action="store_true",
        help="score only units inside words containing 2+ units",
    )

    parser = argparse.ArgumentParser(
        prog="sylcut",
        description="Unsupervised speech unit segmentation, clustering and scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub_map: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser(
        "segment", parents=[common, seg_core],
        help="segment each feature file in a manifest into a TSV",
    )
    p.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--out-tier", default="segment")
    p.add_argument(
        "--attention", action="store_true",
        help="manifest points at per-frame attention weight files; boundaries "
             "are midpoints between runs above --attention-quantile",
    )
    p.add_argument("--attention-quantile", type=float, default=0.5)
    p.add_argument("--allow-partial", action="store_true")
    p.set_defaults(func=cmd_segment)
    sub_map["segment"] = p

    p = sub.add_parser(
        "cluster", parents=[common],
        help="pool segment features, fit two-step clustering, label segments",
    )
    p.add_argument("--manifest", type=Path)
    p.add_argument("--segments", type=Path)
    p.add_argument("--model-dir", type=Path)
    p.add_argument("--assignments", type=Path)
    p.add_argument("--k1", type=int, default=256,
                   help="fine cluster count (large-corpus setting: 16384)")
    p.add_argument("--k2", type=int, default=64,
                   help="coarse cluster count (large-corpus setting: 4096)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-partial", action="store_true")
    p.set_defaults(func=cmd_cluster)
    sub_map["cluster"] = p

    p = sub.add_parser(
        "evaluate", parents=[common, ev_core],
        help="score a hypothesis TSV against reference alignments",
    )
    p.add_argument("--refs", type=Path)
    p.add_argument("--hyp", type=Path)
    p.add_argument("--tokens", action="store_true",
                   help="also score tokens (both edges must match)")
    p.add_argument("--percent", action="store_true",
                   help="scale table values by 100")
    p.add_argument("--report-out", type=Path, default=None)
    p.set_defaults(func=cmd_evaluate)
    sub_map["evaluate"] = p

    p = sub.add_parser(
        "sweep", parents=[common, ev_core],
        help="grid-search sec_per_syllable x merge_thres by R-value",
    )
    p.add_argument("--manifest", type=Path)
    p.add_argument("--refs", type=Path)
    p.add_argument(
        "--sec-per-syllable", type=_float_list, default=[0.1, 0.15, 0.2],
        metavar="LIST", help="comma-separated values",
    )
    p.add_argument(
        "--merge-thres", type=_float_list, default=[0.2, 0.3, 0.4],
        metavar="LIST", help="comma-separated values",
    )
    p.add_argument("--min-segment-frames", type=int, default=1)
    p.add_argument("--center", action="store_true")
    p.add_argument("--out", type=Path, default=None,
                   help="also write the result table to this TSV")
    p.set_defaults(func=cmd_sweep)
    sub_map["sweep"] = p

    p = sub.add_parser(
        "synth", parents=[common],
        help="generate a synthetic corpus with planted boundaries",
    )
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--n-utts", type=int, default=100)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--frame-rate-hz", type=float, default=50.0)
    p.add_argument("--n-types", type=int, default=8)
    p.add_argument("--seg-len-frames", type=int, nargs=2, default=[10, 40],
                   metavar=("MIN", "MAX"))
    p.add_argument("--segs-per-utt", type=int, nargs=2, default=[8, 8],
                   metavar=("MIN", "MAX"))
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    sub_map["synth"] = p

    p = sub.add_parser(
        "pipeline", parents=[common, seg_core, ev_core],
        help="segment -> cluster -> evaluate into one output directory",
    )
    p.add_argument("--manifest", type=Path)
    p.add_argument("--refs", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--k1", type=int, default=256,
                   help="fine cluster count (large-corpus setting: 16384)")
    p.add_argument("--k2", type=int, default=64,
                   help="coarse cluster count (large-corpus setting: 4096)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tokens", action="store_true")
    p.add_argument("--percent", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    sub_map["pipeline"] = p

    return parser, sub_map


def _extract_config_path(argv: list[str]) -> str | None:
    for i, arg in enumerate(argv):
        if arg == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a value")
            return argv[i + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def _load_config(path: str, sp: argparse.ArgumentParser) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    dests = {action.dest for action in sp._actions}
    out = {}
    for key, value in raw.items():
        dest = str(key).replace("-", "_")
        if dest not in dests:
            raise UsageError(f"{path}: unknown config key {key!r}")
        out[dest] = value
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub_map = build_parser()
    try:
        cfg_path = _extract_config_path(argv)
        if cfg_path is not None and argv and argv[0] in sub_map:
            sub_map[argv[0]].set_defaults(**_load_config(cfg_path, sub_map[argv[0]]))
        ns = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if ns.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if ns.workers < 1:
            raise UsageError("--workers must be >= 1")
        return ns.func(ns)
    except UsageError as exc:
        log.error("%s", exc)
        return 2
    except (SylcutError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
