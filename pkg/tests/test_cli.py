import json

import numpy as np
import pytest

from sylcut.cli import main
from sylcut.featio import (
    FeatureSequence,
    Segmentation,
    read_alignment_tsv,
    read_feature_file,
    read_manifest,
    read_segmentation_tsv,
    write_feature_file,
    write_manifest,
    write_segmentation_tsv,
)
from sylcut.mincut import MergeParams, choose_k, ncut_dp
from sylcut.ssm import compute_ssm
from sylcut.synth import SynthSpec, generate


SYNTH_ARGS = [
    "--n-utts", "4", "--dim", "16", "--n-types", "5",
    "--seg-len-frames", "10", "20", "--segs-per-utt", "4", "6",
    "--noise-sigma", "0.05", "--seed", "7",
]

CLEAN_SPEC = SynthSpec(
    n_utts=6, dim=16, frame_rate_hz=50.0, n_types=4,
    seg_len_frames=(10, 20), segs_per_utt=(5, 5), noise_sigma=0.0, seed=2,
)

CLEAN_ARGS = [
    "--n-utts", "6", "--dim", "16", "--n-types", "4",
    "--seg-len-frames", "10", "20", "--segs-per-utt", "5", "5",
    "--noise-sigma", "0", "--seed", "2",
]


@pytest.fixture()
def corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["synth", "--out-dir", str(out)] + SYNTH_ARGS) == 0
    return out


@pytest.fixture()
def clean_corpus(tmp_path):
    out = tmp_path / "clean"
    assert main(["synth", "--out-dir", str(out)] + CLEAN_ARGS) == 0
    return out


def segment_args(corpus, out, extra=()):
    return [
        "segment", "--manifest", str(corpus / "manifest.tsv"),
        "--out", str(out), *extra,
    ]


class TestSynthCommand:
    def test_writes_corpus_and_prints_manifest(self, tmp_path, capsys):
        out = tmp_path / "c"
        assert main(["synth", "--out-dir", str(out)] + SYNTH_ARGS) == 0
        printed = capsys.readouterr().out.strip()
        assert printed == str(out / "manifest.tsv")
        entries = read_manifest(out / "manifest.tsv")
        assert len(entries) == 4
        assert (out / "refs.tsv").exists()
        for utt_id, path in entries:
            assert read_feature_file(path).utt_id == utt_id

    def test_deterministic_across_runs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--out-dir", str(a)] + SYNTH_ARGS) == 0
        assert main(["synth", "--out-dir", str(b)] + SYNTH_ARGS) == 0
        assert (a / "refs.tsv").read_bytes() == (b / "refs.tsv").read_bytes()
        fa = a / "feats" / "synth_0000.feat1"
        fb = b / "feats" / "synth_0000.feat1"
        assert fa.read_bytes() == fb.read_bytes()

    def test_invalid_spec_exits_2(self, tmp_path):
        rc = main(["synth", "--out-dir", str(tmp_path / "x"), "--n-utts", "0"])
        assert rc == 2

    def test_missing_out_dir_exits_2(self):
        assert main(["synth"]) == 2


class TestSegmentCommand:
    def test_writes_tiled_tsv_in_manifest_order(self, corpus, tmp_path):
        out = tmp_path / "segments.tsv"
        assert main(segment_args(corpus, out)) == 0
        segs = read_segmentation_tsv(out)
        entries = read_manifest(corpus / "manifest.tsv")
        assert sorted(segs) == sorted(u for u, _ in entries)
        file_order = []
        for line in out.read_text().splitlines():
            utt = line.split("\t")[0]
            if utt not in file_order:
                file_order.append(utt)
        assert file_order == [u for u, _ in entries]
        for utt_id, path in entries:
            seq = read_feature_file(path)
            assert segs[utt_id].duration_s == pytest.approx(seq.duration_s, abs=1e-6)
        assert all(
            row.split("\t")[1] == "segment" for row in out.read_text().splitlines()
        )

    def test_custom_out_tier(self, corpus, tmp_path):
        out = tmp_path / "s.tsv"
        assert main(segment_args(corpus, out, ["--out-tier", "chunk"])) == 0
        assert all(
            line.split("\t")[1] == "chunk" for line in out.read_text().splitlines()
        )

    def test_merge_thres_above_one_equals_raw_dp(self, corpus, tmp_path):
        out = tmp_path / "s.tsv"
        assert main(segment_args(corpus, out, ["--merge-thres", "1.1"])) == 0
        segs = read_segmentation_tsv(out)
        params = MergeParams(sec_per_syllable=0.15, merge_thres=1.1)
        for utt_id, path in read_manifest(corpus / "manifest.tsv"):
            seq = read_feature_file(path)
            k = choose_k(seq.duration_s, params, seq.num_frames)
            sol = ncut_dp(compute_ssm(seq), k)
            want = tuple(b / seq.frame_rate_hz for b in sol.boundaries)
            got = segs[utt_id].boundaries_s
            assert got == pytest.approx(want, abs=1e-6), utt_id

    def test_rerun_byte_identical(self, corpus, tmp_path):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        assert main(segment_args(corpus, a)) == 0
        assert main(segment_args(corpus, b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_workers_do_not_change_output(self, corpus, tmp_path, monkeypatch):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        assert main(segment_args(corpus, a, ["--workers", "1"])) == 0
        monkeypatch.setenv("SYLCUT_WORKERS", "3")
        assert main(segment_args(corpus, b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_workers_exits_2(self, corpus, tmp_path):
        rc = main(segment_args(corpus, tmp_path / "s.tsv", ["--workers", "0"]))
        assert rc == 2

    def test_missing_required_flag_exits_2(self, corpus):
        assert main(["segment", "--manifest", str(corpus / "manifest.tsv")]) == 2

    def test_missing_feature_file(self, corpus, tmp_path):
        (corpus / "feats" / "synth_0001.feat1").unlink()
        out = tmp_path / "s.tsv"
        assert main(segment_args(corpus, out)) == 1
        assert main(segment_args(corpus, out, ["--allow-partial"])) == 0
        segs = read_segmentation_tsv(out)
        assert sorted(segs) == ["synth_0000", "synth_0002", "synth_0003"]


class TestAttentionMode:
    def attention_corpus(self, tmp_path, frames):
        seq = FeatureSequence("att0", frames, 50.0)
        feat = tmp_path / "att0.feat1"
        write_feature_file(seq, feat)
        manifest = tmp_path / "manifest.tsv"
        write_manifest([("att0", feat)], manifest)
        return manifest

    def test_column_vector_weights(self, tmp_path):
        w = np.zeros((50, 1), dtype=np.float32)
        w[10:20] = 1.0
        w[30:40] = 1.0
        manifest = self.attention_corpus(tmp_path, w)
        out = tmp_path / "s.tsv"
        rc = main(["segment", "--manifest", str(manifest), "--out", str(out),
                   "--attention"])
        assert rc == 0
        seg = read_segmentation_tsv(out)["att0"]
        assert seg.boundaries_s == pytest.approx((0.0, 0.5, 1.0), abs=1e-6)

    def test_row_vector_weights(self, tmp_path):
        w = np.zeros((1, 50), dtype=np.float32)
        w[0, 10:20] = 1.0
        w[0, 30:40] = 1.0
        manifest = self.attention_corpus(tmp_path, w)
        out = tmp_path / "s.tsv"
        rc = main(["segment", "--manifest", str(manifest), "--out", str(out),
                   "--attention"])
        assert rc == 0
        seg = read_segmentation_tsv(out)["att0"]
        assert seg.boundaries_s == pytest.approx((0.0, 0.5, 1.0), abs=1e-6)

    def test_matrix_rejected(self, tmp_path):
        manifest = self.attention_corpus(tmp_path, np.ones((50, 2), dtype=np.float32))
        rc = main(["segment", "--manifest", str(manifest),
                   "--out", str(tmp_path / "s.tsv"), "--attention"])
        assert rc == 1

    def test_bad_quantile_exits_2(self, tmp_path):
        manifest = self.attention_corpus(tmp_path, np.ones((50, 1), dtype=np.float32))
        rc = main(["segment", "--manifest", str(manifest),
                   "--out", str(tmp_path / "s.tsv"), "--attention",
                   "--attention-quantile", "1.5"])
        assert rc == 2


class TestClusterCommand:
    def cluster_args(self, corpus, segs, tmp_path, extra=()):
        return [
            "cluster", "--manifest", str(corpus / "manifest.tsv"),
            "--segments", str(segs),
            "--model-dir", str(tmp_path / "model"),
            "--assignments", str(tmp_path / "assignments.tsv"),
            *extra,
        ]

    def test_artifacts(self, corpus, tmp_path):
        segs_path = tmp_path / "segments.tsv"
        assert main(segment_args(corpus, segs_path)) == 0
        rc = main(self.cluster_args(corpus, segs_path, tmp_path,
                                    ["--k1", "8", "--k2", "3"]))
        assert rc == 0
        meta = json.loads((tmp_path / "model" / "model.json").read_text())
        assert meta["k1"] == 8 and meta["k2"] == 3
        cents = read_feature_file(tmp_path / "model" / "centroids.feat1")
        assert cents.num_frames == 8
        plain = read_segmentation_tsv(segs_path)
        labelled = read_segmentation_tsv(tmp_path / "assignments.tsv")
        assert sorted(labelled) == sorted(plain)
        for utt_id, seg in labelled.items():
            assert seg.boundaries_s == pytest.approx(plain[utt_id].boundaries_s)
            assert all(0 <= int(lab) < 3 for lab in seg.labels)
            assert all(0 <= int(f) < 8 for f in seg.fine_labels)

    def test_k2_greater_than_k1_exits_2(self, corpus, tmp_path):
        segs_path = tmp_path / "segments.tsv"
        assert main(segment_args(corpus, segs_path)) == 0
        rc = main(self.cluster_args(corpus, segs_path, tmp_path,
                                    ["--k1", "4", "--k2", "8"]))
        assert rc == 2

    def test_k1_exceeding_segments_exits_1(self, corpus, tmp_path):
        segs_path = tmp_path / "segments.tsv"
        assert main(segment_args(corpus, segs_path)) == 0
        # defaults k1=256 dwarf this corpus's segment count
        rc = main(self.cluster_args(corpus, segs_path, tmp_path))
        assert rc == 1

    def test_segments_missing_utterance(self, corpus, tmp_path):
        segs_path = tmp_path / "segments.tsv"
        assert main(segment_args(corpus, segs_path)) == 0
        kept = [
            line for line in segs_path.read_text().splitlines()
            if not line.startswith("synth_0002\t")
        ]
        segs_path.write_text("\n".join(kept) + "\n")
        rc = main(self.cluster_args(corpus, segs_path, tmp_path,
                                    ["--k1", "4", "--k2", "2"]))
        assert rc == 1
        rc = main(self.cluster_args(corpus, segs_path, tmp_path,
                                    ["--k1", "4", "--k2", "2", "--allow-partial"]))
        assert rc == 0
        out = read_segmentation_tsv(tmp_path / "assignments.tsv")
        assert "synth_0002" not in out


def hyp_from_refs(refs_path, hyp_path, tier="unit", single_segment=False):
    refs = read_alignment_tsv(refs_path, tier)
    segs = []
    for utt_id in sorted(refs):
        times = refs[utt_id].boundary_times()
        bounds = (0.0, times[-1]) if single_segment else times
        segs.append(Segmentation(utt_id, bounds))
    write_segmentation_tsv(segs, hyp_path)


class TestEvaluateCommand:
    def test_perfect_hypothesis(self, corpus, tmp_path, capsys):
        hyp = tmp_path / "hyp.tsv"
        hyp_from_refs(corpus / "refs.tsv", hyp)
        report_path = tmp_path / "report.json"
        rc = main(["evaluate", "--refs", str(corpus / "refs.tsv"), "--hyp", str(hyp),
                   "--tier", "unit", "--tokens", "--report-out", str(report_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "1.0000" in out
        report = json.loads(report_path.read_text())
        assert report["corpus"]["f1"] == 1.0
        assert report["corpus"]["r_value"] == 1.0
        assert report["corpus"]["token_f1"] == 1.0

    def test_single_segment_hypothesis_scores_zero(self, corpus, tmp_path, capsys):
        hyp = tmp_path / "hyp.tsv"
        hyp_from_refs(corpus / "refs.tsv", hyp, single_segment=True)
        report_path = tmp_path / "report.json"
        rc = main(["evaluate", "--refs", str(corpus / "refs.tsv"), "--hyp", str(hyp),
                   "--tier", "unit", "--report-out", str(report_path)])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["corpus"]["precision"] == 0.0
        assert report["corpus"]["recall"] == 0.0
        assert report["corpus"]["f1"] == 0.0

    def eval_pair(self, tmp_path, hyp_time):
        refs = tmp_path / "refs.tsv"
        refs.write_text(
            "u\tsyllable\t0.000000\t0.500000\ta\n"
            "u\tsyllable\t0.500000\t1.000000\tb\n"
        )
        hyp = tmp_path / "hyp.tsv"
        write_segmentation_tsv([Segmentation("u", (0.0, hyp_time, 1.0))], hyp)
        return refs, hyp

    def run_eval(self, refs, hyp, report_path, extra=()):
        rc = main(["evaluate", "--refs", str(refs), "--hyp", str(hyp),
                   "--report-out", str(report_path), *extra])
        assert rc == 0
        return json.loads(report_path.read_text())["corpus"]

    def test_tolerance_defaults_and_flags(self, tmp_path):
        refs, hyp = self.eval_pair(tmp_path, 0.54)
        rep = tmp_path / "r.json"
        assert self.run_eval(refs, hyp, rep)["f1"] == 1.0
        assert self.run_eval(refs, hyp, rep, ["--zerospeech"])["f1"] == 0.0
        assert self.run_eval(refs, hyp, rep, ["--tolerance-s", "0.01"])["f1"] == 0.0
        assert self.run_eval(
            refs, hyp, rep, ["--zerospeech", "--tolerance-s", "0.1"]
        )["f1"] == 1.0

    def test_percent_flag(self, tmp_path, capsys):
        refs, hyp = self.eval_pair(tmp_path, 0.5)
        rc = main(["evaluate", "--refs", str(refs), "--hyp", str(hyp), "--percent"])
        assert rc == 0
        assert "100.0" in capsys.readouterr().out

    def test_multisyllabic_requires_word_tier(self, tmp_path):
        refs, hyp = self.eval_pair(tmp_path, 0.5)
        rc = main(["evaluate", "--refs", str(refs), "--hyp", str(hyp),
                   "--multisyllabic-only"])
        assert rc == 2

    def test_multisyllabic_filter_applies(self, tmp_path):
        refs = tmp_path / "refs.tsv"
        refs.write_text(
            "u\tsyllable\t0.000000\t0.500000\ta\n"
            "u\tsyllable\t0.500000\t1.000000\tb\n"
            "u\tword\t0.000000\t0.500000\tw0\n"
            "u\tword\t0.500000\t1.000000\tw1\n"
        )
        hyp = tmp_path / "hyp.tsv"
        write_segmentation_tsv([Segmentation("u", (0.0, 0.5, 1.0))], hyp)
        rep = tmp_path / "r.json"
        # every word holds a single unit, so nothing survives the filter
        corpus = self.run_eval(refs, hyp, rep,
                               ["--multisyllabic-only", "--word-tier", "word"])
        assert corpus["n_ref"] == 0
        assert corpus["f1"] == 0.0

    def test_missing_refs_file_exits_1(self, tmp_path):
        hyp = tmp_path / "hyp.tsv"
        write_segmentation_tsv([Segmentation("u", (0.0, 1.0))], hyp)
        rc = main(["evaluate", "--refs", str(tmp_path / "nope.tsv"),
                   "--hyp", str(hyp)])
        assert rc == 1

    def test_utt_mismatch_exits_1(self, tmp_path):
        refs, hyp = self.eval_pair(tmp_path, 0.5)
        extra = Segmentation("other", (0.0, 1.0))
        with open(hyp, "a") as f:
            f.write("other\tsegment\t0.000000\t1.000000\t\n")
        del extra
        rc = main(["evaluate", "--refs", str(refs), "--hyp", str(hyp)])
        assert rc == 1
        rc = main(["evaluate", "--refs", str(refs), "--hyp", str(hyp),
                   "--allow-partial"])
        assert rc == 0


class TestSweepCommand:
    def sweep_args(self, corpus, extra=()):
        return [
            "sweep", "--manifest", str(corpus / "manifest.tsv"),
            "--refs", str(corpus / "refs.tsv"), "--tier", "unit", *extra,
        ]

    def test_single_point_grid(self, corpus, capsys):
        rc = main(self.sweep_args(corpus, [
            "--sec-per-syllable", "0.15", "--merge-thres", "0.8",
        ]))
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "sec_per_syllable\tmerge_thres\tr_value\tf1"
        assert len(lines) == 3
        assert lines[1].startswith("0.15\t0.8\t")
        assert lines[2].startswith("best\t0.15\t0.8\t")

    def test_duplicate_grid_points_deduped(self, corpus, capsys):
        rc = main(self.sweep_args(corpus, [
            "--sec-per-syllable", "0.15,0.15", "--merge-thres", "0.8,0.8",
        ]))
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3

    def test_tie_prefers_smaller_merge_thres(self, clean_corpus, capsys):
        max_cos = generate(CLEAN_SPEC).max_cross_type_cosine()
        assert max_cos < 0.9  # both candidate thresholds sit above it
        rc = main(self.sweep_args(clean_corpus, [
            "--sec-per-syllable", "0.1", "--merge-thres", "0.95,0.9",
        ]))
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        best = lines[-1].split("\t")
        assert best[0] == "best"
        assert float(best[2]) == 0.9
        rows = {tuple(l.split("\t")[:2]): l.split("\t")[2] for l in lines[1:-1]}
        assert rows[("0.1", "0.9")] == rows[("0.1", "0.95")]

    def test_empty_grid_exits_2(self, corpus):
        rc = main(self.sweep_args(corpus, ["--sec-per-syllable", ","]))
        assert rc == 2

    def test_bad_float_list_exits_nonzero(self, corpus):
        with pytest.raises(SystemExit) as exc:
            main(self.sweep_args(corpus, ["--sec-per-syllable", "abc"]))
        assert exc.value.code == 2

    def test_out_file_matches_stdout(self, corpus, tmp_path, capsys):
        table = tmp_path / "table.tsv"
        rc = main(self.sweep_args(corpus, [
            "--sec-per-syllable", "0.15", "--merge-thres", "0.8",
            "--out", str(table),
        ]))
        assert rc == 0
        assert table.read_text().strip() == capsys.readouterr().out.strip()


class TestPipelineCommand:
    def test_artifacts_and_noise_free_scores(self, clean_corpus, tmp_path):
        res = generate(CLEAN_SPEC)
        thresh = (res.max_cross_type_cosine() + 1.0) / 2.0
        n_types = len({lab for a in res.refs.values() for lab in a.labels()})
        out = tmp_path / "run"
        rc = main([
            "pipeline", "--manifest", str(clean_corpus / "manifest.tsv"),
            "--refs", str(clean_corpus / "refs.tsv"), "--tier", "unit",
            "--out-dir", str(out),
            "--sec-per-syllable", "0.1", "--merge-thres", f"{thresh}",
            "--k1", str(n_types), "--k2", str(n_types),
        ])
        assert rc == 0
        for name in ("config.json", "segments.tsv", "assignments.tsv", "report.json"):
            assert (out / name).exists(), name
        assert (out / "model" / "model.json").exists()
        assert (out / "model" / "centroids.feat1").exists()
        echo = json.loads((out / "config.json").read_text())
        assert echo["k1"] == n_types
        assert echo["sec_per_syllable"] == 0.1
        report = json.loads((out / "report.json").read_text())
        assert report["corpus"]["f1"] == 1.0
        assert report["corpus"]["purity"] == 1.0
        assert report["corpus"]["detected"] == n_types
        assert report["corpus"]["unmatched_hyp_fraction"] == 0.0

    def test_k2_check(self, clean_corpus, tmp_path):
        rc = main([
            "pipeline", "--manifest", str(clean_corpus / "manifest.tsv"),
            "--refs", str(clean_corpus / "refs.tsv"),
            "--out-dir", str(tmp_path / "run"), "--k1", "2", "--k2", "4",
        ])
        assert rc == 2


class TestConfigFile:
    def test_config_provides_defaults(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"merge-thres": 1.1, "sec-per-syllable": 0.2}))
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        assert main(segment_args(corpus, a, ["--config", str(cfg)])) == 0
        assert main(segment_args(
            corpus, b, ["--merge-thres", "1.1", "--sec-per-syllable", "0.2"]
        )) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_explicit_flags_beat_config(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"merge_thres": 0.3}))
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        assert main(segment_args(
            corpus, a, ["--config", str(cfg), "--merge-thres", "1.1"]
        )) == 0
        assert main(segment_args(corpus, b, ["--merge-thres", "1.1"])) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_key_exits_2(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        rc = main(segment_args(corpus, tmp_path / "s.tsv", ["--config", str(cfg)]))
        assert rc == 2

    def test_invalid_json_exits_1(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        rc = main(segment_args(corpus, tmp_path / "s.tsv", ["--config", str(cfg)]))
        assert rc == 1

    def test_config_without_value_exits_2(self, corpus, tmp_path):
        rc = main(segment_args(corpus, tmp_path / "s.tsv") + ["--config"])
        assert rc == 2
