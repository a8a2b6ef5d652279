"""Emitted files must be consumable by the downstream segmentation toolkit.

These tests only exercise the public file formats; they are skipped when the
toolkit is not installed in the same environment.
"""

import pytest

sylcut = pytest.importorskip("sylcut")

from extract_bridge import ExtractJob, TransformersEncoder, extract

from conftest import tone, write_wav


@pytest.fixture(scope="module")
def emitted(tiny_checkpoint, tmp_path_factory):
    root = tmp_path_factory.mktemp("interop")
    wav_dir = root / "wavs"
    wav_dir.mkdir()
    lines = []
    for name, freq in (("u1", 220.0), ("u2", 440.0)):
        write_wav(wav_dir / f"{name}.wav", tone(0.5, freq))
        lines.append(f"{name}\t{name}.wav\n")
    manifest = wav_dir / "audio.tsv"
    manifest.write_text("".join(lines), encoding="utf-8")
    encoder = TransformersEncoder(str(tiny_checkpoint))
    out = root / "out"
    job = ExtractJob(manifest, str(tiny_checkpoint), layer=1, out_dir=out, emit_attention=True)
    extract(job, encoder=encoder)
    return out


class TestDownstreamReads:
    def test_feature_reader_accepts_output(self, emitted):
        from sylcut.featio import read_feature_file, read_manifest

        entries = read_manifest(emitted / "manifest.tsv")
        assert [utt for utt, _ in entries] == ["u1", "u2"]
        for utt, path in entries:
            seq = read_feature_file(path)
            assert seq.utt_id == utt
            assert seq.frame_rate_hz == pytest.approx(800.0)
            assert seq.num_frames > 1

    def test_segment_cli_runs_on_output(self, emitted, tmp_path):
        from sylcut.cli import main as sylcut_main

        out_tsv = tmp_path / "segs.tsv"
        rc = sylcut_main([
            "segment",
            "--manifest", str(emitted / "manifest.tsv"),
            "--out", str(out_tsv),
        ])
        assert rc == 0
        rows = out_tsv.read_text().splitlines()
        assert rows
        assert all(len(r.split("\t")) == 5 for r in rows)

    def test_segment_cli_attention_mode_runs_on_output(self, emitted, tmp_path):
        from sylcut.cli import main as sylcut_main

        out_tsv = tmp_path / "attn_segs.tsv"
        rc = sylcut_main([
            "segment",
            "--manifest", str(emitted / "attn_manifest.tsv"),
            "--attention",
            "--out", str(out_tsv),
        ])
        assert rc == 0
        assert out_tsv.read_text().splitlines()
