"""Heatmap export, benchmark report, and CLI surface tests."""

import csv
import json

import numpy as np
import pytest

from sedattn.bench import bench_attention, rows_to_csv_string, rows_to_text
from sedattn.cli import main
from sedattn.heatmap import UnsupportedVariantError, export_attention_heatmap
from sedattn.model import ModelConfig, SedModel
from sedattn.soundscapes import SoundscapeConfig, generate_clip, generate_dataset, save_dataset

CLIP_CFG = SoundscapeConfig(clip_duration=2.0, frame_rate=25.0, n_features=8,
                            n_classes=2, min_events=1, max_events=2,
                            min_duration=0.3, max_duration=1.0, seed=5)


def make_model(attention, **kw):
    base = dict(n_features=8, hidden_dim=6, n_classes=2, attention=attention,
                width=4, n_heads=3, first_width=2, width_step=3, seed=2)
    base.update(kw)
    return SedModel(ModelConfig(**base))


class TestHeatmapExport:
    def test_baseline_rejected(self, tmp_path):
        clip = generate_clip(CLIP_CFG, 0)
        with pytest.raises(UnsupportedVariantError):
            export_attention_heatmap(make_model("none"), clip, tmp_path)

    def test_windowed_export_band_limited(self, tmp_path):
        clip = generate_clip(CLIP_CFG, 1)
        written = export_attention_heatmap(make_model("windowed", width=2), clip, tmp_path)
        csv_path = next(p for p in written if p.suffix == ".csv")
        svg_path = next(p for p in written if p.suffix == ".svg")
        assert svg_path.read_text().startswith("<svg")
        with open(csv_path) as f:
            reader = csv.reader(f)
            header = next(reader)
            assert len(header) == clip.features.shape[0] + 1
            for row in reader:
                populated = [c for c in row[1:] if c]
                assert len(populated) <= 3  # half-width 1

    def test_csv_row_sums_round_trip(self, tmp_path):
        clip = generate_clip(CLIP_CFG, 2)
        written = export_attention_heatmap(make_model("global"), clip, tmp_path)
        csv_path = next(p for p in written if p.suffix == ".csv")
        with open(csv_path) as f:
            reader = csv.reader(f)
            next(reader)
            for row in reader:
                s = sum(float(c) for c in row[1:] if c)
                assert abs(s - 1.0) <= 1e-9

    def test_multihead_writes_per_head_plus_combined(self, tmp_path):
        clip = generate_clip(CLIP_CFG, 3)
        written = export_attention_heatmap(make_model("multihead"), clip, tmp_path)
        names = sorted(p.name for p in written)
        stems = {p.stem for p in written}
        assert len([s for s in stems if "head" in s]) == 3
        assert any("combined" in s for s in stems)
        assert len(names) == 8  # (3 heads + combined) x (csv + svg)

    def test_axes_labeled_in_frames_and_seconds(self, tmp_path):
        clip = generate_clip(CLIP_CFG, 4)
        written = export_attention_heatmap(make_model("global"), clip, tmp_path)
        svg = next(p for p in written if p.suffix == ".svg").read_text()
        assert "(0.00s)" in svg
        assert "source frame (seconds)" in svg


class TestBench:
    def test_report_rows_cover_grid(self):
        rows = bench_attention([16, 32], [4, 8], d=4, kind="dot", repetitions=1)
        assert len(rows) == 2 * (1 + 2)
        modes = {(r.T, r.mode, r.width) for r in rows}
        assert (16, "global", None) in modes and (32, "banded", 8) in modes
        for r in rows:
            assert r.median_seconds >= 0.0 and r.peak_bytes > 0

    def test_degenerate_size(self):
        rows = bench_attention([1], [4], d=3, kind="dot", repetitions=1)
        assert all(np.isfinite(r.median_seconds) for r in rows)

    def test_csv_and_text_outputs(self):
        rows = bench_attention([16], [4], d=4, kind="dot", repetitions=1)
        text = rows_to_text(rows)
        assert "global" in text and "banded" in text
        lines = rows_to_csv_string(rows).strip().splitlines()
        assert lines[0] == "T,mode,width,kind,d,median_seconds,min_seconds,peak_bytes"
        assert len(lines) == 3


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_ds")
    data = generate_dataset(CLIP_CFG, 8, 3, 3)
    save_dataset(data, root / "ds")
    return root / "ds"


class TestCli:
    def test_usage_error_exit_1(self, capsys):
        assert main(["definitely-not-a-command"]) == 1
        assert main(["train", "--variant", "nonsense"]) == 1
        assert main([]) == 1

    def test_generate_and_train_flow(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "clip_duration": 2.0, "frame_rate": 25.0, "n_features": 8,
            "n_classes": 2, "min_events": 1, "max_events": 2,
            "min_duration": 0.3, "max_duration": 1.0, "seed": 9}))
        assert main(["generate", "--out", str(tmp_path / "ds"), "--config", str(cfg),
                     "--n-train", "6", "--n-val", "2", "--n-test", "2"]) == 0
        assert main(["train", "--data", str(tmp_path / "ds"), "--variant", "baseline",
                     "--epochs", "1", "--out", str(tmp_path / "run")]) == 0
        out = capsys.readouterr().out
        assert "Baseline" in out
        assert (tmp_path / "run" / "results.json").exists()

    def test_score_command(self, dataset_dir, capsys):
        ref = str(dataset_dir / "test_annotations.csv")
        assert main(["score", "--ref", ref, "--pred", ref, "--mode", "event"]) == 0
        out = capsys.readouterr().out
        assert "F1 100.00%" in out

    def test_score_malformed_csv_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("clip,label\n")
        assert main(["score", "--ref", str(bad), "--pred", str(bad)]) == 2

    def test_score_missing_file_exit_2(self, tmp_path):
        missing = str(tmp_path / "nope.csv")
        assert main(["score", "--ref", missing, "--pred", missing]) == 2

    def test_heatmap_command(self, dataset_dir, tmp_path, capsys):
        assert main(["train", "--data", str(dataset_dir), "--variant", "selfattn_4",
                     "--epochs", "1", "--out", str(tmp_path / "run")]) == 0
        ckpt = tmp_path / "run" / "checkpoint_selfattn_4.json"
        assert main(["heatmap", "--model", str(ckpt), "--data", str(dataset_dir),
                     "--split", "test", "--index", "0",
                     "--out", str(tmp_path / "heat")]) == 0
        files = list((tmp_path / "heat").iterdir())
        assert any(p.suffix == ".svg" for p in files)
        assert any(p.suffix == ".csv" for p in files)

    def test_heatmap_baseline_exit_1(self, dataset_dir, tmp_path, capsys):
        assert main(["train", "--data", str(dataset_dir), "--variant", "baseline",
                     "--epochs", "1", "--out", str(tmp_path / "run")]) == 0
        ckpt = tmp_path / "run" / "checkpoint_baseline.json"
        assert main(["heatmap", "--model", str(ckpt), "--data", str(dataset_dir),
                     "--out", str(tmp_path / "heat")]) == 1

    def test_bench_command(self, tmp_path, capsys):
        assert main(["bench", "--sizes", "16,32", "--widths", "4", "--dim", "4",
                     "--reps", "1", "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "b" / "bench.csv").exists()
        out = capsys.readouterr().out
        assert "banded" in out
