"""End-to-end CLI coverage: every subcommand against a small generated dataset."""
import json

import numpy as np
import pytest

from burncast.cli import main
from burncast.samples import read_manifest
from conftest import build_raw_cube


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset + two trained checkpoints shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    ds = root / "ds"
    main([
        "synth-gen", "--out", str(ds), "--n", "24", "--seed", "2",
        "--base-spread-prob", "0.3",
    ])
    ckpt = root / "unet2d.pt"
    main([
        "train", "--data", str(ds), "--arch", "unet2d", "--out", str(ckpt),
        "--epochs", "2", "--base-width", "4", "--batch-size", "8",
    ])
    return root, ds, ckpt


class TestPipeline:
    def test_synth_gen_wrote_dataset(self, workspace):
        _, ds, _ = workspace
        entries = read_manifest(ds / "manifest.jsonl")
        assert len(entries) == 24
        assert (ds / "stats.json").exists()
        assert (ds / "catalog.json").exists()

    def test_train_outputs(self, workspace):
        root, _, ckpt = workspace
        assert ckpt.exists()
        history = (root / "unet2d.pt.history.csv").read_text().splitlines()
        assert history[0].split(",") == sorted(["epoch", "train_loss", "lr", "val_dice"])
        assert len(history) == 3  # header + 2 epochs

    def test_evaluate_report(self, workspace, capsys):
        root, ds, ckpt = workspace
        report = root / "metrics.json"
        main([
            "evaluate", "--ckpt", str(ckpt), "--data", str(ds),
            "--split", "test", "--report", str(report),
        ])
        payload = json.loads(report.read_text())
        printed = json.loads(capsys.readouterr().out)
        assert printed == payload
        assert 0.0 <= payload["micro"]["dice"] <= 1.0
        n_test = sum(1 for e in read_manifest(ds / "manifest.jsonl") if e.split == "test")
        assert len(payload["per_sample"]) == n_test
        assert {"event_id", "tp", "fp", "fn", "tn"} <= set(payload["per_sample"][0])

    def test_cluster_report(self, workspace):
        root, ds, ckpt = workspace
        # train split: enough events for two distinct size clusters
        metrics = root / "metrics_train.json"
        main(["evaluate", "--ckpt", str(ckpt), "--data", str(ds),
              "--split", "train", "--report", str(metrics)])
        out = root / "clusters.json"
        main([
            "cluster-report", "--metrics", str(metrics),
            "--manifest", str(ds / "manifest.jsonl"),
            "--k", "2", "--seed", "0", "--report", str(out),
        ])
        rows = json.loads(out.read_text())
        assert len(rows) == 2
        assert rows[0]["center_ha"] <= rows[1]["center_ha"]

    def test_render_maps(self, workspace):
        root, ds, ckpt = workspace
        out = root / "maps"
        main([
            "render-maps", "--samples", str(ds), "--pred", str(ckpt),
            "--out", str(out), "--split", "test", "--n", "2",
        ])
        pngs = list(out.glob("*.png"))
        assert len(pngs) == 2
        for p in pngs:
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_render_maps_without_predictions(self, workspace):
        root, ds, _ = workspace
        out = root / "maps_plain"
        main(["render-maps", "--samples", str(ds), "--out", str(out),
              "--split", "val", "--n", "1"])
        assert len(list(out.glob("*.png"))) == 1

    def test_stats(self, workspace, capsys):
        _, ds, _ = workspace
        main(["stats", "--manifest", str(ds / "manifest.jsonl"), "--k", "3"])
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_events"] == 24
        assert set(payload["splits"]) == {"train", "val", "test"}

    def test_ablate_two_windows(self, workspace):
        root, ds, _ = workspace
        report = root / "ablation.json"
        main([
            "ablate", "--data", str(ds), "--arch", "unet2d", "--mode", "stacked2d",
            "--posts", "1,5", "--epochs", "1", "--base-width", "4",
            "--batch-size", "8", "--report", str(report),
        ])
        payload = json.loads(report.read_text())
        assert set(payload) == {"4,1", "4,5"}
        for row in payload.values():
            assert "dice" in row["micro"]

    def test_evaluate_with_explicit_catalog(self, workspace, capsys):
        root, ds, ckpt = workspace
        main([
            "evaluate", "--ckpt", str(ckpt), "--data", str(ds),
            "--split", "val", "--catalog", str(ds / "catalog.json"),
        ])
        payload = json.loads(capsys.readouterr().out)
        assert payload["split"] == "val"


class TestBuildDatasetCommand:
    def test_cube_to_dataset(self, tmp_path, capsys):
        cube = tmp_path / "cube.h5"
        build_raw_cube(cube, seed=8)
        out = tmp_path / "extracted"
        main([
            "build-dataset", "--cube", str(cube), "--out", str(out),
            "--seed", "1", "--water-threshold", "0.5",
        ])
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_written"] == 9
        entries = read_manifest(out / "manifest.jsonl")
        assert len(entries) == 9


class TestErrorPaths:
    def test_evaluate_missing_split_dataset(self, workspace, tmp_path):
        root, ds, ckpt = workspace
        empty = tmp_path / "empty"
        main(["synth-gen", "--out", str(empty), "--n", "2", "--seed", "0"])
        # 2 events -> rounding gives train-only splits, so test is empty
        with pytest.raises(SystemExit, match="no samples"):
            main(["evaluate", "--ckpt", str(ckpt), "--data", str(empty),
                  "--split", "test"])

    def test_cluster_report_rejects_unknown_event(self, workspace, tmp_path):
        root, ds, _ = workspace
        fake = tmp_path / "fake_metrics.json"
        fake.write_text(json.dumps({
            "per_sample": [
                {"event_id": "nope", "tp": 1, "fp": 0, "fn": 0, "tn": 1}
            ]
        }))
        with pytest.raises(SystemExit, match="missing from manifest"):
            main(["cluster-report", "--metrics", str(fake),
                  "--manifest", str(ds / "manifest.jsonl"), "--k", "1"])

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])


class TestValidationHelpers:
    def test_helpers(self):
        from burncast.validation import (
            as_grid, check_binary, check_finite, check_same_shape,
        )

        check_same_shape(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError, match="shape mismatch"):
            check_same_shape(np.zeros(2), np.zeros(3))
        check_binary([0, 1, 1])
        with pytest.raises(ValueError, match="binary"):
            check_binary([0, 2])
        check_finite([1.0, 2.0])
        with pytest.raises(ValueError, match="non-finite"):
            check_finite([1.0, np.nan])
        grid = as_grid([[1, 2], [3, 4]])
        assert grid.dtype == float and grid.shape == (2, 2)
        with pytest.raises(ValueError, match="2-D"):
            as_grid([1.0, 2.0])
