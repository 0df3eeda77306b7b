"""Harness: config resolution, dataset files, synthetic worlds, CLI, reports."""

import json
import logging

import numpy as np
import pytest

from ambiflow import handmodel as hm
from ambiflow.annotate import check_plausibility
from ambiflow.harness import (
    ConfigError,
    FrameRecord,
    config_hash,
    load_config_file,
    parse_value,
    plausibility_config,
    read_dataset,
    resolve_config,
    synth_records,
    to_training_samples,
    write_dataset,
)
from ambiflow.harness.cli import main
from ambiflow.harness.dataset import DataError
from ambiflow.harness.report import read_csv, summarize_run, write_csv
from ambiflow.harness.synth import build_world_assets, make_cameras

logging.getLogger("ambiflow").setLevel(logging.ERROR)

SMALL_WORLD = {
    "world.frames": 3,
    "world.cameras": 4,
    "world.test_cameras": 1,
    "world.test_frames_fraction": 0.34,
    "annotate.iterations": 5,
    "annotate.population_cap": 25,
}


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    args = ["synth-data", "--out", str(out), "--seed", "5"]
    for key, value in SMALL_WORLD.items():
        args += ["--set", f"{key}={value}"]
    assert main(args) == 0
    return out


class TestConfig:
    def test_parse_values(self):
        assert parse_value("true") is True
        assert parse_value("False") is False
        assert parse_value("42") == 42
        assert parse_value("4.5") == 4.5
        assert parse_value("1e-3") == 1e-3
        assert parse_value("10,20,50") == [10, 20, 50]
        assert parse_value("linear") == "linear"

    def test_file_parsing_with_comments(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# comment\nseed = 7\nworld.frames = 9  # trailing\n\n")
        cfg = load_config_file(path)
        assert cfg == {"seed": 7, "world.frames": 9}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("this is not a pair\n")
        with pytest.raises(ConfigError):
            load_config_file(path)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            resolve_config(overrides={"world.framez": 3})

    def test_precedence_file_then_overrides_then_seed(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("seed = 1\nworld.frames = 10\n")
        cfg = resolve_config(path, overrides={"world.frames": 20}, seed=3)
        assert cfg["world.frames"] == 20
        assert cfg["seed"] == 3

    def test_hash_sensitivity(self):
        a = resolve_config()
        b = resolve_config(overrides={"world.frames": a["world.frames"] + 1})
        assert config_hash(a) != config_hash(b)
        assert config_hash(a) == config_hash(resolve_config())


class TestDatasetFile:
    def test_write_read_write_is_byte_identical(self, small_dataset, tmp_path):
        src = small_dataset / "dataset.jsonl"
        header, records = read_dataset(src)
        clone = tmp_path / "clone.jsonl"
        write_dataset(clone, {k: v for k, v in header.items() if k != "format"}, records)
        assert src.read_bytes() == clone.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_dataset(tmp_path / "nope.jsonl")

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("not json\n")
        with pytest.raises(DataError):
            read_dataset(path)

    def test_wrong_format_tag(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"format": "dataset.v999"}\n')
        with pytest.raises(DataError):
            read_dataset(path)

    def test_malformed_record(self, tmp_path, small_dataset):
        src = (small_dataset / "dataset.jsonl").read_text().splitlines()
        path = tmp_path / "bad.jsonl"
        path.write_text(src[0] + "\n" + '{"frame_id": "x"}\n')
        with pytest.raises(DataError):
            read_dataset(path)

    def test_training_sample_conversion_and_mode_stability(self, small_dataset):
        _, records = read_dataset(small_dataset / "dataset.jsonl")
        a = to_training_samples(records, seed=5, split="train")
        b = to_training_samples(records, seed=5, split="train")
        assert len(a) > 0
        for sa, sb in zip(a, b):
            assert sa.mode_index == sb.mode_index

    def test_split_tags_partition_cameras_and_frames(self, small_dataset):
        _, records = read_dataset(small_dataset / "dataset.jsonl")
        test_recs = [r for r in records if r.split == "test"]
        train_recs = [r for r in records if r.split == "train"]
        assert test_recs and train_recs
        assert {r.cam_id for r in test_recs}.isdisjoint({r.cam_id for r in train_recs})
        assert {r.frame_id for r in test_recs}.isdisjoint({r.frame_id for r in train_recs})


class TestSynth:
    def test_deterministic_given_seed(self):
        cfg = resolve_config(overrides={**SMALL_WORLD, "world.frames": 2}, seed=11)
        outs = []
        for _ in range(2):
            assets, samplers = build_world_assets(cfg)
            plaus = plausibility_config(cfg)
            records = synth_records(cfg, assets, samplers, plaus, "h")
            outs.append(json.dumps([r.to_json_dict() for r in records]))
        assert outs[0] == outs[1]

    def test_ground_truth_records_are_self_plausible(self, small_dataset):
        _, records = read_dataset(small_dataset / "dataset.jsonl")
        cfg = resolve_config(overrides=SMALL_WORLD, seed=5)
        assets = hm.ModelAssets.load(small_dataset / "assets.json")
        plaus = plausibility_config(cfg)
        for rec in records:
            rep = check_plausibility(rec.psi_gt, rec.psi_gt, rec.camera, assets, plaus,
                                     occluders_cam=rec.occluders_cam())
            assert rep.passed, f"{rec.frame_id}/{rec.cam_id}: {rep}"

    def test_observation_matches_geometry(self, small_dataset):
        cfg = resolve_config(overrides=SMALL_WORLD, seed=5)
        assets = hm.ModelAssets.load(small_dataset / "assets.json")
        _, records = read_dataset(small_dataset / "dataset.jsonl")
        for rec in records[:4]:
            joints = hm.keypoints_np(rec.psi_gt, assets, rec.camera,
                                     cfg["model.reference_focal"])
            assert np.abs(joints - rec.joints3d).max() < 1e-9
            uv = rec.camera.project_np(joints)
            visible = rec.visibility
            assert np.abs(uv[visible] - rec.joints2d[visible]).max() < 1e-9
            assert np.all(rec.joints2d[~visible] == -1.0)  # sentinel

    def test_occluder_density_raises_occlusion(self):
        fracs = []
        for density in (0, 5, 14):
            cfg = resolve_config(overrides={**SMALL_WORLD, "world.frames": 2,
                                            "world.occluders": density,
                                            "annotate.iterations": 1,
                                            "annotate.population_cap": 2}, seed=2)
            assets, samplers = build_world_assets(cfg)
            records = synth_records(cfg, assets, samplers, plausibility_config(cfg), "h")
            fracs.append(float(np.mean([1.0 - r.visibility.mean() for r in records])))
        assert fracs[0] < fracs[1] < fracs[2], fracs

    def test_camera_ring_geometry(self):
        cfg = resolve_config(overrides=SMALL_WORLD)
        cams = make_cameras(cfg)
        assert len(cams) == cfg["world.cameras"]
        for cam in cams:
            pos = -cam.rotation.T @ cam.translation
            assert abs(np.linalg.norm(pos[:2]) - cfg["world.camera_radius"]) < 1e-6
            forward = cam.rotation[2]
            to_origin = -pos / np.linalg.norm(pos)
            assert forward @ to_origin > 0.99  # looks at the origin


class TestCli:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2
        capsys.readouterr()

    def test_unknown_flag_exits_2(self, capsys):
        assert main(["synth-data", "--out", "/tmp/x", "--bogus"]) == 2
        capsys.readouterr()

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        rc = main(["synth-data", "--out", str(tmp_path), "--set", "no.such.key=1"])
        assert rc == 2
        assert "error: config" in capsys.readouterr().err

    def test_malformed_dataset_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not json\n")
        rc = main(["train", "--dataset", str(bad), "--out", str(tmp_path / "run")])
        assert rc == 3
        assert "error: data" in capsys.readouterr().err

    def test_manifest_written_with_hashes(self, small_dataset):
        manifest = json.loads((small_dataset / "manifest.json").read_text())
        assert manifest["command"] == "synth-data"
        assert manifest["seed"] == 5
        assert str(small_dataset / "dataset.jsonl") in manifest["outputs"]
        assert len(manifest["config_hash"]) == 16

    def test_train_steps_zero_identity_checkpoint(self, small_dataset, tmp_path, capsys):
        run = tmp_path / "run0"
        rc = main(["train", "--dataset", str(small_dataset / "dataset.jsonl"),
                   "--out", str(run), "--seed", "5", "--steps", "0"])
        assert rc == 0
        capsys.readouterr()

        from ambiflow.training import load_model

        bundle = load_model(run / "checkpoint.json")
        z = np.random.default_rng(0).normal(size=(8, 218))
        psi, logdet = bundle.flow.forward(z, np.zeros(bundle.flow.config.cond_dim))
        assert np.array_equal(psi.data, z)
        assert np.all(logdet.data == 0.0)

        samples = tmp_path / "samples.jsonl"
        rc = main(["sample", "--checkpoint", str(run / "checkpoint.json"),
                   "--dataset", str(small_dataset / "dataset.jsonl"),
                   "--record", "0", "-n", "200", "--seed", "1", "--out", str(samples)])
        assert rc == 0
        capsys.readouterr()
        lines = samples.read_text().splitlines()
        meta = json.loads(lines[0])
        assert meta["format"] == "samples.v1" and meta["n"] == 200
        psis = np.array([json.loads(l)["psi"] for l in lines[1:]])
        zs = np.array([json.loads(l)["z"] for l in lines[1:]])
        normalized = bundle.norm.normalize(psis)
        assert np.abs(normalized - zs).max() < 1e-12  # identity flow: psi_norm == z
        pooled = normalized.reshape(-1)
        assert abs(pooled.mean()) < 0.02 and abs(pooled.std() - 1.0) < 0.02

    def test_eval_mmd_self_test_is_statistical_zero(self, small_dataset, tmp_path, capsys):
        out = tmp_path / "mmdrun"
        rc = main(["eval-mmd", "--dataset", str(small_dataset / "dataset.jsonl"),
                   "--out", str(out), "--seed", "5", "--split", "all"])
        assert rc == 0
        capsys.readouterr()
        rows = read_csv(out / "mmd.csv")
        for row in rows:
            assert row["mmd_self_global"] < 0.02
            assert row["mmd_self_rrr"] < 0.02
            assert row["mmd_self_rr"] < 0.02

    def test_select_views_and_report_roundtrip(self, small_dataset, tmp_path, capsys):
        out = tmp_path / "views"
        rc = main(["select-views", "--dataset", str(small_dataset / "dataset.jsonl"),
                   "--source", "annotations", "--out", str(out), "--seed", "5"])
        assert rc == 0
        rc = main(["report", "--run", str(out)])
        assert rc == 0
        capsys.readouterr()
        summary = read_csv(out / "summary.csv")
        recomputed = summarize_run(out)
        # report aggregates must match independently recomputed values
        by_key = {(r["file"], r["column"]): r for r in recomputed}
        checked = 0
        for row in summary:
            if row["file"] == "summary.csv":
                continue
            ref = by_key[(row["file"], row["column"])]
            for stat in ("mean", "min", "max"):
                assert abs(row[stat] - ref[stat]) < 1e-9
            checked += 1
        assert checked > 0
        assert (out / "view_scores.svg").exists()
        assert (out / "view_scores.svg").stat().st_size > 0

    def test_report_without_metrics_exits_3(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", "--run", str(empty)]) == 3
        capsys.readouterr()

    def test_gen_annotations_deterministic(self, small_dataset, tmp_path, capsys):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"regen_{tag}.jsonl"
            rc = main(["gen-annotations", "--dataset", str(small_dataset / "dataset.jsonl"),
                       "--assets", str(small_dataset / "assets.json"),
                       "--out", str(out), "--seed", "9",
                       "--set", "annotate.iterations=3",
                       "--set", "annotate.population_cap=10"])
            assert rc == 0
            outs.append(out.read_bytes())
        capsys.readouterr()
        assert outs[0] == outs[1]


class TestReportCsv:
    def test_float_cells_roundtrip_exactly(self, tmp_path):
        rows = [{"a": 0.1 + 0.2, "b": 1.0 / 3.0, "c": "x"}]
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b", "c"], rows)
        back = read_csv(path)
        assert back[0]["a"] == rows[0]["a"]
        assert back[0]["b"] == rows[0]["b"]
        assert back[0]["c"] == "x"
