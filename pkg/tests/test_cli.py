from __future__ import annotations

import json
import subprocess
import sys

import pytest

from uavtraj.cli import main


@pytest.fixture
def sim_dir(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "size_prior: {quadrotor: 0.3, fixed_wing: 1.2, hexacopter: 0.5}\n"
        "scenario: {duration: 90, sigma_uv: 0.5, sigma_h: 2.0, p_miss: 0.1}\n"
    )
    assert main(["simulate", "-c", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    return tmp_path, cfg


def test_simulate_outputs(sim_dir):
    root, _ = sim_dir
    names = {p.name for p in (root / "sim").iterdir()}
    assert {"detections.jsonl", "truth.csv", "labels.jsonl", "scores.jsonl", "truth_labels.jsonl"} <= names


def test_pipeline_equals_composition(sim_dir):
    root, cfg = sim_dir
    sim = root / "sim"
    c = ["-c", str(cfg)]
    assert main(["pipeline", *c, "--detections", str(sim / "detections.jsonl"), "--scores", str(sim / "scores.jsonl"),
                 "--labels", str(sim / "labels.jsonl"), "--out", str(root / "out")]) == 0
    assert main(["filter", *c, str(sim / "scores.jsonl"), "-o", str(root / "v.jsonl")]) == 0
    assert main(["fuse", *c, str(sim / "detections.jsonl"), "--verdicts", str(root / "v.jsonl"),
                 "-o", str(root / "f.jsonl")]) == 0
    assert main(["smooth", *c, str(root / "f.jsonl"), "-o", str(root / "t2.csv")]) == 0
    assert main(["classify", *c, str(sim / "labels.jsonl"), "--verdicts", str(root / "v.jsonl"),
                 "-o", str(root / "cl.jsonl")]) == 0
    assert main(["refine", *c, str(root / "f.jsonl"), "--labels", str(sim / "labels.jsonl"),
                 "-o", str(root / "t3.csv")]) == 0
    out = root / "out"
    for mine, theirs in [("v.jsonl", "verdicts.jsonl"), ("f.jsonl", "fused.jsonl"), ("t2.csv", "traj2d.csv"),
                         ("cl.jsonl", "cliplabels.jsonl"), ("t3.csv", "traj3d.csv")]:
        assert (root / mine).read_bytes() == (out / theirs).read_bytes(), mine
    meta = json.loads((root / "t3.csv.meta.json").read_text())
    assert meta["config"]["size_prior"]["quadrotor"] == 0.3


def test_refine_from_traj2d_matches_fused(sim_dir):
    root, cfg = sim_dir
    sim = root / "sim"
    c = ["-c", str(cfg), "--labels", str(sim / "labels.jsonl")]
    main(["fuse", str(sim / "detections.jsonl"), "-o", str(root / "f.jsonl")])
    main(["smooth", str(root / "f.jsonl"), "-o", str(root / "t2.csv")])
    assert main(["refine", *c, str(root / "f.jsonl"), "-o", str(root / "a.csv")]) == 0
    assert main(["refine", *c, str(root / "t2.csv"), "-o", str(root / "b.csv")]) == 0
    assert (root / "a.csv").read_bytes() == (root / "b.csv").read_bytes()


def test_eval_identical_is_zero(sim_dir, capsys):
    root, _ = sim_dir
    truth = root / "sim" / "truth.csv"
    assert main(["eval", str(truth), str(truth), "-o", str(root / "m.json")]) == 0
    m = json.loads((root / "m.json").read_text())["overall"]
    assert m["e3d"] == m["rmse"] == m["D_x"] == m["D_y"] == m["D_z"] == 0.0
    assert "rmse" in capsys.readouterr().out


def test_noise_free_pipeline_below_tolerance(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("size_prior: {quadrotor: 0.3}\nscenario: {label_accuracy: 1.0}\n")
    assert main(["simulate", "-c", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    sim = tmp_path / "sim"
    assert main(["pipeline", "-c", str(cfg), "--detections", str(sim / "detections.jsonl"),
                 "--labels", str(sim / "labels.jsonl"), "--out", str(tmp_path / "out")]) == 0
    assert main(["eval", str(tmp_path / "out" / "traj3d.csv"), str(sim / "truth.csv"),
                 "--cliplabels", str(tmp_path / "out" / "cliplabels.jsonl"),
                 "--truth-labels", str(sim / "truth_labels.jsonl"), "-o", str(tmp_path / "m.json")]) == 0
    m = json.loads((tmp_path / "m.json").read_text())["overall"]
    assert m["rmse"] < 1e-2 and m["clip_accuracy"] == 1.0


def test_empty_detections(tmp_path):
    (tmp_path / "d.jsonl").write_text("")
    assert main(["fuse", str(tmp_path / "d.jsonl"), "-o", str(tmp_path / "f.jsonl")]) == 0
    assert (tmp_path / "f.jsonl").read_text() == ""


def test_malformed_detection_exits_nonzero(tmp_path, caplog):
    (tmp_path / "d.jsonl").write_text('{"clip_id": "c"\n')
    assert main(["fuse", str(tmp_path / "d.jsonl"), "-o", str(tmp_path / "f.jsonl")]) == 1
    assert f"{tmp_path / 'd.jsonl'}:1:" in caplog.text
    assert not (tmp_path / "f.jsonl").exists()


def test_malformed_scores_skipped_and_recorded(tmp_path):
    good = {"clip_id": "c", "frame": 0,
            "scores": {"drone_sky": 0.9, "no_drone": 0.2, "static_view": 0.7, "dynamic_view": 0.3}}
    missing = {"clip_id": "c", "frame": 1, "scores": {"drone_sky": 0.9}}
    (tmp_path / "s.jsonl").write_text(json.dumps(good) + "\n" + json.dumps(missing) + "\nnope\n")
    assert main(["filter", str(tmp_path / "s.jsonl"), "-o", str(tmp_path / "v.jsonl")]) == 0
    meta = json.loads((tmp_path / "v.jsonl.meta.json").read_text())
    assert len(meta["malformed"]) == 2 and "no_drone" in meta["malformed"][0]
    (v,) = [json.loads(line) for line in (tmp_path / "v.jsonl").read_text().splitlines()]
    assert v["total_frames"] == 1 and v["decision"] == "accept"


def test_missing_size_prior_names_field(sim_dir, caplog):
    root, _ = sim_dir
    sim = root / "sim"
    main(["fuse", str(sim / "detections.jsonl"), "-o", str(root / "f.jsonl")])
    assert main(["refine", str(root / "f.jsonl"), "-o", str(root / "t.csv")]) == 1
    assert "refine.H_real" in caplog.text


def test_unknown_config_key(tmp_path, caplog):
    (tmp_path / "c.yaml").write_text("fusion: {tau_prim: 0.5}\n")
    (tmp_path / "d.jsonl").write_text("")
    assert main(["fuse", "-c", str(tmp_path / "c.yaml"), str(tmp_path / "d.jsonl"), "-o", "-"]) == 1
    assert "fusion.tau_prim" in caplog.text


def test_sweep_cli(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: {duration: 30, sigma_uv: 0.5, sigma_h: 3.0}\n")
    assert main(["sweep", "-c", str(cfg), "--grid", "0.5,1", "-o", str(tmp_path / "s.csv")]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "gamma_q_z,gamma_r_h,depth_error" and len(lines) == 5


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "uavtraj", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "uavtraj" in r.stdout
