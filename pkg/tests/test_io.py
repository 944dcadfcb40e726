from __future__ import annotations

import json
import math

import numpy as np
import pytest

from uavtraj import io as rio
from uavtraj.config import PipelineConfig
from uavtraj.errors import ConfigError, FormatError
from uavtraj.refine import Trajectory3D
from uavtraj.sim import Scenario, generate


def test_detection_roundtrip(tmp_path):
    dets = generate(Scenario(duration=5, sigma_uv=1.0)).detections
    p = tmp_path / "d.jsonl"
    rio.write_jsonl(p, (rio.detection_record(d) for d in dets))
    assert rio.read_detections(p) == dets


def test_corner_boxes_accepted(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps({"clip_id": "c", "frame": 0, "expert": "e", "box_xyxy": [0, 0, 4, 2], "conf": 1}) + "\n")
    (d,) = rio.read_detections(p)
    assert (d.box.x, d.box.y, d.box.w, d.box.h) == (2.0, 1.0, 4.0, 2.0)


def test_parse_error_names_file_and_line(tmp_path):
    p = tmp_path / "d.jsonl"
    good = json.dumps({"clip_id": "c", "frame": 0, "expert": "e", "box": [1, 1, 2, 2], "conf": 0.5})
    p.write_text(good + "\n\n" + '{"clip_id": "c", "frame": 1}\n')
    with pytest.raises(FormatError) as exc:
        rio.read_detections(p)
    assert str(exc.value).startswith(f"{p}:3:")


def test_scores_are_lenient(tmp_path):
    p = tmp_path / "s.jsonl"
    rows = [
        json.dumps({"clip_id": "c", "frame": 0, "scores": {"a": 0.5}}),
        "{not json",
        json.dumps({"clip_id": "c", "frame": 2, "scores": {"a": "high"}}),
        json.dumps({"clip_id": "c", "frame": 3, "scores": {"a": 0.1}}),
    ]
    p.write_text("\n".join(rows) + "\n")
    records, errors = rio.read_scores(p)
    assert [r.frame for r in records] == [0, 3]
    assert [e.line for e in errors] == [2, 3]


def test_traj3d_roundtrip_exact(tmp_path):
    rng = np.random.Generator(np.random.PCG64(0))
    pos = rng.normal(size=(7, 3))
    raw = pos[:, 2].copy()
    raw[3] = np.nan
    tr = Trajectory3D(np.arange(10, 17), pos, rng.normal(size=(7, 3)), raw, "clipA")
    p = tmp_path / "t.csv"
    rio.write_traj3d(p, [tr])
    back = rio.read_traj3d(p)["clipA"]
    np.testing.assert_array_equal(back.positions, pos)
    assert math.isnan(back.raw_depths[3])


def test_traj3d_without_clip_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("frame,X,Y,Z\n1,0,0,5\n0,0,0,4\n")
    tr = rio.read_traj3d(p)[""]
    np.testing.assert_array_equal(tr.frames, [0, 1])
    assert np.isnan(tr.velocities).all()


def test_traj3d_bad_cell(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("frame,X,Y,Z\n0,0,0,4\n1,0,x,5\n")
    with pytest.raises(FormatError, match=r":3: non-numeric 'Y'"):
        rio.read_traj3d(p)


def test_atomic_write_leaves_no_partial(tmp_path):
    p = tmp_path / "out.jsonl"
    p.write_text("old\n")

    def rows():
        yield {"a": 1}
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        rio.write_jsonl(p, rows())
    assert p.read_text() == "old\n"
    assert list(tmp_path.iterdir()) == [p]


def test_config_defaults_and_overrides(tmp_path):
    cfg = PipelineConfig()
    assert cfg.section("filter") == {"tau": 0.3, "relevance": 0.7, "static": 0.3}
    assert cfg.noise(0.3).dt == pytest.approx(1 / 30)
    p = tmp_path / "c.yaml"
    p.write_text("fusion: {tau_prime: 0.4}\nsize_prior: {quadrotor: 0.3}\n")
    cfg = PipelineConfig.load(p)
    assert cfg.section("fusion")["tau_prime"] == 0.4
    assert cfg.section("classify")["window"] == 5
    assert cfg.size_priors[0].H_real == 0.3


def test_config_errors_name_the_field(tmp_path):
    with pytest.raises(ConfigError, match="fusion.tau"):
        PipelineConfig.from_mapping({"fusion": {"tau": 0.4}})
    with pytest.raises(ConfigError, match="extrinsic.translation"):
        PipelineConfig.from_mapping({"extrinsic": {"rotation": np.eye(3).tolist()}})
    with pytest.raises(ConfigError, match="schema_version"):
        PipelineConfig.from_mapping({"schema_version": 9})
