"""Record formats: JSONL inputs/outputs, trajectory CSVs, atomic writes.

Image coordinates throughout are ``(u, v) = (column, row)``, origin at the
top-left pixel. Boxes are ``[x, y, w, h]`` with ``(x, y)`` the box center;
detection records may instead carry ``"box_xyxy": [x1, y1, x2, y2]`` corners.

Floats are written with ``repr`` so files round-trip exactly and stay
byte-identical across runs.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

import numpy as np

from .camera import BoundingBox, RigidTransform, apply_transform
from .classification import ClipLabel, FrameLabel
from .errors import FormatError, PipelineError
from .filtering import ClipVerdict, ScoreRecord
from .fusion import Detection, FusedObservation
from .refine import Trajectory3D
from .smoothing import Trajectory2D

log = logging.getLogger(__name__)

TRAJ3D_COLUMNS = ["frame", "X", "Y", "Z", "Vx", "Vy", "Vz", "z_raw"]
WORLD_COLUMNS = ["Xw", "Yw", "Zw"]
TRAJ2D_COLUMNS = ["frame", "u", "v", "h", "u_smooth", "v_smooth"]
SWEEP_COLUMNS = ["gamma_q_z", "gamma_r_h", "depth_error"]


# -- writing ---------------------------------------------------------------

def _fmt(x: float) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


@contextmanager
def atomic_writer(path: str | Path) -> Iterator[io.TextIOBase]:
    """Write to a temp file beside ``path`` and rename on success. ``"-"`` means stdout."""
    if str(path) == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with atomic_writer(path) as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=False, allow_nan=False) + "\n")


def write_json(path: str | Path, obj: Any) -> None:
    with atomic_writer(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path: str | Path, header: list[str], rows: Iterable[list]) -> None:
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(c) if isinstance(c, (float, np.floating)) else c for c in row])


# -- reading ---------------------------------------------------------------

def _lines(path: str | Path) -> Iterator[tuple[int, str]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot open: {exc.strerror}", str(path)) from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line


def _parse_lines(path, parse: Callable[[dict], Any], lenient: bool = False):
    """Parse a JSONL file record by record.

    Strict mode raises on the first bad line; lenient mode logs it, keeps
    the :class:`FormatError` and moves on.
    """
    out, errors = [], []
    for lineno, line in _lines(path):
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("record must be a JSON object")
            out.append(parse(obj))
            continue
        except json.JSONDecodeError as exc:
            err = FormatError(f"invalid JSON: {exc.msg}", str(path), lineno)
        except (KeyError, TypeError, ValueError, PipelineError) as exc:
            err = FormatError(_describe(exc), str(path), lineno)
        if not lenient:
            raise err
        errors.append(err)
        log.warning("%s", err)
    return out, errors


def _describe(exc: Exception) -> str:
    if isinstance(exc, KeyError):
        return f"missing field {exc.args[0]!r}"
    return str(exc)


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ValueError(f"expected an integer frame index, got {v!r}")
    return int(v)


def _num(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    x = float(v)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite number, got {v!r}")
    return x


def _box(values) -> list[float]:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise ValueError("box must be a list of four numbers")
    return [_num(v) for v in values]


def parse_detection(obj: dict) -> Detection:
    if "box" in obj:
        box = BoundingBox(*_box(obj["box"]))
    elif "box_xyxy" in obj:
        box = BoundingBox.from_corners(*_box(obj["box_xyxy"]))
    else:
        raise KeyError("box")
    return Detection(_int(obj["frame"]), str(obj["expert"]), box, _num(obj["conf"]), str(obj["clip_id"]))


def detection_record(d: Detection) -> dict:
    return {"clip_id": d.clip_id, "frame": d.frame, "expert": d.expert_id, "box": list(d.box.as_tuple()),
            "conf": d.confidence}


def parse_fused(obj: dict) -> FusedObservation:
    return FusedObservation(
        frame=_int(obj["frame"]),
        box=BoundingBox(*_box(obj["box"])),
        support=_int(obj["support"]),
        score=_num(obj["score"]),
        experts=tuple(str(e) for e in obj.get("experts", ())),
        clip_id=str(obj["clip_id"]),
    )


def fused_record(f: FusedObservation) -> dict:
    return {"clip_id": f.clip_id, "frame": f.frame, "box": list(f.box.as_tuple()), "support": f.support,
            "score": f.score, "experts": list(f.experts)}


def parse_score(obj: dict) -> ScoreRecord:
    scores = obj["scores"]
    if not isinstance(scores, dict) or not scores:
        raise ValueError("scores must be a non-empty object")
    return ScoreRecord(str(obj["clip_id"]), _int(obj["frame"]), {str(k): _num(v) for k, v in scores.items()})


def score_record(s: ScoreRecord) -> dict:
    return {"clip_id": s.clip_id, "frame": s.frame, "scores": dict(s.prompt_scores)}


def parse_label(obj: dict) -> FrameLabel:
    return FrameLabel(_int(obj["frame"]), str(obj["label"]), _num(obj["confidence"]), str(obj["clip_id"]))


def label_record(fl: FrameLabel) -> dict:
    return {"clip_id": fl.clip_id, "frame": fl.frame, "label": fl.label, "confidence": fl.confidence}


def verdict_record(v: ClipVerdict) -> dict:
    return {"clip_id": v.clip_id, "decision": v.decision, "video_relevance": v.video_relevance,
            "static_confidence": v.static_confidence, "retained_frames": v.retained_frames,
            "total_frames": v.total_frames, "passes_visibility": v.passes_visibility}


def parse_verdict(obj: dict) -> ClipVerdict:
    decision = obj["decision"]
    if decision not in ("accept", "reject"):
        raise ValueError(f"decision must be 'accept' or 'reject', got {decision!r}")
    return ClipVerdict(str(obj["clip_id"]), _num(obj["video_relevance"]), _num(obj["static_confidence"]),
                       decision, _int(obj["retained_frames"]), _int(obj.get("total_frames", 0)),
                       bool(obj.get("passes_visibility", False)))


def clip_label_record(clip_id: str, segment: int, frames: list[int], cl: ClipLabel) -> dict:
    return {"clip_id": clip_id, "segment": segment, "start_frame": min(frames), "end_frame": max(frames),
            "label": cl.label, "confidence": cl.confidence, "status": cl.status, "agreement": cl.agreement,
            "n_labels": cl.n_labels}


def parse_clip_label(obj: dict) -> tuple[str, int, ClipLabel]:
    status = obj["status"]
    if status not in ("confirmed", "uncertain"):
        raise ValueError(f"status must be 'confirmed' or 'uncertain', got {status!r}")
    cl = ClipLabel(str(obj["label"]), _num(obj["confidence"]), status, _num(obj["agreement"]),
                   _int(obj.get("n_labels", 0)))
    return str(obj["clip_id"]), _int(obj["segment"]), cl


def parse_truth_label(obj: dict) -> tuple[str, int | None, str]:
    seg = obj.get("segment")
    return str(obj["clip_id"]), None if seg is None else _int(seg), str(obj["label"])


def read_detections(path) -> list[Detection]:
    return _parse_lines(path, parse_detection)[0]


def read_fused(path) -> list[FusedObservation]:
    return _parse_lines(path, parse_fused)[0]


def read_scores(path) -> tuple[list[ScoreRecord], list[FormatError]]:
    """Lenient: malformed lines are logged, collected and skipped."""
    return _parse_lines(path, parse_score, lenient=True)


def read_labels(path) -> list[FrameLabel]:
    return _parse_lines(path, parse_label)[0]


def read_verdicts(path) -> list[ClipVerdict]:
    return _parse_lines(path, parse_verdict)[0]


def read_clip_labels(path) -> list[tuple[str, int, ClipLabel]]:
    return _parse_lines(path, parse_clip_label)[0]


def read_truth_labels(path) -> list[tuple[str, int | None, str]]:
    return _parse_lines(path, parse_truth_label)[0]


def read_prompt_manifest(path) -> dict:
    """Prompt manifest sidecar (JSON or YAML): ``{prompt_id: {text, role}}``."""
    import yaml

    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"cannot open: {exc.strerror}", str(path)) from exc
    except yaml.YAMLError as exc:
        raise FormatError(str(exc), str(path)) from exc
    if not isinstance(data, dict):
        raise FormatError("prompt manifest must map prompt ids to {text, role}", str(path))
    return data


# -- CSV trajectories ------------------------------------------------------

def _read_csv(path, required: list[str]) -> tuple[list[str], list[tuple[int, dict]]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot open: {exc.strerror}", str(path)) from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"missing column(s) {', '.join(missing)}", str(path), 1)
        return header, [(i, row) for i, row in enumerate(reader, 2)]


def _cell(row: dict, key: str, path, lineno: int, allow_empty: bool = False) -> float:
    raw = row.get(key)
    if raw is None:
        raise FormatError(f"row has too few columns (no {key!r})", str(path), lineno)
    if raw.strip() == "":
        if allow_empty:
            return float("nan")
        raise FormatError(f"empty value for {key!r}", str(path), lineno)
    try:
        return float(raw)
    except ValueError:
        raise FormatError(f"non-numeric {key!r}: {raw!r}", str(path), lineno) from None


def _grouped(rows: list[tuple[int, dict]], has_clip: bool) -> dict[str, list[tuple[int, dict]]]:
    groups: dict[str, list[tuple[int, dict]]] = {}
    for lineno, row in rows:
        groups.setdefault(row["clip_id"] if has_clip else "", []).append((lineno, row))
    return groups


def _frame(row, path, lineno) -> int:
    v = _cell(row, "frame", path, lineno)
    if v != int(v):
        raise FormatError(f"frame must be an integer, got {row['frame']!r}", str(path), lineno)
    return int(v)


def write_traj3d(path, trajs: Iterable[Trajectory3D], transform: RigidTransform | None = None) -> None:
    header = ["clip_id"] + TRAJ3D_COLUMNS + (WORLD_COLUMNS if transform is not None else [])

    def rows():
        for tr in trajs:
            for i, f in enumerate(tr.frames):
                row = [tr.clip_id, int(f), *map(float, tr.positions[i]), *map(float, tr.velocities[i]),
                       float(tr.raw_depths[i])]
                if transform is not None:
                    row += [float(c) for c in apply_transform(tr.positions[i], transform)]
                yield row

    write_csv(path, header, rows())


def read_traj3d(path, world: bool = False) -> dict[str, Trajectory3D]:
    """Read ``[clip_id,]frame,X,Y,Z[,Vx,Vy,Vz,z_raw][,Xw,Yw,Zw]``.

    With ``world=True`` the positions come from the ``Xw,Yw,Zw`` columns.
    Velocity and raw-depth columns are optional (NaN when absent).
    """
    pos_cols = WORLD_COLUMNS if world else ["X", "Y", "Z"]
    header, rows = _read_csv(path, ["frame"] + pos_cols)
    has_clip = "clip_id" in header
    out = {}
    for clip, group in _grouped(rows, has_clip).items():
        frames, pos, vel, raw = [], [], [], []
        for lineno, row in group:
            frames.append(_frame(row, path, lineno))
            pos.append([_cell(row, c, path, lineno) for c in pos_cols])
            vel.append([_cell(row, c, path, lineno, True) if c in header else math.nan for c in ("Vx", "Vy", "Vz")])
            raw.append(_cell(row, "z_raw", path, lineno, True) if "z_raw" in header else math.nan)
        order = np.argsort(frames, kind="stable")
        frames_arr = np.asarray(frames)[order]
        if np.any(np.diff(frames_arr) == 0):
            raise FormatError(f"duplicate frame in clip {clip!r}", str(path))
        out[clip] = Trajectory3D(frames_arr, np.asarray(pos)[order], np.asarray(vel)[order],
                                 np.asarray(raw)[order], clip)
    return out


def write_traj2d(path, trajs: Iterable[Trajectory2D]) -> None:
    def rows():
        for tr in trajs:
            sm = tr.smoothed if tr.smoothed is not None else tr.points
            hs = tr.heights if tr.heights is not None else np.full(len(tr), np.nan)
            for i, f in enumerate(tr.frames):
                yield [tr.clip_id, int(f), float(tr.points[i, 0]), float(tr.points[i, 1]), float(hs[i]),
                       float(sm[i, 0]), float(sm[i, 1])]

    write_csv(path, ["clip_id"] + TRAJ2D_COLUMNS, rows())


def read_traj2d(path) -> dict[str, Trajectory2D]:
    header, rows = _read_csv(path, TRAJ2D_COLUMNS)
    has_clip = "clip_id" in header
    out = {}
    for clip, group in _grouped(rows, has_clip).items():
        frames, pts, sm, hs = [], [], [], []
        for lineno, row in group:
            frames.append(_frame(row, path, lineno))
            pts.append([_cell(row, "u", path, lineno), _cell(row, "v", path, lineno)])
            hs.append(_cell(row, "h", path, lineno))
            sm.append([_cell(row, "u_smooth", path, lineno), _cell(row, "v_smooth", path, lineno)])
        try:
            out[clip] = Trajectory2D(frames, pts, sm, hs, clip)
        except PipelineError as exc:
            raise FormatError(f"clip {clip!r}: {exc}", str(path)) from None
    return out


def write_sweep(path, rows: Iterable[tuple[float, float, float]]) -> None:
    write_csv(path, SWEEP_COLUMNS, ([float(a), float(b), float(e)] for a, b, e in rows))
