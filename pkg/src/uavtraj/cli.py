"""Command-line entry point: one subcommand per stage plus the full pipeline.

Data go to the named output files (``-`` for stdout); logs go to stderr.
Every data file gets a ``<name>.meta.json`` sidecar holding the command,
the effective configuration and a timestamp, so the data files themselves
stay byte-identical across reruns.

Exit status: 0 on success, 1 on any pipeline error (bad input, bad config),
2 on bad command-line usage.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from . import io as rio
from .camera import CameraIntrinsics
from .classification import accuracy
from .config import PipelineConfig
from .errors import ConfigError, PipelineError, UsageError
from .filtering import PromptManifest, run_filter, score_frame
from .pipeline import (
    by_clip,
    classify_clip,
    fuse_clips,
    refine_observations,
    resolve_height,
    smooth_fused,
)
from .refine import refine_track
from .sim import Scenario, e3d, generate, metrics_from_pairs, sweep

log = logging.getLogger("uavtraj")

DEFAULT_GRID = (0.5, 0.8, 1.0, 1.5, 2.0)


# -- helpers ---------------------------------------------------------------

def _meta(path, command: str, cfg: PipelineConfig, extra: dict | None = None) -> None:
    if str(path) == "-":
        return
    meta = {
        "command": command,
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": cfg.to_dict(),
    }
    if extra:
        meta.update(extra)
    rio.write_json(f"{path}.meta.json", meta)


def _manifest(cfg: PipelineConfig, path: str | None) -> PromptManifest:
    if path is None:
        return cfg.manifest
    try:
        return PromptManifest(rio.read_prompt_manifest(path))
    except PipelineError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _accepted(verdicts_path: str | None) -> set[str] | None:
    if verdicts_path is None:
        return None
    return {v.clip_id for v in rio.read_verdicts(verdicts_path) if v.accepted}


def _read_scores(path, manifest: PromptManifest, tau: float):
    def parse(obj):
        rec = rio.parse_score(obj)
        score_frame(rec, manifest, tau)  # raises FormatError naming a missing prompt
        return rec

    return rio._parse_lines(path, parse, lenient=True)


def _filter(cfg: PipelineConfig, scores_path, prompts_path):
    manifest = _manifest(cfg, prompts_path)
    f = cfg.section("filter")
    records, errors = _read_scores(scores_path, manifest, float(f["tau"]))
    verdicts = run_filter(records, manifest, float(f["tau"]), float(f["relevance"]), float(f["static"]))
    return verdicts, errors


def _fused_by_clip(cfg, detections_path, accepted):
    dets = rio.read_detections(detections_path)
    if accepted is not None:
        dets = [d for d in dets if d.clip_id in accepted]
    return fuse_clips(dets, cfg)


def _labels_by_clip(path) -> dict[str, list]:
    return by_clip(rio.read_labels(path)) if path else {}


def _clip_label_rows(cfg, labels_by_clip, accepted=None):
    rows = []
    for clip in sorted(labels_by_clip):
        if accepted is not None and clip not in accepted:
            continue
        for k, (segment, cl) in enumerate(classify_clip(labels_by_clip[clip], cfg)):
            rows.append(rio.clip_label_record(clip, k, [fl.frame for fl in segment], cl))
    return rows


def _refine_all(cfg, fused_by_clip, traj2d_by_clip, labels_by_clip):
    out = []
    for clip in sorted(fused_by_clip):
        fused = fused_by_clip[clip]
        if not fused:
            log.warning("clip %s: no fused observations, nothing to refine", clip)
            continue
        H_real = resolve_height(cfg, labels_by_clip.get(clip), clip)
        out.append(refine_observations(fused, traj2d_by_clip.get(clip), cfg, H_real, clip))
    return out


# -- subcommands -----------------------------------------------------------

def cmd_filter(args, cfg) -> int:
    verdicts, errors = _filter(cfg, args.scores, args.prompts)
    rio.write_jsonl(args.output, (rio.verdict_record(v) for v in verdicts))
    _meta(args.output, "filter", cfg, {"malformed": [str(e) for e in errors]})
    log.info("%d clips, %d accepted, %d malformed lines", len(verdicts),
             sum(v.accepted for v in verdicts), len(errors))
    return 0


def cmd_fuse(args, cfg) -> int:
    fused = _fused_by_clip(cfg, args.detections, _accepted(args.verdicts))
    rows = [rio.fused_record(fused[c][f]) for c in sorted(fused) for f in sorted(fused[c])]
    rio.write_jsonl(args.output, rows)
    _meta(args.output, "fuse", cfg)
    log.info("%d fused observations over %d clips", len(rows), len(fused))
    return 0


def _fused_from_file(path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for f in rio.read_fused(path):
        clip = out.setdefault(f.clip_id, {})
        if f.frame in clip:
            raise UsageError(f"{path}: duplicate fused observation for clip {f.clip_id!r} frame {f.frame}")
        clip[f.frame] = f
    return out


def cmd_smooth(args, cfg) -> int:
    fused = _fused_from_file(args.fused)
    trajs = [smooth_fused(fused[c], cfg, c) for c in sorted(fused) if fused[c]]
    rio.write_traj2d(args.output, trajs)
    _meta(args.output, "smooth", cfg)
    return 0


def cmd_classify(args, cfg) -> int:
    rows = _clip_label_rows(cfg, _labels_by_clip(args.labels), _accepted(args.verdicts))
    rio.write_jsonl(args.output, rows)
    _meta(args.output, "classify", cfg)
    return 0


def _obs_from_traj2d(tr, use_smoothed: bool) -> dict[int, tuple[float, float, float]]:
    pts = tr.smoothed if use_smoothed else tr.points
    return {int(f): (float(pts[i, 0]), float(pts[i, 1]), float(tr.heights[i])) for i, f in enumerate(tr.frames)}


def cmd_refine(args, cfg) -> int:
    labels = _labels_by_clip(args.labels)
    src = Path(args.input)
    if src.suffix == ".csv":
        trajs = []
        for clip, tr in sorted(rio.read_traj2d(src).items()):
            H_real = resolve_height(cfg, labels.get(clip), clip)
            obs = _obs_from_traj2d(tr, bool(cfg.section("refine")["smoothed_uv"]))
            trajs.append(refine_track(obs, cfg.intrinsics, cfg.noise(H_real), clip_id=clip))
    else:
        fused = _fused_from_file(src)
        smoothed = {c: smooth_fused(fused[c], cfg, c) for c in fused if fused[c]}
        trajs = _refine_all(cfg, fused, smoothed, labels)
    rio.write_traj3d(args.output, trajs, cfg.extrinsic)
    _meta(args.output, "refine", cfg)
    return 0


def cmd_pipeline(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    accepted = None
    extra: dict = {"inputs": {k: getattr(args, k) for k in ("detections", "scores", "labels", "prompts")}}
    if args.scores:
        verdicts, errors = _filter(cfg, args.scores, args.prompts)
        rio.write_jsonl(out / "verdicts.jsonl", (rio.verdict_record(v) for v in verdicts))
        extra["malformed"] = [str(e) for e in errors]
        if cfg.section("pipeline")["drop_rejected"]:
            accepted = {v.clip_id for v in verdicts if v.accepted}

    fused = _fused_by_clip(cfg, args.detections, accepted)
    rio.write_jsonl(out / "fused.jsonl",
                    (rio.fused_record(fused[c][f]) for c in sorted(fused) for f in sorted(fused[c])))
    smoothed = {c: smooth_fused(fused[c], cfg, c) for c in sorted(fused) if fused[c]}
    rio.write_traj2d(out / "traj2d.csv", [smoothed[c] for c in sorted(smoothed)])

    labels = _labels_by_clip(args.labels)
    if args.labels:
        rio.write_jsonl(out / "cliplabels.jsonl", _clip_label_rows(cfg, labels, accepted))

    trajs = _refine_all(cfg, fused, smoothed, labels)
    rio.write_traj3d(out / "traj3d.csv", trajs, cfg.extrinsic)
    rio.write_json(out / "config.json", cfg.to_dict())
    _meta(out / "pipeline", "pipeline", cfg, extra)
    log.info("pipeline: %d clips refined into %s", len(trajs), out)
    return 0


def _scenario(cfg: PipelineConfig, overrides: dict | None = None) -> Scenario:
    spec = dict(cfg.section("scenario") or {})
    spec.update(overrides or {})
    known = {f.name for f in fields(Scenario)}
    unknown = sorted(set(spec) - known)
    if unknown:
        raise ConfigError(f"unknown scenario field(s): {', '.join('scenario.' + u for u in unknown)}")
    spec.setdefault("intrinsics", cfg.intrinsics)
    if isinstance(spec["intrinsics"], dict):
        k = spec["intrinsics"]
        spec["intrinsics"] = CameraIntrinsics(float(k["f_x"]), float(k["f_y"]), float(k["c_x"]), float(k["c_y"]))
    for key in ("start", "velocity", "amplitude", "categories", "expert_p_miss"):
        if spec.get(key) is not None:
            spec[key] = tuple(spec[key])
    if spec.get("segments"):
        spec["segments"] = tuple((int(f), tuple(v)) for f, v in spec["segments"])
    try:
        return Scenario(**spec)
    except TypeError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def cmd_simulate(args, cfg) -> int:
    overrides = {"seed": args.seed} if args.seed is not None else None
    scn = _scenario(cfg, overrides)
    sim = generate(scn)
    out = Path(args.out)
    rio.write_jsonl(out / "detections.jsonl", (rio.detection_record(d) for d in sim.detections))
    rio.write_traj3d(out / "truth.csv", [sim.truth])
    rio.write_jsonl(out / "labels.jsonl", (rio.label_record(fl) for fl in sim.labels))
    rio.write_jsonl(out / "scores.jsonl", (rio.score_record(s) for s in sim.scores))
    rio.write_jsonl(out / "truth_labels.jsonl", [{"clip_id": scn.clip_id, "label": scn.category}])
    _meta(out / "simulate", "simulate", cfg, {"scenario": {f.name: getattr(scn, f.name) for f in fields(Scenario)}})
    return 0


def _parse_grid(text: str | None, section: dict) -> list[tuple[float, float]]:
    if text:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--grid must be comma-separated numbers, got {text!r}") from None
        gq = gr = values
    else:
        gq = [float(v) for v in section.get("gamma_q_z", DEFAULT_GRID)]
        gr = [float(v) for v in section.get("gamma_r_h", DEFAULT_GRID)]
    return [(a, b) for a in gq for b in gr]


def cmd_sweep(args, cfg) -> int:
    section = cfg.section("sweep") or {}
    grid = _parse_grid(args.grid, section)
    repeats = args.repeats if args.repeats is not None else int(section.get("repeats", 1))
    rows = sweep(_scenario(cfg), grid, cfg, repeats=repeats)
    rio.write_sweep(args.output, rows)
    _meta(args.output, "sweep", cfg, {"repeats": repeats})
    return 0


def cmd_eval(args, cfg) -> int:
    est = rio.read_traj3d(args.trajectory, world=args.frame == "world")
    truth = rio.read_traj3d(args.truth)
    pairs_e, pairs_t, per_clip = [], [], {}
    for clip in sorted(set(est) & set(truth)):
        common, ie, it = np.intersect1d(est[clip].frames, truth[clip].frames, return_indices=True)
        if common.size == 0:
            continue
        pairs_e.append(est[clip].positions[ie])
        pairs_t.append(truth[clip].positions[it])
        per_clip[clip] = e3d(est[clip], truth[clip]).as_dict()
    if not pairs_e:
        raise UsageError("trajectory and truth share no (clip_id, frame) pairs")

    clip_acc = None
    if args.cliplabels or args.truth_labels:
        if not (args.cliplabels and args.truth_labels):
            raise UsageError("--cliplabels and --truth-labels must be given together")
        clip_acc = _clip_accuracy(args.cliplabels, args.truth_labels)

    m = metrics_from_pairs(np.concatenate(pairs_e), np.concatenate(pairs_t), clip_acc)
    report = {"overall": m.as_dict(), "clips": per_clip}
    if args.output:
        rio.write_json(args.output, report)
    lines = [
        f"frames evaluated : {m.n_frames}",
        f"e3d (mean ||d||^2): {m.e3d:.6g} m^2",
        f"rmse             : {m.rmse:.6g} m",
        f"D_x / D_y / D_z  : {m.D_x:.6g} / {m.D_y:.6g} / {m.D_z:.6g} m",
    ]
    if clip_acc is not None:
        lines.append(f"clip accuracy    : {clip_acc:.4f}")
    print("\n".join(lines))
    return 0


def _clip_accuracy(cliplabels_path, truth_path) -> float:
    preds = rio.read_clip_labels(cliplabels_path)
    truth = rio.read_truth_labels(truth_path)
    by_clip_label = {c: lab for c, seg, lab in truth if seg is None}
    by_segment = {(c, seg): lab for c, seg, lab in truth if seg is not None}
    predicted, expected = [], []
    for clip, seg, cl in preds:
        lab = by_segment.get((clip, seg), by_clip_label.get(clip))
        if lab is None:
            raise UsageError(f"no truth label for clip {clip!r} segment {seg}")
        predicted.append(cl)
        expected.append(lab)
    return accuracy(predicted, expected)


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavtraj", description="3D UAV trajectories from multi-expert detections.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML pipeline configuration")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("filter", parents=[common], help="accept/reject clips from prompt scores")
    s.add_argument("scores")
    s.add_argument("--prompts", help="prompt manifest (YAML/JSON); defaults to the config's prompts")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("fuse", parents=[common], help="fuse multi-expert detections per frame")
    s.add_argument("detections")
    s.add_argument("--verdicts", help="only fuse clips accepted in this verdicts file")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("smooth", parents=[common], help="B-spline smoothing of fused barycenters")
    s.add_argument("fused")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_smooth)

    s = sub.add_parser("classify", parents=[common], help="clip-level labels by majority vote")
    s.add_argument("labels")
    s.add_argument("--verdicts", help="only classify clips accepted in this verdicts file")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("refine", parents=[common], help="EKF refinement to 3D trajectories")
    s.add_argument("input", help="fused.jsonl or traj2d.csv")
    s.add_argument("--labels", help="frame labels used to pick the size prior")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("pipeline", parents=[common], help="run every stage into an output directory")
    s.add_argument("--detections", required=True)
    s.add_argument("--scores")
    s.add_argument("--prompts")
    s.add_argument("--labels")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="noise-scale sensitivity grid on a scenario")
    s.add_argument("--grid", help="comma-separated gamma values used on both axes")
    s.add_argument("--repeats", type=int)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("eval", parents=[common], help="compare a trajectory CSV against ground truth")
    s.add_argument("trajectory")
    s.add_argument("truth")
    s.add_argument("--frame", choices=("camera", "world"), default="camera",
                   help="world: use the Xw,Yw,Zw columns of the trajectory")
    s.add_argument("--cliplabels")
    s.add_argument("--truth-labels")
    s.add_argument("-o", "--output", help="machine-readable metrics JSON")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config)
        return args.func(args, cfg)
    except PipelineError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
