"""Stage composition shared by the CLI and the simulator sweep."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Mapping, Sequence

from .classification import ClipLabel, FrameLabel, lookup_size_prior, segment_clips, vote_clip
from .config import PipelineConfig
from .errors import ConfigError
from .fusion import Detection, FusedObservation, fuse_sequence
from .refine import Trajectory3D, refine_track, with_centers
from .smoothing import Trajectory2D, smooth_trajectory, trajectory_from_fused


@dataclass
class ClipTrack:
    clip_id: str
    fused: dict[int, FusedObservation]
    traj2d: Trajectory2D | None
    traj3d: Trajectory3D | None


def by_clip(items: Iterable, key=lambda item: item.clip_id) -> dict[str, list]:
    ordered = sorted(items, key=key)
    return {k: list(g) for k, g in groupby(ordered, key=key)}


def fuse_clips(dets: Iterable[Detection], cfg: PipelineConfig) -> dict[str, dict[int, FusedObservation]]:
    tau_prime = float(cfg.section("fusion")["tau_prime"])
    return {clip: fuse_sequence(group, tau_prime) for clip, group in by_clip(dets).items()}


def smooth_fused(fused: Mapping[int, FusedObservation], cfg: PipelineConfig, clip_id: str = "") -> Trajectory2D:
    s = cfg.section("spline")
    return smooth_trajectory(trajectory_from_fused(dict(fused), clip_id), int(s["order"]), float(s["knot_spacing"]))


def refine_observations(
    fused: Mapping[int, FusedObservation],
    traj2d: Trajectory2D | None,
    cfg: PipelineConfig,
    H_real: float,
    clip_id: str = "",
) -> Trajectory3D:
    """Refine one clip; smoothed centers replace raw ones when configured and available."""
    obs = dict(fused)
    if cfg.section("refine")["smoothed_uv"] and traj2d is not None and traj2d.smoothed is not None:
        obs = with_centers(obs, traj2d.frames, traj2d.smoothed)
    return refine_track(obs, cfg.intrinsics, cfg.noise(H_real), clip_id=clip_id)


def classify_clip(labels: Sequence[FrameLabel], cfg: PipelineConfig) -> list[tuple[list[FrameLabel], ClipLabel]]:
    c = cfg.section("classify")
    return [
        (segment, vote_clip(segment, int(c["window"]), float(c["rho"])))
        for segment in segment_clips(labels, int(c["clip_len"]))
    ]


def resolve_height(cfg: PipelineConfig, labels: Sequence[FrameLabel] | None, clip_id: str = "") -> float:
    """Physical height prior for a clip: from its voted label, else the configured fallback."""
    if labels:
        c = cfg.section("classify")
        clip_label = vote_clip(labels, int(c["window"]), float(c["rho"]))
        table = cfg.size_priors
        if table or cfg.section("refine")["H_real"] is None:
            return lookup_size_prior(clip_label.label, table)
    fallback = cfg.section("refine")["H_real"]
    if fallback is None:
        raise ConfigError(
            f"clip {clip_id!r}: no frame labels and missing config field 'refine.H_real'"
        )
    return float(fallback)


def track_clip(
    dets: Iterable[Detection], cfg: PipelineConfig, H_real: float, clip_id: str = ""
) -> ClipTrack:
    """Fuse, smooth and refine one clip's detections."""
    fused = fuse_sequence(dets, float(cfg.section("fusion")["tau_prime"]))
    if not fused:
        return ClipTrack(clip_id, fused, None, None)
    traj2d = smooth_fused(fused, cfg, clip_id)
    return ClipTrack(clip_id, fused, traj2d, refine_observations(fused, traj2d, cfg, H_real, clip_id))
