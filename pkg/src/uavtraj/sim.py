"""Synthetic scenarios and evaluation metrics.

All randomness comes from one ``numpy.random.Generator`` seeded with
``PCG64(seed)``. Draws happen in a fixed order (truth process noise, then
per frame and per expert: miss, u/v/h noise, confidence; then labels; then
scores), and every draw is made even when its result is discarded, so a
scenario's output depends only on its fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .camera import BoundingBox, CameraIntrinsics, project
from .classification import FrameLabel
from .config import PipelineConfig
from .errors import UsageError
from .filtering import DEFAULT_PROMPTS, ScoreRecord
from .fusion import Detection
from .pipeline import track_clip
from .refine import BASE_PROCESS_STD, Trajectory3D, transition

KINDS = ("constant_velocity", "piecewise_velocity", "sinusoidal")
MIN_DEPTH = 0.5


@dataclass(frozen=True)
class Scenario:
    kind: str = "constant_velocity"
    duration: int = 300
    frame_rate: float = 30.0
    intrinsics: CameraIntrinsics = CameraIntrinsics(1000.0, 1000.0, 640.0, 360.0)
    H_real: float = 0.3
    sigma_uv: float = 0.0
    sigma_h: float = 0.0
    p_miss: float = 0.0
    experts: int = 3
    seed: int = 0
    clip_id: str = "sim"

    start: tuple[float, float, float] = (-1.0, 0.5, 8.0)
    velocity: tuple[float, float, float] = (0.4, -0.1, 0.02)
    # piecewise_velocity: velocity switches to v at frame f, for each (f, v)
    segments: tuple = ()
    # sinusoidal: start + velocity * t + amplitude * sin(2*pi*t/period)
    amplitude: tuple[float, float, float] = (0.5, 0.3, 1.0)
    period: float = 4.0
    # > 0: truth follows the filter's own motion model with base process noise times this scale
    process_noise: float = 0.0

    aspect: float = 2.0
    expert_p_miss: tuple | None = None
    outlier_expert: int | None = None
    outlier_offset: float = 2.0

    category: str = "quadrotor"
    categories: tuple[str, ...] = ("quadrotor", "fixed_wing", "hexacopter")
    label_interval: int = 3
    label_accuracy: float = 0.9

    score_rate: float = 2.0
    visible: bool = True
    static_view: bool = True

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise UsageError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.duration < 1 or self.experts < 1:
            raise UsageError("duration and experts must be >= 1")
        if not 0.0 <= self.p_miss < 1.0:
            raise UsageError("p_miss must lie in [0, 1)")
        if self.sigma_uv < 0 or self.sigma_h < 0 or self.process_noise < 0:
            raise UsageError("noise levels must be non-negative")
        if self.process_noise > 0 and self.kind != "constant_velocity":
            raise UsageError("process_noise is only defined for constant_velocity scenarios")
        if self.expert_p_miss is not None:
            if len(self.expert_p_miss) != self.experts:
                raise UsageError("expert_p_miss needs one entry per expert")
            if not all(0.0 <= p <= 1.0 for p in self.expert_p_miss):
                raise UsageError("expert_p_miss entries must lie in [0, 1]")
        if self.outlier_expert is not None and not 0 <= self.outlier_expert < self.experts:
            raise UsageError("outlier_expert must index an expert")
        if self.category not in self.categories:
            raise UsageError("category must be one of categories")
        if self.frame_rate <= 0 or self.H_real <= 0:
            raise UsageError("frame_rate and H_real must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    def expert_name(self, k: int) -> str:
        return f"expert{k}"


@dataclass(frozen=True)
class Metrics:
    e3d: float
    rmse: float
    D_x: float
    D_y: float
    D_z: float
    n_frames: int
    clip_accuracy: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SimOutput:
    truth: Trajectory3D
    detections: list[Detection]
    labels: list[FrameLabel]
    scores: list[ScoreRecord]
    scenario: Scenario = field(repr=False, default=None)


def _nominal_positions(scn: Scenario, t: np.ndarray) -> np.ndarray:
    start = np.asarray(scn.start, dtype=float)
    vel = np.asarray(scn.velocity, dtype=float)
    if scn.kind == "constant_velocity":
        return start + np.outer(t, vel)
    if scn.kind == "sinusoidal":
        amp = np.asarray(scn.amplitude, dtype=float)
        return start + np.outer(t, vel) + np.outer(np.sin(2 * math.pi * t / scn.period), amp)
    # piecewise: integrate a velocity that changes at segment frames
    v = np.tile(vel, (len(t), 1))
    for frame, seg_vel in sorted(scn.segments, key=lambda s: s[0]):
        v[int(frame):] = seg_vel
    pos = np.empty((len(t), 3))
    pos[0] = start
    for i in range(1, len(t)):
        pos[i] = pos[i - 1] + v[i - 1] * scn.dt
    return pos


def _truth(scn: Scenario, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = scn.duration
    t = np.arange(n) * scn.dt
    if scn.process_noise > 0:
        F = transition(scn.dt)
        std = np.asarray(BASE_PROCESS_STD) * scn.process_noise
        x = np.concatenate([scn.start, scn.velocity]).astype(float)
        states = np.empty((n, 6))
        for i in range(n):
            if i > 0:
                x = F @ x + rng.standard_normal(6) * std
            states[i] = x
        return states[:, :3], states[:, 3:]
    pos = _nominal_positions(scn, t)
    if scn.kind == "constant_velocity" or n == 1:
        vel = np.tile(np.asarray(scn.velocity, dtype=float), (n, 1))
    else:
        vel = np.gradient(pos, scn.dt, axis=0)
    return pos, vel


def generate(scn: Scenario) -> SimOutput:
    """Truth trajectory plus per-expert detections, frame labels and prompt scores."""
    rng = np.random.Generator(np.random.PCG64(scn.seed))
    pos, vel = _truth(scn, rng)
    bad = np.flatnonzero(pos[:, 2] < MIN_DEPTH)
    if bad.size:
        raise UsageError(
            f"scenario leaves the valid frustum at frame {int(bad[0])} (Z={pos[bad[0], 2]:.3f} m < {MIN_DEPTH} m)"
        )
    K = scn.intrinsics
    frames = np.arange(scn.duration)
    truth = Trajectory3D(frames, pos, vel, pos[:, 2].copy(), scn.clip_id)

    p_miss = scn.expert_p_miss or (scn.p_miss,) * scn.experts
    dets: list[Detection] = []
    for i in frames:
        u, v, h = project(pos[i], K, scn.H_real)
        for k in range(scn.experts):
            miss = rng.random()
            noise = rng.standard_normal(3)
            conf = rng.uniform(0.5, 1.0)
            if miss < p_miss[k]:
                continue
            hk = max(h + scn.sigma_h * noise[2], 1.0)
            uk = u + scn.sigma_uv * noise[0]
            vk = v + scn.sigma_uv * noise[1]
            wk = scn.aspect * hk
            if k == scn.outlier_expert:
                uk += scn.outlier_offset * wk
            dets.append(Detection(int(i), scn.expert_name(k), BoundingBox(uk, vk, wk, hk), float(conf), scn.clip_id))

    labels: list[FrameLabel] = []
    others = [c for c in scn.categories if c != scn.category]
    for i in frames[:: max(scn.label_interval, 1)]:
        correct = rng.random() < scn.label_accuracy
        pick = int(rng.integers(len(others))) if others else 0
        conf = rng.uniform(0.6, 1.0)
        label = scn.category if correct or not others else others[pick]
        labels.append(FrameLabel(int(i), label, float(conf), scn.clip_id))

    step = max(int(round(scn.frame_rate / scn.score_rate)), 1)
    scores = []
    for i in frames[::step]:
        jitter = rng.normal(0.0, 0.02, 4)
        pos_vis, neg_vis = (0.82, 0.38) if scn.visible else (0.36, 0.74)
        sta, dyn = (0.62, 0.45) if scn.static_view else (0.44, 0.64)
        vals = np.clip(np.array([pos_vis, neg_vis, sta, dyn]) + jitter, -1.0, 1.0)
        scores.append(ScoreRecord(scn.clip_id, int(i), dict(zip(DEFAULT_PROMPTS, map(float, vals)))))
    return SimOutput(truth, dets, labels, scores, scn)


def _aligned(est: Trajectory3D, truth: Trajectory3D) -> tuple[np.ndarray, np.ndarray]:
    common, ie, it = np.intersect1d(est.frames, truth.frames, return_indices=True)
    if common.size == 0:
        raise UsageError("trajectories share no frames")
    return est.positions[ie], truth.positions[it]


def metrics_from_pairs(est: np.ndarray, truth: np.ndarray, clip_accuracy: float | None = None) -> Metrics:
    diff = np.asarray(est, float) - np.asarray(truth, float)
    if diff.size == 0:
        raise UsageError("no aligned frames to evaluate")
    e = float(np.mean(np.sum(diff**2, axis=1)))
    dx, dy, dz = (float(v) for v in np.mean(np.abs(diff), axis=0))
    return Metrics(e, math.sqrt(e), dx, dy, dz, len(diff), clip_accuracy)


def e3d(est: Trajectory3D, truth: Trajectory3D) -> Metrics:
    """Mean squared 3D position error over the frames both trajectories share."""
    return metrics_from_pairs(*_aligned(est, truth))


def depth_mae(est: Trajectory3D, truth: Trajectory3D) -> float:
    a, b = _aligned(est, truth)
    return float(np.mean(np.abs(a[:, 2] - b[:, 2])))


def raw_depth_mae(est: Trajectory3D, truth: Trajectory3D) -> float:
    """MAE of the pre-refinement size-prior depths over observed frames."""
    common, ie, it = np.intersect1d(est.frames, truth.frames, return_indices=True)
    raw = est.raw_depths[ie]
    ok = np.isfinite(raw)
    if not ok.any():
        raise UsageError("no observed frames with a raw depth")
    return float(np.mean(np.abs(raw[ok] - truth.positions[it][ok, 2])))


def sweep(
    scn: Scenario,
    grid: Sequence[tuple[float, float]],
    config: PipelineConfig | None = None,
    repeats: int = 1,
) -> list[tuple[float, float, float]]:
    """Depth MAE of the full pipeline for each ``(gamma_q_z, gamma_r_h)`` cell.

    With ``repeats > 1`` each cell is averaged over seeds ``scn.seed + r``.
    Scenarios are generated and fused once per seed and shared by all cells.
    """
    if not grid:
        raise UsageError("sweep grid must not be empty")
    if repeats < 1:
        raise UsageError("repeats must be >= 1")
    base = config or PipelineConfig()
    raw = base.to_dict()
    raw["intrinsics"] = {"f_x": scn.intrinsics.f_x, "f_y": scn.intrinsics.f_y,
                         "c_x": scn.intrinsics.c_x, "c_y": scn.intrinsics.c_y}
    raw["refine"]["dt"] = scn.dt
    runs = [generate(replace(scn, seed=scn.seed + r)) for r in range(repeats)]
    rows = []
    for gq, gr in grid:
        cell = {**raw, "refine": {**raw["refine"], "gamma_q_z": float(gq), "gamma_r_h": float(gr)}}
        cfg = PipelineConfig(cell)
        errs = []
        for out in runs:
            track = track_clip(out.detections, cfg, scn.H_real, scn.clip_id)
            if track.traj3d is None:
                raise UsageError(f"seed {out.scenario.seed}: no fused observations to refine")
            errs.append(depth_mae(track.traj3d, out.truth))
        rows.append((float(gq), float(gr), float(np.mean(errs))))
    return rows


def filter_fixture(
    n_good: int = 50, n_dynamic: int = 80, n_invisible: int = 70, frames: int = 20, seed: int = 0
) -> tuple[list[ScoreRecord], dict[str, str]]:
    """Score records for a constructed clip population with known stage outcomes.

    ``good`` clips pass both stages, ``dynamic`` clips pass visibility but
    fail the static-view test, ``invisible`` clips fail visibility. The
    invisible clips cycle through failure modes: negative prompt on top,
    margin below the frame threshold, and retained frames whose mean
    relevance stays under the clip threshold. Returns the records and a
    ``clip_id -> group`` map.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = list(DEFAULT_PROMPTS)
    records: list[ScoreRecord] = []
    groups: dict[str, str] = {}

    def emit(clip: str, pos_vis: float, neg_vis: float, sta: float, dyn: float) -> None:
        for f in range(frames):
            j = rng.uniform(-0.02, 0.02, 4)
            vals = np.array([pos_vis, neg_vis, sta, dyn]) + j
            records.append(ScoreRecord(clip, f, dict(zip(ids, map(float, vals)))))

    for i in range(n_good):
        clip = f"good{i:03d}"
        groups[clip] = "good"
        emit(clip, 0.85, 0.40, 0.62, 0.45)
    for i in range(n_dynamic):
        clip = f"dyn{i:03d}"
        groups[clip] = "dynamic"
        emit(clip, 0.84, 0.41, 0.42, 0.66)
    modes = [
        (0.35, 0.80),  # negative prompt dominates
        (0.62, 0.45),  # margin ~0.17 < tau
        (0.60, 0.20),  # margin fine, relevance 0.6 < 0.7
        (0.66, 0.30),  # relevance 0.66 < 0.7
    ]
    for i in range(n_invisible):
        clip = f"inv{i:03d}"
        groups[clip] = "invisible"
        p, n = modes[i % len(modes)]
        emit(clip, p, n, 0.62, 0.45)
    return records, groups
