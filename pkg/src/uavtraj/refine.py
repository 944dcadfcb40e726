"""Extended Kalman filter that lifts ``(u, v, h)`` box observations to 3D.

State is ``[X, Y, Z, Vx, Vy, Vz]`` in the camera frame with a
near-constant-velocity motion model. The observation is the pinhole
projection of the position plus the apparent height of an object of known
physical height ``H_real``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .camera import CameraIntrinsics, back_project, depth_from_height
from .errors import GeometryError, NumericError, UsageError
from .fusion import FusedObservation

log = logging.getLogger(__name__)

# per-step process noise stds: X, Y, Z, Vx, Vy, Vz
BASE_PROCESS_STD = (0.01, 0.01, 0.05, 0.10, 0.10, 0.50)
# measurement noise stds in pixels: u, v, h
BASE_MEASUREMENT_STD = (0.5, 0.5, 5.0)
DEFAULT_P0 = (1.0, 1.0, 4.0, 1.0, 1.0, 1.0)
MIN_DEPTH = 0.1
DEPTH_INFLATION = 10.0


@dataclass(frozen=True)
class NoiseConfig:
    H_real: float
    gamma_Q_z: float = 1.0
    gamma_R_h: float = 1.0
    dt: float = 1.0 / 30.0
    P0: tuple[float, ...] = DEFAULT_P0

    def __post_init__(self) -> None:
        if not self.gamma_Q_z >= 0:
            raise UsageError("gamma_Q_z must be >= 0")
        if not self.gamma_R_h > 0:
            raise UsageError("gamma_R_h must be > 0; a zero height noise makes R singular")
        if not self.dt >= 0:
            raise UsageError("dt must be >= 0")
        if not self.H_real > 0:
            raise UsageError("H_real must be > 0")
        if len(self.P0) != 6 or min(self.P0) < 0:
            raise UsageError("P0 must be six non-negative variances")


@dataclass
class FilterState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).reshape(6)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(6, 6)

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]

    def copy(self) -> "FilterState":
        return FilterState(self.mean.copy(), self.covariance.copy())


@dataclass
class Trajectory3D:
    frames: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    raw_depths: np.ndarray
    clip_id: str = ""
    covariances: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=int).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        self.raw_depths = np.asarray(self.raw_depths, dtype=float).reshape(-1)
        n = len(self.frames)
        if not (len(self.positions) == len(self.velocities) == len(self.raw_depths) == n):
            raise UsageError("trajectory arrays must have equal length")
        if not np.all(np.isfinite(self.positions)):
            raise NumericError("trajectory positions must be finite")

    def __len__(self) -> int:
        return len(self.frames)


def build_Q(cfg: NoiseConfig) -> np.ndarray:
    std = np.array(BASE_PROCESS_STD)
    scale = np.array([1.0, 1.0, cfg.gamma_Q_z, 1.0, 1.0, cfg.gamma_Q_z])
    return np.diag((scale * std) ** 2)


def build_R(cfg: NoiseConfig) -> np.ndarray:
    std = np.array(BASE_MEASUREMENT_STD)
    scale = np.array([1.0, 1.0, cfg.gamma_R_h])
    return np.diag((scale * std) ** 2)


def transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3)
    return F


def observe(state: FilterState, K: CameraIntrinsics, H_real: float) -> tuple[np.ndarray, np.ndarray]:
    """Predicted ``(u, v, h)`` and its 3x6 Jacobian at the state mean."""
    X, Y, Z = state.mean[:3]
    if not Z > 0:
        raise NumericError(f"observation model undefined for Z={Z}")
    h_vec = np.array([K.c_x + K.f_x * X / Z, K.c_y + K.f_y * Y / Z, H_real * K.f_y / Z])
    J = np.zeros((3, 6))
    J[0, 0] = K.f_x / Z
    J[0, 2] = -K.f_x * X / Z**2
    J[1, 1] = K.f_y / Z
    J[1, 2] = -K.f_y * Y / Z**2
    J[2, 2] = -H_real * K.f_y / Z**2
    return h_vec, J


def _clamp_depth(state: FilterState) -> FilterState:
    if state.mean[2] >= MIN_DEPTH:
        return state
    log.warning("depth %.4g below %.2g m; clamping and inflating its covariance", state.mean[2], MIN_DEPTH)
    mean = state.mean.copy()
    mean[2] = MIN_DEPTH
    P = state.covariance.copy()
    s = math.sqrt(DEPTH_INFLATION)
    P[2, :] *= s
    P[:, 2] *= s
    return FilterState(mean, P)


def predict(state: FilterState, cfg: NoiseConfig) -> FilterState:
    F = transition(cfg.dt)
    P = F @ state.covariance @ F.T + build_Q(cfg)
    return FilterState(F @ state.mean, (P + P.T) / 2.0)


def update(state: FilterState, z, K: CameraIntrinsics, cfg: NoiseConfig) -> FilterState:
    """EKF correction with observation ``z = (u, v, h)``.

    Observations with a non-positive height are skipped (state returned
    unchanged). The covariance is symmetrized after the update and the depth
    is clamped to ``MIN_DEPTH`` if the correction pushed it too close.
    """
    z = np.asarray(z, dtype=float).reshape(3)
    if not np.all(np.isfinite(z)):
        raise UsageError(f"observation must be finite, got {z}")
    if not z[2] > 0:
        log.warning("skipping observation with non-positive height h=%g", z[2])
        return state
    h_vec, J = observe(state, K, cfg.H_real)
    P = state.covariance
    S = J @ P @ J.T + build_R(cfg)
    try:
        c = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericError("innovation covariance is not positive definite") from None
    # G = P J^T S^-1, with S = c c^T
    G = np.linalg.solve(c.T, np.linalg.solve(c, J @ P)).T
    mean = state.mean + G @ (z - h_vec)
    P_new = (np.eye(6) - G @ J) @ P
    return _clamp_depth(FilterState(mean, (P_new + P_new.T) / 2.0))


def initial_state(z, K: CameraIntrinsics, cfg: NoiseConfig) -> FilterState:
    u, v, h = (float(c) for c in z)
    p = back_project(u, v, depth_from_height(h, K.f_y, cfg.H_real), K)
    return FilterState(np.array([p.X, p.Y, p.Z, 0.0, 0.0, 0.0]), np.diag(cfg.P0))


def _as_measurement(obs) -> np.ndarray:
    if isinstance(obs, FusedObservation):
        return np.array([obs.box.x, obs.box.y, obs.box.h])
    return np.asarray(obs, dtype=float).reshape(3)


def refine_track(
    obs: Mapping[int, FusedObservation],
    K: CameraIntrinsics,
    cfg: NoiseConfig,
    init: FilterState | None = None,
    clip_id: str = "",
) -> Trajectory3D:
    """Run the filter over every frame from the first to the last observation.

    ``obs`` maps frame index to a :class:`FusedObservation` (or any
    ``(u, v, h)`` triple). Frames without an observation get a prediction-only
    step and a NaN raw depth.
    """
    if not obs:
        raise UsageError("refine_track needs at least one observation")
    frames = sorted(obs)
    first, last = frames[0], frames[-1]
    z0 = _as_measurement(obs[first])
    state = init.copy() if init is not None else initial_state(z0, K, cfg)

    n = last - first + 1
    positions = np.empty((n, 3))
    velocities = np.empty((n, 3))
    covariances = np.empty((n, 6, 6))
    raw = np.full(n, np.nan)
    for i, frame in enumerate(range(first, last + 1)):
        if i > 0:
            state = _clamp_depth(predict(state, cfg))
        if frame in obs:
            z = _as_measurement(obs[frame])
            try:
                raw[i] = depth_from_height(z[2], K.f_y, cfg.H_real)
            except GeometryError:
                pass
            state = update(state, z, K, cfg)
        positions[i] = state.mean[:3]
        velocities[i] = state.mean[3:]
        covariances[i] = state.covariance
    return Trajectory3D(np.arange(first, last + 1), positions, velocities, raw, clip_id, covariances)


def with_centers(obs: Mapping[int, FusedObservation], frames, centers) -> dict[int, FusedObservation]:
    """Replace the box centers of ``obs`` at ``frames`` with ``centers`` (e.g. spline-smoothed ones)."""
    out = dict(obs)
    for f, (u, v) in zip(frames, centers):
        f = int(f)
        box = replace(out[f].box, x=float(u), y=float(v))
        out[f] = replace(out[f], box=box)
    return out
