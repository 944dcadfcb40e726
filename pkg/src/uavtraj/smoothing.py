"""Least-squares cubic B-spline smoothing of 2D barycenter tracks.

Frame indices are the spline parameter. Interior knots sit every
``knot_spacing`` frame indices from the first sample; both ends are clamped
(knot multiplicity ``degree + 1``). Tracks too short to support that knot
layout are returned as linear interpolation of the raw samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import UsageError

DEFAULT_DEGREE = 3
DEFAULT_KNOT_SPACING = 5


@dataclass(frozen=True)
class SplineFit:
    """A fitted curve; ``kind`` is ``"bspline"`` or the ``"linear"`` fallback."""

    kind: str
    degree: int
    knots: np.ndarray
    coefficients: np.ndarray
    t_range: tuple[float, float]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return np.interp(t, self.knots, self.coefficients)
        return BSpline(self.knots, self.coefficients, self.degree, extrapolate=False)(
            np.clip(t, *self.t_range)
        )


@dataclass
class Trajectory2D:
    frames: np.ndarray
    points: np.ndarray
    smoothed: np.ndarray | None = None
    heights: np.ndarray | None = None
    clip_id: str = ""

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=int)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.frames) != len(self.points):
            raise UsageError("frames and points must have equal length")
        if np.any(np.diff(self.frames) <= 0):
            raise UsageError("trajectory frames must be strictly increasing")
        if self.smoothed is not None:
            self.smoothed = np.asarray(self.smoothed, dtype=float).reshape(-1, 2)
            if len(self.smoothed) != len(self.points):
                raise UsageError("smoothed and points must have equal length")
        if self.heights is not None:
            self.heights = np.asarray(self.heights, dtype=float).reshape(-1)

    def __len__(self) -> int:
        return len(self.frames)


def clamped_knots(t_first: float, t_last: float, degree: int, knot_spacing: float) -> np.ndarray:
    interior = np.arange(t_first + knot_spacing, t_last, knot_spacing, dtype=float)
    # drop an interior knot that lands on the endpoint through rounding
    interior = interior[interior < t_last - 1e-9]
    return np.concatenate(
        [np.full(degree + 1, float(t_first)), interior, np.full(degree + 1, float(t_last))]
    )


def fit_bspline(
    t: Sequence[float],
    values: Sequence[float],
    order: int = DEFAULT_DEGREE,
    knot_spacing: float = DEFAULT_KNOT_SPACING,
) -> SplineFit:
    """Least-squares B-spline of degree ``order`` through ``(t, values)``.

    Knot spans without samples make the normal equations singular; the
    minimum-norm least-squares solution is used in that case, which still
    interpolates whatever the data determine.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise UsageError("t and values must be 1-D sequences of equal length")
    if len(t) == 0:
        raise UsageError("cannot fit a spline to zero samples")
    if np.any(np.diff(t) <= 0):
        raise UsageError("spline parameter t must be strictly increasing")
    if order < 1 or knot_spacing <= 0:
        raise UsageError("spline degree must be >= 1 and knot spacing positive")

    span = (float(t[0]), float(t[-1]))
    if len(t) < order + 1 or t[-1] - t[0] < knot_spacing:
        return SplineFit("linear", 1, t.copy(), y.copy(), span)

    knots = clamped_knots(t[0], t[-1], order, knot_spacing)
    basis = BSpline.design_matrix(t, knots, order).toarray()
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return SplineFit("bspline", order, knots, coef, span)


def smooth_trajectory(
    traj: Trajectory2D, order: int = DEFAULT_DEGREE, knot_spacing: float = DEFAULT_KNOT_SPACING
) -> Trajectory2D:
    """Fit ``u`` and ``v`` independently and evaluate at the original frames."""
    if len(traj) == 0:
        raise UsageError("cannot smooth an empty trajectory")
    t = traj.frames.astype(float)
    smoothed = np.column_stack(
        [fit_bspline(t, traj.points[:, k], order, knot_spacing)(t) for k in range(2)]
    )
    return Trajectory2D(
        frames=traj.frames.copy(),
        points=traj.points.copy(),
        smoothed=smoothed,
        heights=None if traj.heights is None else traj.heights.copy(),
        clip_id=traj.clip_id,
    )


def trajectory_from_fused(fused: dict, clip_id: str = "") -> Trajectory2D:
    """Build the discrete barycenter track from a ``frame -> FusedObservation`` map."""
    frames = sorted(fused)
    return Trajectory2D(
        frames=np.array(frames, dtype=int),
        points=np.array([(fused[f].box.x, fused[f].box.y) for f in frames], dtype=float).reshape(-1, 2),
        heights=np.array([fused[f].box.h for f in frames], dtype=float),
        clip_id=clip_id,
    )
