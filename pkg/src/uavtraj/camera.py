"""Pinhole camera geometry: projection, back-projection and size-prior depth.

Image coordinates are ``(u, v) = (column, row)`` with the origin at the
top-left pixel. No lens distortion is modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import GeometryError, UsageError


@dataclass(frozen=True)
class CameraIntrinsics:
    f_x: float
    f_y: float
    c_x: float
    c_y: float

    def __post_init__(self) -> None:
        for name in ("f_x", "f_y", "c_x", "c_y"):
            if not math.isfinite(getattr(self, name)):
                raise UsageError(f"intrinsic {name} must be finite")
        if self.f_x <= 0 or self.f_y <= 0:
            raise UsageError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f_x, 0.0, self.c_x], [0.0, self.f_y, self.c_y], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class BoundingBox:
    """Center-based box: ``(x, y)`` is the barycenter, ``w``/``h`` the extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise UsageError(f"box extent must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.x - hw, self.y - hh, self.x + hw, self.y + hh)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


class Point3(NamedTuple):
    X: float
    Y: float
    Z: float


@dataclass(frozen=True)
class RigidTransform:
    """``p_world = rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise UsageError("rigid transform needs a 3x3 rotation and a 3-vector translation")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise UsageError("rigid transform entries must be finite")
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise UsageError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


def project(p: Sequence[float], K: CameraIntrinsics, H_real: float) -> np.ndarray:
    """Return ``(u, v, h)``: image position of ``p`` and apparent height of an object of height ``H_real``."""
    X, Y, Z = (float(c) for c in p)
    if not Z > 0:
        raise GeometryError(f"point behind camera (Z={Z})")
    if not H_real > 0:
        raise GeometryError(f"object height must be positive (H_real={H_real})")
    return np.array([K.c_x + K.f_x * X / Z, K.c_y + K.f_y * Y / Z, H_real * K.f_y / Z])


def depth_from_height(h: float, f_y: float, H_real: float) -> float:
    """Coarse monocular depth from apparent pixel height and a physical size prior."""
    if not h > 0:
        raise GeometryError(f"degenerate box height (h={h})")
    if not (f_y > 0 and H_real > 0):
        raise GeometryError("f_y and H_real must be positive")
    return f_y * H_real / h


def back_project(u: float, v: float, z: float, K: CameraIntrinsics) -> Point3:
    if not z > 0:
        raise GeometryError(f"back-projection depth must be positive (z={z})")
    return Point3((u - K.c_x) * z / K.f_x, (v - K.c_y) * z / K.f_y, float(z))


def apply_transform(p: Sequence[float], T: RigidTransform) -> Point3:
    q = T.rotation @ np.asarray(p, dtype=float) + T.translation
    return Point3(float(q[0]), float(q[1]), float(q[2]))
