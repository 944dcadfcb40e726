"""UAV trajectory reconstruction from multi-expert detections and prompt scores."""

from __future__ import annotations

__version__ = "0.1.0"

from .camera import BoundingBox, CameraIntrinsics, Point3, RigidTransform, back_project, depth_from_height, project
from .classification import ClipLabel, FrameLabel, vote_clip
from .config import PipelineConfig
from .errors import ConfigError, FormatError, GeometryError, NumericError, PipelineError, UsageError
from .filtering import PromptManifest, ScoreRecord, run_filter
from .fusion import Detection, FusedObservation, fuse_frame, fuse_sequence, iou
from .refine import NoiseConfig, Trajectory3D, refine_track
from .smoothing import Trajectory2D, fit_bspline, smooth_trajectory

__all__ = [
    "BoundingBox", "CameraIntrinsics", "Point3", "RigidTransform", "back_project", "depth_from_height",
    "project", "ClipLabel", "FrameLabel", "vote_clip", "PipelineConfig", "ConfigError", "FormatError",
    "GeometryError", "NumericError", "PipelineError", "UsageError", "PromptManifest", "ScoreRecord",
    "run_filter", "Detection", "FusedObservation", "fuse_frame", "fuse_sequence", "iou", "NoiseConfig",
    "Trajectory3D", "refine_track", "Trajectory2D", "fit_bspline", "smooth_trajectory",
]
