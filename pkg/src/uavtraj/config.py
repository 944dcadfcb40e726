"""Pipeline configuration.

The on-disk dialect is YAML. Every key is optional; missing keys take the
defaults below. Unknown keys are rejected so typos surface early.

.. code-block:: yaml

    schema_version: 1
    intrinsics: {f_x: 1000.0, f_y: 1000.0, c_x: 640.0, c_y: 360.0}
    extrinsic:                      # optional camera -> world transform
      rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
      translation: [0, 0, 0]
    filter: {tau: 0.3, relevance: 0.7, static: 0.3}
    prompts: {<prompt_id>: {text: ..., role: pos_vis|neg_vis|static|dynamic}}
    fusion: {tau_prime: 0.5}
    classify: {window: 5, rho: 0.9, clip_len: 30}
    spline: {order: 3, knot_spacing: 5}
    refine: {gamma_q_z: 1.0, gamma_r_h: 1.0, dt: 0.0333, P0: [1, 1, 4, 1, 1, 1],
             smoothed_uv: true, H_real: null}
    size_prior: {<label>: <meters>}
    pipeline: {drop_rejected: true}
    scenario: {<Scenario field>: <value>}   # used by simulate and sweep
    sweep: {gamma_q_z: [...], gamma_r_h: [...], repeats: 1}
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .camera import CameraIntrinsics, RigidTransform
from .classification import SizePrior, size_prior_table
from .errors import ConfigError, PipelineError
from .filtering import DEFAULT_PROMPTS, PromptManifest
from .refine import DEFAULT_P0, NoiseConfig

SCHEMA_VERSION = 1

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "intrinsics": {"f_x": 1000.0, "f_y": 1000.0, "c_x": 640.0, "c_y": 360.0},
    "extrinsic": None,
    "filter": {"tau": 0.3, "relevance": 0.7, "static": 0.3},
    "prompts": DEFAULT_PROMPTS,
    "fusion": {"tau_prime": 0.5},
    "classify": {"window": 5, "rho": 0.9, "clip_len": 30},
    "spline": {"order": 3, "knot_spacing": 5},
    "refine": {
        "gamma_q_z": 1.0,
        "gamma_r_h": 1.0,
        "dt": 1.0 / 30.0,
        "P0": list(DEFAULT_P0),
        "smoothed_uv": True,
        "H_real": None,
    },
    "size_prior": {},
    "pipeline": {"drop_rejected": True},
    "scenario": {},
    "sweep": {
        "gamma_q_z": [0.5, 0.8, 1.0, 1.5, 2.0],
        "gamma_r_h": [0.5, 0.8, 1.0, 1.5, 2.0],
        "repeats": 1,
    },
}


def _merge(base: dict, override: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field {where!r}")
        # free-form sections: replaced wholesale
        if key in ("prompts", "size_prior", "extrinsic", "scenario") or not isinstance(base[key], dict):
            out[key] = copy.deepcopy(value)
        else:
            if not isinstance(value, Mapping):
                raise ConfigError(f"config field {where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
    return out


@dataclass
class PipelineConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self) -> None:
        # build everything once so bad values fail at load time
        try:
            self.intrinsics
            self.extrinsic
            self.manifest
            self.size_priors
            self.noise(self.raw["refine"]["H_real"] or 1.0)
        except PipelineError as exc:
            raise ConfigError(str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc
        if self.raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.raw.get('schema_version')!r}")

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "PipelineConfig":
        return cls(_merge(DEFAULTS, data or {}))

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls()
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if data is not None and not isinstance(data, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_mapping(data)

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def intrinsics(self) -> CameraIntrinsics:
        k = self.raw["intrinsics"]
        return CameraIntrinsics(float(k["f_x"]), float(k["f_y"]), float(k["c_x"]), float(k["c_y"]))

    @property
    def extrinsic(self) -> RigidTransform | None:
        e = self.raw["extrinsic"]
        if e is None:
            return None
        for key in ("rotation", "translation"):
            if key not in e:
                raise ConfigError(f"missing config field 'extrinsic.{key}'")
        return RigidTransform(np.array(e["rotation"], dtype=float), np.array(e["translation"], dtype=float))

    @property
    def manifest(self) -> PromptManifest:
        return PromptManifest(self.raw["prompts"])

    @property
    def size_priors(self) -> list[SizePrior]:
        return size_prior_table(self.raw["size_prior"])

    def noise(self, H_real: float) -> NoiseConfig:
        r = self.raw["refine"]
        return NoiseConfig(
            H_real=float(H_real),
            gamma_Q_z=float(r["gamma_q_z"]),
            gamma_R_h=float(r["gamma_r_h"]),
            dt=float(r["dt"]),
            P0=tuple(float(p) for p in r["P0"]),
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)
