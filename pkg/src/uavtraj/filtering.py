"""Prompt-score clip filtering.

Each frame carries similarity scores against a set of prompts whose roles
come from a prompt manifest: positive/negative visibility prompts and one
or more static/dynamic viewpoint prompts. A frame is retained when its best
visibility prompt is a positive one and the visibility margin (max - min)
reaches ``tau``. Clips are accepted on mean retained relevance and on the
fraction of retained frames that look static.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import groupby
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, UsageError

log = logging.getLogger(__name__)

ROLES = ("pos_vis", "neg_vis", "static", "dynamic")
DEFAULT_TAU = 0.3
DEFAULT_RELEVANCE_THRESHOLD = 0.7
DEFAULT_STATIC_THRESHOLD = 0.3

DEFAULT_PROMPTS = {
    "drone_sky": {"text": "a small drone hovering in the sky", "role": "pos_vis"},
    "no_drone": {"text": "clear sky without a visible drone", "role": "neg_vis"},
    "static_view": {"text": "a video filmed from a fixed camera on the ground", "role": "static"},
    "dynamic_view": {"text": "a video filmed from a moving or onboard camera", "role": "dynamic"},
}


@dataclass(frozen=True)
class PromptManifest:
    """Maps prompt ids to their text and role."""

    prompts: Mapping[str, Mapping[str, str]]

    def __post_init__(self) -> None:
        for pid, entry in self.prompts.items():
            if entry.get("role") not in ROLES:
                raise FormatError(f"prompt {pid!r} has role {entry.get('role')!r}; expected one of {ROLES}")
        present = {entry["role"] for entry in self.prompts.values()}
        for role in ("static", "dynamic"):
            if role not in present:
                raise FormatError(f"prompt manifest has no {role!r} prompt")
        if not present & {"pos_vis", "neg_vis"}:
            raise FormatError("prompt manifest has no visibility prompt")

    @classmethod
    def default(cls) -> "PromptManifest":
        return cls(DEFAULT_PROMPTS)

    def ids(self, role: str) -> list[str]:
        return sorted(pid for pid, e in self.prompts.items() if e["role"] == role)


@dataclass(frozen=True)
class ScoreRecord:
    clip_id: str
    frame: int
    prompt_scores: Mapping[str, float]


@dataclass(frozen=True)
class FrameVerdict:
    clip_id: str
    frame: int
    relevance: float
    margin: float
    static_score: float
    dynamic_score: float
    retained: bool
    top_prompt: str


@dataclass(frozen=True)
class ClipVerdict:
    clip_id: str
    video_relevance: float
    static_confidence: float
    decision: str
    retained_frames: int
    total_frames: int
    passes_visibility: bool

    @property
    def accepted(self) -> bool:
        return self.decision == "accept"


def _require(record: ScoreRecord, pid: str) -> float:
    try:
        value = record.prompt_scores[pid]
    except KeyError:
        raise FormatError(
            f"clip {record.clip_id!r} frame {record.frame}: missing score for prompt {pid!r}"
        ) from None
    return float(value)


def score_frame(record: ScoreRecord, manifest: PromptManifest, tau: float = DEFAULT_TAU) -> FrameVerdict:
    vis_ids = manifest.ids("pos_vis") + manifest.ids("neg_vis")
    vis = {pid: _require(record, pid) for pid in vis_ids}
    static = max(_require(record, pid) for pid in manifest.ids("static"))
    dynamic = max(_require(record, pid) for pid in manifest.ids("dynamic"))

    # a tie between a positive and a negative prompt counts as negative alignment
    top = max(vis, key=lambda pid: (vis[pid], manifest.prompts[pid]["role"] == "neg_vis", pid))
    relevance = vis[top]
    margin = relevance - min(vis.values())
    retained = manifest.prompts[top]["role"] == "pos_vis" and margin >= tau
    return FrameVerdict(record.clip_id, record.frame, relevance, margin, static, dynamic, retained, top)


def aggregate_clip(
    verdicts: Sequence[FrameVerdict],
    rel_thresh: float = DEFAULT_RELEVANCE_THRESHOLD,
    static_thresh: float = DEFAULT_STATIC_THRESHOLD,
    clip_id: str | None = None,
) -> ClipVerdict:
    if clip_id is None:
        clip_id = verdicts[0].clip_id if verdicts else ""
    if len({v.clip_id for v in verdicts}) > 1:
        raise UsageError("aggregate_clip expects verdicts from one clip")
    kept = [v for v in verdicts if v.retained]
    if not kept:
        return ClipVerdict(clip_id, 0.0, 0.0, "reject", 0, len(verdicts), False)
    relevance = float(np.mean([v.relevance for v in kept]))
    static_conf = sum(v.static_score > v.dynamic_score for v in kept) / len(kept)
    visible = relevance >= rel_thresh
    decision = "accept" if visible and static_conf >= static_thresh else "reject"
    return ClipVerdict(clip_id, relevance, static_conf, decision, len(kept), len(verdicts), visible)


DecisionRule = Callable[[ClipVerdict], str]


def run_filter(
    records: Iterable[ScoreRecord],
    manifest: PromptManifest | None = None,
    tau: float = DEFAULT_TAU,
    rel_thresh: float = DEFAULT_RELEVANCE_THRESHOLD,
    static_thresh: float = DEFAULT_STATIC_THRESHOLD,
    decide: DecisionRule | None = None,
) -> list[ClipVerdict]:
    """Score, aggregate and decide every clip in ``records``; output sorted by ``clip_id``.

    ``decide`` replaces the built-in threshold rule with another backend. It
    receives the aggregated verdict and must return ``"accept"`` or ``"reject"``.
    """
    manifest = manifest or PromptManifest.default()
    ordered = sorted(records, key=lambda r: (r.clip_id, r.frame))
    out = []
    for clip_id, group in groupby(ordered, key=lambda r: r.clip_id):
        frames = [score_frame(r, manifest, tau) for r in group]
        verdict = aggregate_clip(frames, rel_thresh, static_thresh, clip_id=clip_id)
        if decide is not None:
            decision = decide(verdict)
            if decision not in ("accept", "reject"):
                raise UsageError(f"decision backend returned {decision!r}")
            verdict = ClipVerdict(**{**verdict.__dict__, "decision": decision})
        log.debug("clip %s: %d/%d frames retained, %s", clip_id, verdict.retained_frames,
                  verdict.total_frames, verdict.decision)
        out.append(verdict)
    return out
