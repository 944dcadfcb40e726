"""Clip-level UAV category labels from sparse per-frame predictions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, UsageError

DEFAULT_WINDOW = 5
DEFAULT_RHO = 0.9
DEFAULT_CLIP_LEN = 30


@dataclass(frozen=True)
class FrameLabel:
    frame: int
    label: Hashable
    confidence: float
    clip_id: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise UsageError(f"label confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class ClipLabel:
    label: Hashable
    confidence: float
    status: str
    agreement: float
    n_labels: int = 0

    @property
    def confirmed(self) -> bool:
        return self.status == "confirmed"


@dataclass(frozen=True)
class SizePrior:
    label: Hashable
    H_real: float

    def __post_init__(self) -> None:
        if not self.H_real > 0:
            raise ConfigError(f"size prior for {self.label!r} must be positive, got {self.H_real}")


def dominant_label(labels: Sequence[FrameLabel]) -> Hashable:
    """Mode of the labels; ties resolve to the lowest label in sort order."""
    counts = Counter(fl.label for fl in labels)
    best = max(counts.values())
    return min(lab for lab, c in counts.items() if c == best)


def vote_clip(labels: Sequence[FrameLabel], N: int = DEFAULT_WINDOW, rho: float = DEFAULT_RHO) -> ClipLabel:
    """Majority vote with an N-frame consistency check.

    Windows are runs of ``N`` consecutive *labeled* frames. If any window's
    agreement with the dominant label reaches ``rho`` the label is confirmed
    and its confidence boosted to ``max(mean window confidence, agreement)``,
    where the mean is over the agreeing frames of the best window. Sequences
    shorter than ``N`` cannot be confirmed.
    """
    if not labels:
        raise UsageError("vote_clip needs at least one frame label")
    if N < 1:
        raise UsageError("window size N must be >= 1")
    labels = sorted(labels, key=lambda fl: fl.frame)
    top = dominant_label(labels)
    hits = np.array([fl.label == top for fl in labels], dtype=float)
    conf = np.array([fl.confidence for fl in labels], dtype=float)

    if len(labels) < N:
        return ClipLabel(top, float(conf[hits == 1].mean()), "uncertain", float(hits.mean()), len(labels))

    window_agreement = np.convolve(hits, np.ones(N), mode="valid") / N
    best = int(np.argmax(window_agreement))
    agreement = float(window_agreement[best])
    if agreement >= rho:
        member = slice(best, best + N)
        mean_conf = float(conf[member][hits[member] == 1].mean())
        return ClipLabel(top, max(mean_conf, agreement), "confirmed", agreement, len(labels))
    return ClipLabel(top, float(conf[hits == 1].mean()), "uncertain", agreement, len(labels))


def segment_clips(labels: Sequence[FrameLabel], clip_len: int = DEFAULT_CLIP_LEN) -> list[list[FrameLabel]]:
    """Split into non-overlapping windows of ``clip_len`` frame indices, anchored at the first frame.

    Windows holding no label are omitted.
    """
    if clip_len < 1:
        raise UsageError("clip_len must be >= 1")
    if not labels:
        return []
    labels = sorted(labels, key=lambda fl: fl.frame)
    start = labels[0].frame
    segments: dict[int, list[FrameLabel]] = {}
    for fl in labels:
        segments.setdefault((fl.frame - start) // clip_len, []).append(fl)
    return [segments[k] for k in sorted(segments)]


def size_prior_table(mapping: Mapping[Hashable, float]) -> list[SizePrior]:
    return [SizePrior(label, float(h)) for label, h in mapping.items()]


def lookup_size_prior(label: Hashable, table: Sequence[SizePrior]) -> float:
    for entry in table:
        if entry.label == label:
            return entry.H_real
    known = ", ".join(sorted(str(e.label) for e in table)) or "<none>"
    raise ConfigError(f"no size prior for label {label!r}; known labels: {known}")


def accuracy(predicted: Sequence[ClipLabel], truth: Sequence[Hashable]) -> float:
    """Fraction of clips whose (dominant) label matches the truth; uncertain clips count by label."""
    if len(predicted) != len(truth):
        raise UsageError(f"{len(predicted)} predictions vs {len(truth)} truth labels")
    if not truth:
        raise UsageError("accuracy of zero clips is undefined")
    return sum(p.label == t for p, t in zip(predicted, truth)) / len(truth)
