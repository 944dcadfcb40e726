"""Mixture-of-experts box fusion.

Per frame, candidate boxes from several detectors are grouped into IoU
clusters (connected components of the ``iou > tau_prime`` graph). Clusters
backed by fewer than two distinct experts are dropped; the surviving
cluster with the highest mean confidence is averaged into one box.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Sequence

import numpy as np

from .camera import BoundingBox
from .errors import UsageError

DEFAULT_TAU_PRIME = 0.5
MIN_SUPPORT = 2


@dataclass(frozen=True)
class Detection:
    frame: int
    expert_id: str
    box: BoundingBox
    confidence: float
    clip_id: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise UsageError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.frame < 0:
            raise UsageError(f"frame index must be non-negative, got {self.frame}")


@dataclass(frozen=True)
class Cluster:
    member_indices: frozenset[int]
    score: float


@dataclass(frozen=True)
class FusedObservation:
    frame: int
    box: BoundingBox
    support: int
    score: float
    experts: tuple[str, ...] = ()
    clip_id: str = ""


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from the same corners as the overlap, so iou(a, a) is exactly 1
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return min(inter / (area_a + area_b - inter), 1.0)


def _canonical_order(dets: Sequence[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: (d.expert_id, d.box.as_tuple(), d.confidence))


def cluster_detections(dets: Sequence[Detection], tau_prime: float = DEFAULT_TAU_PRIME) -> list[Cluster]:
    """Connected components of the graph with an edge wherever ``iou > tau_prime``.

    ``member_indices`` refer to positions in ``dets``. Clusters are returned
    ordered by their smallest member index.
    """
    if len({d.frame for d in dets}) > 1:
        raise UsageError("cluster_detections expects detections from a single frame")
    n = len(dets)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if iou(dets[i].box, dets[j].box) > tau_prime:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = []
    for members in sorted(groups.values(), key=min):
        score = float(np.mean([dets[i].confidence for i in members]))
        clusters.append(Cluster(frozenset(members), score))
    return clusters


def _support(cluster: Cluster, dets: Sequence[Detection]) -> int:
    return len({dets[i].expert_id for i in cluster.member_indices})


def fuse_frame(dets: Sequence[Detection], tau_prime: float = DEFAULT_TAU_PRIME) -> FusedObservation | None:
    """Fuse one frame's detections, or return ``None`` when no cluster reaches consensus.

    Support counts distinct experts, so two boxes from the same detector
    never form a consensus on their own. Ties on cluster score go to the
    larger support, then to the cluster holding the most confident single
    detection, then to the canonical detection order.
    """
    if not dets:
        return None
    dets = _canonical_order(dets)
    clusters = [c for c in cluster_detections(dets, tau_prime) if _support(c, dets) >= MIN_SUPPORT]
    if not clusters:
        return None

    def rank(c: Cluster) -> tuple:
        top = max(dets[i].confidence for i in c.member_indices)
        return (-c.score, -_support(c, dets), -top, min(c.member_indices))

    best = min(clusters, key=rank)
    members = [dets[i] for i in sorted(best.member_indices)]
    coords = np.array([m.box.as_tuple() for m in members], dtype=float)
    x, y, w, h = coords.mean(axis=0)
    return FusedObservation(
        frame=members[0].frame,
        box=BoundingBox(float(x), float(y), float(w), float(h)),
        support=_support(best, dets),
        score=best.score,
        experts=tuple(sorted({m.expert_id for m in members})),
        clip_id=members[0].clip_id,
    )


def fuse_sequence(dets: Iterable[Detection], tau_prime: float = DEFAULT_TAU_PRIME) -> dict[int, FusedObservation]:
    """Apply :func:`fuse_frame` to every frame; frames without consensus are absent."""
    out: dict[int, FusedObservation] = {}
    for frame, group in groupby(sorted(dets, key=lambda d: d.frame), key=lambda d: d.frame):
        fused = fuse_frame(list(group), tau_prime)
        if fused is not None:
            out[frame] = fused
    return out
