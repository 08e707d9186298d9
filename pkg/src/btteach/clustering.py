"""Turn raw demonstrated motions into a registry of symbolic actions.

Placements of the same object are grouped across demonstrations. Every
candidate reference frame gets its own density scan over the recorded
targets; the densest grouping wins and fixes both the frame and the target
of the resulting symbolic action. A placement key can keep up to two
distinct groupings (two "contexts") when each is dense enough on its own,
which is what lets a task place the same object at more than one spot.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .actions import ActionTemplate, DEMONSTRABLE_TYPES, instantiate
from .config import Clustering, Config, Costs
from .demo import DemoCorpus, Demonstration
from .geometry import BASE_FRAME, Frame, Position, object_frame_id, to_frame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Occurrence:
    """One demonstrated action instance inside a placement group."""

    demo_id: str
    index: int
    t: str
    object: str
    p: Position
    frames: Mapping[str, Frame]


@dataclass(frozen=True)
class PointCluster:
    """A dense grouping of placement targets expressed in one frame."""

    frame: str
    members: tuple
    centroid: Position
    radius: float
    score: float


@dataclass
class InferenceResult:
    registry: dict
    sequences: dict
    report: dict = field(default_factory=dict)

    def action(self, action_id: str) -> ActionTemplate:
        return self.registry[action_id]


def dbscan(points: Sequence[Position], eps: float, min_pts: int) -> list:
    """Density scan labels: cluster index per point, -1 for noise.

    Core points have at least min_pts neighbours within eps (closed ball,
    counting themselves). Clusters grow from core points in index order, so
    border points shared between clusters go to whichever cluster reached
    them first.
    """
    n = len(points)
    neigh = [
        [j for j in range(n) if points[i].dist(points[j]) <= eps] for i in range(n)
    ]
    core = [len(neigh[i]) >= min_pts for i in range(n)]
    labels: list = [None] * n
    next_label = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        if not core[i]:
            labels[i] = -1
            continue
        labels[i] = next_label
        seeds = [j for j in neigh[i] if j != i]
        k = 0
        while k < len(seeds):
            j = seeds[k]
            k += 1
            if labels[j] == -1:
                labels[j] = next_label
            elif labels[j] is None:
                labels[j] = next_label
                if core[j]:
                    seeds.extend(m for m in neigh[j] if m != j)
        next_label += 1
    return labels


def _centroid(points: Sequence[Position]) -> Position:
    # fsum keeps the result independent of member order
    n = float(len(points))
    return Position(
        math.fsum(p.x for p in points) / n,
        math.fsum(p.y for p in points) / n,
        math.fsum(p.z for p in points) / n,
    )


def _frame_rank(frame_id: str) -> tuple:
    # object frames outrank the base frame when scores tie
    return (1, "") if frame_id == BASE_FRAME else (0, frame_id)


def _cluster_key(c: PointCluster) -> tuple:
    return (-c.score, _frame_rank(c.frame), c.members)


def _score(n_members: int, radius: float, cfg: Clustering) -> float:
    if n_members < 2:
        return float("-inf")
    return n_members / max(radius, cfg.min_cluster_radius_m)


def candidate_frames(occurrences: Sequence[Occurrence]) -> list:
    """Frames every occurrence can express its target in, excluding the
    moved object's own frame."""
    common = None
    for occ in occurrences:
        ids = set(occ.frames)
        common = ids if common is None else common & ids
    common = common or set()
    common.discard(object_frame_id(occurrences[0].object))
    return sorted(common, key=_frame_rank)


def _points_in_frame(occurrences: Sequence[Occurrence], frame_id: str) -> list:
    return [to_frame(occ.p, occ.frames[frame_id]) for occ in occurrences]


def _find_clusters(occurrences: Sequence[Occurrence], cfg: Clustering) -> list:
    """All dense groupings across all candidate frames, best score first."""
    clusters = []
    for frame_id in candidate_frames(occurrences):
        points = _points_in_frame(occurrences, frame_id)
        labels = dbscan(points, cfg.eps_m, cfg.min_pts)
        for label in sorted(set(labels) - {-1}):
            members = tuple(i for i, l in enumerate(labels) if l == label)
            pts = [points[i] for i in members]
            centroid = _centroid(pts)
            radius = max(centroid.dist(p) for p in pts)
            clusters.append(
                PointCluster(
                    frame=frame_id,
                    members=members,
                    centroid=centroid,
                    radius=radius,
                    score=_score(len(members), radius, cfg),
                )
            )
    clusters.sort(key=_cluster_key)
    return clusters


def _assign_members(
    occurrences: Sequence[Occurrence], clusters: Sequence[PointCluster], cfg: Clustering
) -> list:
    """Each occurrence goes to the best-scoring cluster that contains it.

    Returns effective clusters (recomputed over the members they actually
    kept), best first.
    """
    chosen: dict = {}
    for rank, cluster in enumerate(clusters):
        for m in cluster.members:
            if m not in chosen:
                chosen[m] = rank
    kept: dict = {}
    for m, rank in chosen.items():
        kept.setdefault(rank, []).append(m)
    effective = []
    for rank, members in kept.items():
        if len(members) < 2:
            continue
        src = clusters[rank]
        points = _points_in_frame([occurrences[m] for m in members], src.frame)
        centroid = _centroid(points)
        radius = max(centroid.dist(p) for p in points)
        effective.append(
            PointCluster(
                frame=src.frame,
                members=tuple(sorted(members)),
                centroid=centroid,
                radius=radius,
                score=_score(len(members), radius, cfg),
            )
        )
    effective.sort(key=_cluster_key)
    return effective


def collect_occurrences(corpus: DemoCorpus) -> dict:
    """Group demonstrated actions by (type, object). Demo order preserved."""
    groups: dict = {}
    for demo in corpus:
        for index, action in enumerate(demo.actions):
            if action.t not in DEMONSTRABLE_TYPES:
                continue
            occ = Occurrence(
                demo_id=demo.id,
                index=index,
                t=action.t,
                object=action.object,
                p=action.p,
                frames=action.frames,
            )
            groups.setdefault((action.t, action.object), []).append(occ)
    return groups


def _context_threshold(cfg: Clustering, n_demos: int) -> float:
    return cfg.context_threshold_scale * n_demos / cfg.eps_m


def _singleton_id(t: str, obj: str, occ: Occurrence) -> str:
    return f"{t}:{obj}:{BASE_FRAME}:s:{occ.demo_id}:{occ.index}"


def _register_placements(
    key: tuple,
    occurrences: Sequence[Occurrence],
    cfg: Clustering,
    costs: Costs,
    n_demos: int,
    registry: dict,
    assignment: dict,
    report_rows: list,
) -> None:
    t, obj = key
    clusters = _assign_members(occurrences, _find_clusters(occurrences, cfg), cfg)
    threshold = _context_threshold(cfg, n_demos)

    if not cfg.context_detection:
        # ablation: the whole group collapses into one action, frame and
        # target taken from the densest grouping when there is one
        if clusters:
            best = clusters[0]
            frame, target = best.frame, best.centroid
        else:
            frame = cfg.default_frame
            target = _centroid(_points_in_frame(occurrences, frame))
        action_id = f"{t}:{obj}:{frame}:c0"
        registry[action_id] = instantiate(
            t,
            costs,
            action_id=action_id,
            object_id=obj,
            target=target,
            frame=frame,
            context=0,
            provenance=tuple(sorted((o.demo_id, o.index) for o in occurrences)),
        )
        for occ in occurrences:
            assignment[(occ.demo_id, occ.index)] = action_id
        report_rows.append(
            {"key": f"{t}:{obj}", "contexts": 1, "merged": True, "frame": frame}
        )
        return

    kept = []
    if clusters:
        kept.append(clusters[0])
        if (
            len(clusters) > 1
            and cfg.max_contexts > 1
            and clusters[0].score > threshold
            and clusters[1].score > threshold
        ):
            kept.append(clusters[1])
    kept = kept[: cfg.max_contexts]

    clustered = set()
    for context, cluster in enumerate(kept):
        action_id = f"{t}:{obj}:{cluster.frame}:c{context}"
        members = [occurrences[m] for m in cluster.members]
        registry[action_id] = instantiate(
            t,
            costs,
            action_id=action_id,
            object_id=obj,
            target=cluster.centroid,
            frame=cluster.frame,
            context=context,
            provenance=tuple(sorted((o.demo_id, o.index) for o in members)),
        )
        for occ in members:
            assignment[(occ.demo_id, occ.index)] = action_id
        clustered.update(cluster.members)

    for i, occ in enumerate(occurrences):
        if i in clustered:
            continue
        action_id = _singleton_id(t, obj, occ)
        target = to_frame(occ.p, occ.frames[cfg.default_frame])
        registry[action_id] = instantiate(
            t,
            costs,
            action_id=action_id,
            object_id=obj,
            target=target,
            frame=cfg.default_frame,
            context=None,
            provenance=((occ.demo_id, occ.index),),
        )
        assignment[(occ.demo_id, occ.index)] = action_id

    report_rows.append(
        {
            "key": f"{t}:{obj}",
            "contexts": len(kept),
            "singletons": len(occurrences) - len(clustered),
            "frames": [c.frame for c in kept],
            "threshold": threshold,
            "scores": [round(c.score, 3) for c in clusters[:4]],
        }
    )


def infer(corpus: DemoCorpus, config: Optional[Config] = None) -> InferenceResult:
    """Build the symbolic action registry and per-demo action sequences."""
    config = config or Config()
    cfg = config.clustering
    costs = config.costs
    groups = collect_occurrences(corpus)
    registry: dict = {}
    assignment: dict = {}
    report_rows: list = []

    for key in sorted(groups):
        t, obj = key
        occurrences = groups[key]
        if t == "pick":
            action_id = f"pick:{obj}"
            registry[action_id] = instantiate(
                "pick",
                costs,
                action_id=action_id,
                object_id=obj,
                provenance=tuple(sorted((o.demo_id, o.index) for o in occurrences)),
            )
            for occ in occurrences:
                assignment[(occ.demo_id, occ.index)] = action_id
        else:
            _register_placements(
                key, occurrences, cfg, costs, corpus.n_demos, registry, assignment, report_rows
            )

    sequences = {}
    for demo in corpus:
        seq = []
        for index, action in enumerate(demo.actions):
            if (demo.id, index) in assignment:
                seq.append(assignment[(demo.id, index)])
        sequences[demo.id] = seq

    log.debug("inferred %d symbolic actions from %d demos", len(registry), corpus.n_demos)
    return InferenceResult(registry=registry, sequences=sequences, report={"groups": report_rows})
