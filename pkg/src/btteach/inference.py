"""Ordering constraints, goal conditions, and demo grouping.

Precedence pairs are collected from every demonstration; a pair observed in
both directions is treated as "order does not matter" and removed outright.
Whatever survives is reduced to its minimal edge set and used to push
placement effects into the preconditions of later actions, which is how the
planner learns to respect the demonstrated order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import networkx as nx

from .actions import Condition, IN_GRIPPER, GRIPPER, OBJECT_AT, comp
from .clustering import InferenceResult
from .config import Config, Tolerances
from .demo import DemoCorpus
from .errors import GoalEmpty

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstraintSet:
    """Reduced precedence edges plus what was discarded along the way."""

    edges: tuple
    dropped_symmetric: tuple = ()
    dropped_cyclic: tuple = ()

    def successors(self, action_id: str) -> list:
        return sorted(b for a, b in self.edges if a == action_id)


@dataclass
class DemoGroup:
    """Demos that share a goal, with their own constraints and registry."""

    demo_ids: tuple
    goals: tuple
    sequences: dict
    constraints: ConstraintSet
    registry: dict
    propagation_skipped: list = field(default_factory=list)


def extract_constraints(sequences: Mapping[str, Sequence[str]]) -> ConstraintSet:
    """Precedence pairs from the given demo sequences, cleaned and reduced."""
    pairs = set()
    for demo_id in sorted(sequences):
        seq = sequences[demo_id]
        for i in range(len(seq)):
            for j in range(i + 1, len(seq)):
                if seq[i] != seq[j]:
                    pairs.add((seq[i], seq[j]))

    symmetric = {(a, b) for (a, b) in pairs if (b, a) in pairs}
    pairs -= symmetric

    graph = nx.DiGraph()
    graph.add_edges_from(pairs)
    cyclic_edges = set()
    cyclic_groups = []
    for scc in nx.strongly_connected_components(graph):
        if len(scc) > 1:
            cyclic_groups.append(tuple(sorted(scc)))
            cyclic_edges |= {(a, b) for (a, b) in pairs if a in scc and b in scc}
    if cyclic_edges:
        log.warning("dropping %d precedence edges stuck in cycles", len(cyclic_edges))
        pairs -= cyclic_edges
        graph.remove_edges_from(cyclic_edges)

    if graph.number_of_edges():
        reduced = nx.transitive_reduction(graph)
        edges = tuple(sorted(reduced.edges()))
    else:
        edges = ()
    return ConstraintSet(
        edges=edges,
        dropped_symmetric=tuple(sorted(symmetric)),
        dropped_cyclic=tuple(sorted(cyclic_groups)),
    )


def propagate_preconditions(
    registry: Mapping[str, object],
    constraints: ConstraintSet,
    tolerances: Optional[Tolerances] = None,
) -> tuple:
    """Push placement postconditions along precedence edges.

    For every reduced edge a -> b, each spatial effect of a becomes an extra
    precondition of b, unless it contradicts something b already requires.
    Returns (new registry, list of skipped propagations).
    """
    tolerances = tolerances or Tolerances()
    new_pre = {aid: list(t.pre) for aid, t in registry.items()}
    skipped = []
    for a, b in sorted(constraints.edges):
        for post in registry[a].post:
            if post.kind != OBJECT_AT:
                continue
            if post in new_pre[b]:
                continue
            clash = next(
                (pre for pre in new_pre[b] if not comp(post, pre, tolerances)), None
            )
            if clash is not None:
                skipped.append(((a, b), post.describe(), clash.describe()))
                continue
            new_pre[b].append(post)
    out = {
        aid: (t.with_pre(tuple(new_pre[aid])) if list(t.pre) != new_pre[aid] else t)
        for aid, t in registry.items()
    }
    return out, skipped


def infer_goals(
    sequence: Sequence[str],
    registry: Mapping[str, object],
    config: Optional[Config] = None,
) -> tuple:
    """Goal conditions for one demo, scanning from the final action backwards.

    The last state an object was left in wins; earlier placements of the same
    object are transient. Raises GoalEmpty when nothing qualifies.
    """
    config = config or Config()
    tolerances = config.tolerances
    include_gripper = config.goals.include_gripper
    goals: list = []
    for action_id in reversed(list(sequence)):
        for post in registry[action_id].post:
            if post.kind == OBJECT_AT:
                if any(g.kind == OBJECT_AT and g.object == post.object for g in goals):
                    continue
            elif post.kind in (GRIPPER, IN_GRIPPER):
                if not include_gripper:
                    continue
                if any(g.kind == post.kind for g in goals):
                    continue
            if all(comp(post, g, tolerances) for g in goals):
                goals.append(post)
    if not any(g.kind == OBJECT_AT for g in goals):
        raise GoalEmpty("no object placements found in demonstration")
    return tuple(goals)


def same_goal(a: Condition, b: Condition, tol_m: float) -> bool:
    if a.kind != b.kind:
        return False
    if a.kind == OBJECT_AT:
        return (
            a.object == b.object
            and a.frame == b.frame
            and a.mode == b.mode
            and a.target.dist(b.target) <= tol_m
        )
    return a == b


def goals_match(ga: Sequence[Condition], gb: Sequence[Condition], tol_m: float) -> bool:
    """Multiset equality of goal conditions, spatial targets within tol_m."""
    if len(ga) != len(gb):
        return False
    remaining = list(gb)
    for c in ga:
        for j, d in enumerate(remaining):
            if same_goal(c, d, tol_m):
                remaining.pop(j)
                break
        else:
            return False
    return True


def group_demos(
    corpus: DemoCorpus, inference: InferenceResult, config: Optional[Config] = None
) -> list:
    """Split demos into groups with matching goals; each group gets its own
    constraint set and propagated registry."""
    config = config or Config()
    tol = config.tolerances.goal_group_m
    goals_by_demo = {}
    for demo in corpus:
        try:
            goals_by_demo[demo.id] = infer_goals(
                inference.sequences[demo.id], inference.registry, config
            )
        except GoalEmpty:
            raise GoalEmpty(f"demo {demo.id} yields no goal conditions")

    buckets: list = []
    for demo in corpus:
        for bucket in buckets:
            if goals_match(goals_by_demo[bucket[0]], goals_by_demo[demo.id], tol):
                bucket.append(demo.id)
                break
        else:
            buckets.append([demo.id])

    groups = []
    for bucket in buckets:
        sequences = {demo_id: inference.sequences[demo_id] for demo_id in bucket}
        constraints = extract_constraints(sequences)
        registry, skipped = propagate_preconditions(
            inference.registry, constraints, config.tolerances
        )
        groups.append(
            DemoGroup(
                demo_ids=tuple(bucket),
                goals=goals_by_demo[bucket[0]],
                sequences=sequences,
                constraints=constraints,
                registry=registry,
                propagation_skipped=skipped,
            )
        )
    log.debug("grouped %d demos into %d goal groups", corpus.n_demos, len(groups))
    return groups
