"""Backward-chaining tree synthesis.

Each goal group starts as a bare sequence of its goal conditions. The tree is
simulated against every initial scene the group was demonstrated from; when
it fails, the condition that caused the failure is replaced by a
fallback: either the condition already holds, or a sequence of the chosen
action's preconditions followed by the action itself. The cheapest action
whose effect matches the failed condition is tried first. After every
expansion, branches whose actions would undo a guard to their left are
shifted before that guard, so the finished tree never oscillates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .actions import ActionTemplate, comp, evaluate, instantiate, unifies
from .bt import (
    ACTION,
    BTNode,
    CONDITION,
    ExecutionContext,
    FAILURE,
    FALLBACK,
    RUNNING,
    SEQUENCE,
    SUCCESS,
    action_node,
    clone,
    condition_node,
    fallback,
    find_node,
    find_parent,
    iter_nodes,
    sequence,
    tick,
)
from .config import Config
from .demo import DemoCorpus
from .errors import PlanBudgetExceeded, PlanConflictLoop, Unachievable
from .geometry import GRIPPER_CLOSED, WorldState
from .inference import DemoGroup

log = logging.getLogger(__name__)

IMPLICIT_GRIPPER_ACTIONS = ("setgripper:open", "setgripper:closed")


@dataclass
class GroupPlan:
    group: DemoGroup
    tree: BTNode
    expansions: int
    worlds: list


@dataclass
class PlanResult:
    tree: BTNode
    group_plans: list
    trace: list = field(default_factory=list)

    @property
    def expansions(self) -> int:
        return sum(g.expansions for g in self.group_plans)


class _IdGen:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self.counter = 0

    def next(self) -> str:
        self.counter += 1
        return f"{self.prefix}n{self.counter}"


def planning_registry(group: DemoGroup, config: Config) -> dict:
    """Group registry plus the always-available gripper moves."""
    registry = dict(group.registry)
    for state in ("open", "closed"):
        action_id = f"setgripper:{state}"
        if action_id not in registry:
            registry[action_id] = instantiate(
                "setgripper", config.costs, action_id=action_id, x=state
            )
    return registry


def planning_worlds(group: DemoGroup, corpus: DemoCorpus, config: Config) -> list:
    """Initial scenes of the group's demos, optionally doubled with
    closed-gripper variants so the tree learns to open up first."""
    worlds = [corpus.by_id(demo_id).initial_scene for demo_id in group.demo_ids]
    if config.planner.gripper_closed_scenarios:
        worlds += [replace(w, gripper=GRIPPER_CLOSED, held=None) for w in worlds]
    return worlds


def select_candidates(
    cond, registry: Mapping[str, ActionTemplate], config: Config
) -> list:
    """Actions able to achieve the condition, cheapest first, id as tiebreak."""
    matches = [
        t
        for t in registry.values()
        if any(unifies(post, cond, config.tolerances) for post in t.post)
    ]
    matches.sort(key=lambda t: (t.cost, t.id))
    return matches


def expand_node(node_id_gen: _IdGen, cond_node: BTNode, action: ActionTemplate) -> BTNode:
    """The fallback that replaces an unmet condition: hold it, or achieve it."""
    pre_nodes = [condition_node(node_id_gen.next(), p) for p in action.pre]
    act = action_node(node_id_gen.next(), action)
    return fallback(
        node_id_gen.next(),
        [cond_node, sequence(node_id_gen.next(), pre_nodes + [act])],
    )


def _subtree_posts(node: BTNode) -> list:
    posts = []
    for n in iter_nodes(node):
        if n.kind == ACTION:
            posts.extend(n.payload.post)
    return posts


def _guard_of(node: BTNode):
    """The condition a sequence child stands for: a bare condition leaf, or
    the guard of an already-expanded branch."""
    if node.kind == CONDITION:
        return node.payload
    if node.kind == FALLBACK and node.children and node.children[0].kind == CONDITION:
        return node.children[0].payload
    return None


def resolve_conflicts(tree: BTNode, config: Config) -> None:
    """Shift sequence branches left past guards their actions would violate.

    Mutates the tree. Raises PlanConflictLoop if any sequence revisits an
    ordering it already tried, which means two branches want to precede each
    other.
    """
    seen: dict = {}
    while True:
        moved = False
        for seq in iter_nodes(tree):
            if seq.kind != SEQUENCE:
                continue
            for i in range(1, len(seq.children)):
                child = seq.children[i]
                if child.kind == ACTION:
                    continue  # the action a sequence exists to run stays last
                posts = _subtree_posts(child)
                if not posts:
                    continue
                conflict = False
                for k in range(i):
                    guard = _guard_of(seq.children[k])
                    if guard is None:
                        continue
                    if any(not comp(p, guard, config.tolerances) for p in posts):
                        conflict = True
                        break
                if not conflict:
                    continue
                seq.children[i - 1], seq.children[i] = (
                    seq.children[i],
                    seq.children[i - 1],
                )
                order = tuple(c.id for c in seq.children)
                history = seen.setdefault(seq.id, set())
                if order in history:
                    raise PlanConflictLoop(
                        f"branch ordering oscillates in sequence {seq.id}"
                    )
                history.add(order)
                moved = True
                break
            if moved:
                break
        if not moved:
            return


def simulate(tree: BTNode, world: WorldState, config: Config) -> tuple:
    """Run the tree to termination.

    Returns (status, failed condition node, final world).
    """
    ctx = ExecutionContext(
        world=world,
        tolerances=config.tolerances,
        action_duration=config.planner.action_duration_ticks,
    )
    for _ in range(config.planner.tick_budget):
        status = tick(tree, ctx)
        if status == SUCCESS:
            return SUCCESS, None, ctx.world
        if status == FAILURE:
            return FAILURE, ctx.last_failed_condition, ctx.world
    return RUNNING, None, ctx.world


def _condition_node_for(tree: BTNode, cond) -> Optional[BTNode]:
    """The tree node carrying this condition, preferring one that is not
    already the guard of an expanded branch."""
    guards = set()
    for n in iter_nodes(tree):
        if n.kind == FALLBACK and n.children and n.children[0].kind == CONDITION:
            guards.add(id(n.children[0]))
    guarded = None
    for n in iter_nodes(tree):
        if n.kind == CONDITION and n.payload == cond:
            if id(n) not in guards:
                return n
            guarded = guarded or n
    return guarded


def _broken_goal(goals, world: WorldState, config: Config):
    for goal in goals:
        if not evaluate(goal, world, config.tolerances):
            return goal
    return None


def _first_failure(
    tree: BTNode, worlds: Sequence[WorldState], goals, config: Config
) -> tuple:
    """Simulate worlds in order; index and failed node of the first failure.

    A run only counts as solved if the goal conditions still hold in the
    final world. With one-tick actions a whole branch can fire inside a
    single tick, so a goal checked early in that tick may be stale by the
    time the root reports success; the unmet goal is handed back for
    expansion exactly like an ordinary failed condition.
    """
    for index, world in enumerate(worlds):
        status, failed, final = simulate(tree, world, config)
        if status == SUCCESS:
            broken = _broken_goal(goals, final, config)
            if broken is None:
                continue
            return index, FAILURE, _condition_node_for(tree, broken)
        return index, status, failed
    return len(worlds), SUCCESS, None


def _prefix_passes(
    tree: BTNode, worlds: Sequence[WorldState], goals, upto: int, config: Config
) -> bool:
    for world in worlds[:upto]:
        status, _, final = simulate(tree, world, config)
        if status != SUCCESS or _broken_goal(goals, final, config) is not None:
            return False
    return True


def plan_group(
    group: DemoGroup,
    corpus: DemoCorpus,
    config: Config,
    group_index: int,
    trace: Optional[list] = None,
) -> GroupPlan:
    """Grow one group's tree until every member scene reaches the goal."""
    trace = trace if trace is not None else []
    registry = planning_registry(group, config)
    worlds = planning_worlds(group, corpus, config)
    ids = _IdGen(f"g{group_index}:")
    tree = sequence(
        ids.next(), [condition_node(ids.next(), g) for g in group.goals]
    )
    banned: set = set()
    expansions = 0

    while True:
        fail_index, status, failed_node = _first_failure(tree, worlds, group.goals, config)
        if status == SUCCESS:
            return GroupPlan(group=group, tree=tree, expansions=expansions, worlds=worlds)
        if expansions >= config.planner.expansion_budget:
            raise PlanBudgetExceeded(
                f"group {group_index}: no tree after "
                f"{config.planner.expansion_budget} expansions"
            )
        if status == RUNNING:
            raise PlanBudgetExceeded(
                f"group {group_index}: scene {fail_index} still running after "
                f"{config.planner.tick_budget} ticks"
            )
        if failed_node is None:
            raise Unachievable(
                f"group {group_index}: scene {fail_index} fails without an "
                "expandable condition"
            )

        cond = failed_node.payload
        candidates = [
            t
            for t in select_candidates(cond, registry, config)
            if (failed_node.id, t.id) not in banned
        ]
        if not candidates:
            raise Unachievable(
                f"group {group_index}: nothing achieves {cond.describe()!r}"
            )

        accepted = False
        for action in candidates:
            candidate = clone(tree)
            target = find_node(candidate, failed_node.id)
            parent = find_parent(candidate, failed_node.id)
            subtree = expand_node(ids, target, action)
            if parent is None:
                candidate = subtree
            else:
                parent.children[parent.children.index(target)] = subtree
            try:
                resolve_conflicts(candidate, config)
            except PlanConflictLoop:
                banned.add((failed_node.id, action.id))
                trace.append(
                    {
                        "group": group_index,
                        "event": "conflict_loop",
                        "condition": cond.describe(),
                        "action": action.id,
                    }
                )
                continue
            if not _prefix_passes(candidate, worlds, group.goals, fail_index, config):
                banned.add((failed_node.id, action.id))
                trace.append(
                    {
                        "group": group_index,
                        "event": "regression",
                        "condition": cond.describe(),
                        "action": action.id,
                    }
                )
                continue
            tree = candidate
            expansions += 1
            accepted = True
            trace.append(
                {
                    "group": group_index,
                    "event": "expand",
                    "scene": fail_index,
                    "condition": cond.describe(),
                    "action": action.id,
                    "expansions": expansions,
                }
            )
            break
        if not accepted:
            raise Unachievable(
                f"group {group_index}: every action for {cond.describe()!r} "
                "was rejected"
            )


def plan(groups: Sequence[DemoGroup], corpus: DemoCorpus, config: Optional[Config] = None) -> PlanResult:
    """Build the combined tree: a fallback over every goal group's tree."""
    config = config or Config()
    trace: list = []
    group_plans = [
        plan_group(group, corpus, config, index, trace)
        for index, group in enumerate(groups)
    ]
    root = fallback("root", [gp.tree for gp in group_plans])
    for gp in group_plans:
        for world in gp.worlds:
            status, _, final = simulate(root, world, config)
            solved = status == SUCCESS and any(
                _broken_goal(p.group.goals, final, config) is None
                for p in group_plans
            )
            if not solved:
                raise Unachievable(
                    "combined tree fails a scene its group tree solved"
                )
    log.debug(
        "planned %d groups, %d expansions total",
        len(group_plans),
        sum(g.expansions for g in group_plans),
    )
    return PlanResult(tree=root, group_plans=group_plans, trace=trace)
