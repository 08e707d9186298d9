"""Tick-by-tick execution of a tree against a simulated scene.

A run terminates when the root reports Success for a full stability window,
when it reports Failure, or when the tick budget runs out. Scheduled
disturbances mutate the world at the start of their tick, before the tree
sees it. Everything is deterministic, so a record can be re-executed and
compared field for field.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

from .bt import BTNode, ExecutionContext, FAILURE, SUCCESS, tick, tree_digest
from .config import Config, Tolerances
from .errors import ParseError
from .geometry import (
    Disturbance,
    WorldState,
    apply_disturbance,
    world_from_json,
    world_to_json,
)

SCHEMA_VERSION = 1


@dataclass
class RunRecord:
    tree_digest: str
    initial_scene: WorldState
    final_scene: WorldState
    disturbances: tuple
    settings: dict
    events: list
    reason: str  # success | failure | budget
    ticks: int
    first_success_tick: Optional[int]
    stable_since: Optional[int]
    activations: int
    unfired: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "tree_digest": self.tree_digest,
            "initial_scene": world_to_json(self.initial_scene),
            "final_scene": world_to_json(self.final_scene),
            "disturbances": [d.to_json() for d in self.disturbances],
            "settings": self.settings,
            "events": self.events,
            "reason": self.reason,
            "ticks": self.ticks,
            "first_success_tick": self.first_success_tick,
            "stable_since": self.stable_since,
            "activations": self.activations,
            "unfired": [d.to_json() for d in self.unfired],
        }

    @staticmethod
    def from_json(doc: dict) -> "RunRecord":
        if doc.get("schema", 1) > SCHEMA_VERSION:
            from .errors import MigrationError

            raise MigrationError(f"run schema {doc['schema']} is newer than this build")
        for key in ("tree_digest", "initial_scene", "final_scene", "reason"):
            if key not in doc:
                raise ParseError(f"run record is missing {key!r}", path=key)
        return RunRecord(
            tree_digest=doc["tree_digest"],
            initial_scene=world_from_json(doc["initial_scene"]),
            final_scene=world_from_json(doc["final_scene"]),
            disturbances=tuple(Disturbance.from_json(d) for d in doc["disturbances"]),
            settings=dict(doc["settings"]),
            events=list(doc["events"]),
            reason=doc["reason"],
            ticks=int(doc["ticks"]),
            first_success_tick=doc.get("first_success_tick"),
            stable_since=doc.get("stable_since"),
            activations=int(doc.get("activations", 0)),
            unfired=[Disturbance.from_json(d) for d in doc.get("unfired", [])],
        )


def _settings(config: Config) -> dict:
    ex = config.executor
    return {
        "action_duration_ticks": ex.action_duration_ticks,
        "success_stability_ticks": ex.success_stability_ticks,
        "tick_budget": ex.tick_budget,
        "tolerances": asdict(config.tolerances),
    }


def execute_run(
    tree: BTNode,
    world: WorldState,
    config: Optional[Config] = None,
    disturbances: Sequence[Disturbance] = (),
    on_tick=None,
    feed: Optional[Callable[[int], list]] = None,
) -> RunRecord:
    """Drive the tree until it settles. `on_tick(tick, status, ctx, applied)`
    is called after every tick when given (used for live event streams).
    `feed(tick)` may hand in extra disturbances while the run is live; they
    are stamped with the tick they landed on, so the record still replays."""
    config = config or Config()
    return _run(tree, world, _settings(config), tuple(disturbances), on_tick, feed)


def _run(
    tree: BTNode,
    world: WorldState,
    settings: dict,
    disturbances: tuple,
    on_tick=None,
    feed: Optional[Callable[[int], list]] = None,
) -> RunRecord:
    tolerances = Tolerances(**settings["tolerances"])
    stability = settings["success_stability_ticks"]
    budget = settings["tick_budget"]
    ctx = ExecutionContext(
        world=world,
        tolerances=tolerances,
        action_duration=settings["action_duration_ticks"],
    )
    by_tick: dict = {}
    for d in disturbances:
        by_tick.setdefault(d.at_tick, []).append(d)

    events: list = []
    fired_live: list = []
    streak = 0
    first_success = None
    activations = 0
    reason = "budget"
    last_status = None
    t = 0
    for t in range(1, budget + 1):
        applied = by_tick.pop(t, [])
        if feed is not None:
            for d in feed(t):
                d = replace(d, at_tick=t)
                fired_live.append(d)
                applied.append(d)
        for d in applied:
            ctx.world = apply_disturbance(ctx.world, d)
        status = tick(tree, ctx)
        activations += len(ctx.started)
        if (
            ctx.started
            or ctx.completed
            or ctx.aborted
            or applied
            or status != last_status
        ):
            entry = {"tick": t, "status": status}
            if ctx.started:
                entry["started"] = list(ctx.started)
            if ctx.completed:
                entry["completed"] = list(ctx.completed)
            if ctx.aborted:
                entry["aborted"] = list(ctx.aborted)
            if applied:
                entry["disturbed"] = [d.to_json() for d in applied]
            events.append(entry)
        last_status = status
        if on_tick is not None:
            on_tick(t, status, ctx, applied)

        if status == SUCCESS:
            streak += 1
            if first_success is None:
                first_success = t
        else:
            streak = 0
        if streak >= stability:
            reason = "success"
            break
        if status == FAILURE:
            reason = "failure"
            break

    unfired = [d for lst in by_tick.values() for d in lst]
    unfired.sort(key=lambda d: d.at_tick)
    # stable sort: scheduled disturbances stay ahead of live ones on the
    # same tick, matching the order they were applied in
    schedule = sorted(list(disturbances) + fired_live, key=lambda d: d.at_tick)
    return RunRecord(
        tree_digest=tree_digest(tree),
        initial_scene=world,
        final_scene=ctx.world,
        disturbances=tuple(schedule),
        settings=settings,
        events=events,
        reason=reason,
        ticks=t,
        first_success_tick=first_success,
        stable_since=t - stability + 1 if reason == "success" else None,
        activations=activations,
        unfired=unfired,
    )


def replay_run(record: RunRecord, tree: BTNode) -> RunRecord:
    """Re-execute a record's run with the same settings and schedule."""
    if tree_digest(tree) != record.tree_digest:
        raise ParseError("tree does not match the record's tree digest", path="tree")
    return _run(tree, record.initial_scene, record.settings, record.disturbances)


def replay_matches(record: RunRecord, tree: BTNode) -> bool:
    return replay_run(record, tree).to_json() == record.to_json()
