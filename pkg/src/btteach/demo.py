"""Demonstration capture and storage.

A demonstration is an initial scene plus the sequence of manipulation actions
the teacher performed, each with the end-effector pose and a snapshot of every
frame at that moment. Files are JSON, schema version 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

from .actions import DEMONSTRABLE_TYPES
from .errors import DemoInvalid, MigrationError, ParseError
from .geometry import (
    IDENTITY,
    Frame,
    Orientation,
    Position,
    WorldState,
    apply_primitive,
    check_primitive,
    snapshot_frames,
    world_from_json,
    world_to_json,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DemoAction:
    """One demonstrated action: type, gripper parameter, manipulated object,
    end-effector pose, and the frame snapshot taken just before execution."""

    t: str
    object: str
    p: Position
    o: Orientation = IDENTITY
    x: str = ""
    frames: Mapping[str, Frame] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "x": self.x,
            "object": self.object,
            "p": self.p.as_list(),
            "o": self.o.as_list(),
            "frames": {
                fid: {"origin": f.origin.as_list(), "orientation": f.orientation.as_list()}
                for fid, f in sorted(self.frames.items())
            },
        }

    @staticmethod
    def from_json(d: dict) -> "DemoAction":
        frames = {
            fid: Frame(
                id=fid,
                origin=Position.from_seq(f["origin"]),
                orientation=Orientation.from_seq(f.get("orientation", [1, 0, 0, 0])),
            )
            for fid, f in d.get("frames", {}).items()
        }
        return DemoAction(
            t=d["t"],
            x=d.get("x", ""),
            object=d.get("object", ""),
            p=Position.from_seq(d["p"]),
            o=Orientation.from_seq(d.get("o", [1, 0, 0, 0])),
            frames=frames,
        )


@dataclass
class Demonstration:
    id: str
    label: str
    initial_scene: WorldState
    actions: list

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "id": self.id,
            "label": self.label,
            "initial_scene": world_to_json(self.initial_scene),
            "actions": [a.to_json() for a in self.actions],
        }

    @staticmethod
    def from_json(d: dict) -> "Demonstration":
        schema = d.get("schema", 1)
        if schema > SCHEMA_VERSION:
            raise MigrationError(f"demo schema {schema} is newer than this build")
        if "id" not in d or "initial_scene" not in d:
            raise ParseError("demo document missing id or initial_scene", path="demo")
        return Demonstration(
            id=d["id"],
            label=d.get("label", ""),
            initial_scene=world_from_json(d["initial_scene"]),
            actions=[DemoAction.from_json(a) for a in d.get("actions", [])],
        )


@dataclass
class DemoCorpus:
    demos: list

    @property
    def n_demos(self) -> int:
        return len(self.demos)

    def by_id(self, demo_id: str) -> Demonstration:
        for d in self.demos:
            if d.id == demo_id:
                return d
        raise KeyError(demo_id)

    def __iter__(self) -> Iterator[Demonstration]:
        return iter(self.demos)


class RecordingSession:
    """Capture actions against a live world, enforcing gripper causality as
    the teacher goes (you can't place what you aren't holding)."""

    def __init__(self, world: WorldState, demo_id: str, label: str = ""):
        self.demo_id = demo_id
        self.label = label
        self.initial = world
        self.world = world
        self.actions: list = []

    def record(
        self,
        t: str,
        object_id: str,
        target: Position | None = None,
        orientation: Orientation = IDENTITY,
    ) -> DemoAction:
        index = len(self.actions)
        if t not in DEMONSTRABLE_TYPES:
            raise DemoInvalid(
                f"action {t!r} cannot be demonstrated", rule="type", index=index
            )
        p = target
        if t == "pick":
            if object_id not in self.world.objects:
                raise DemoInvalid(
                    f"unknown object {object_id!r}", rule="causality", index=index
                )
            p = p or self.world.objects[object_id].position
        if p is None:
            raise DemoInvalid(f"{t} needs a target pose", rule="causality", index=index)
        reason = check_primitive(self.world, t, object_id, target=p)
        if reason is not None:
            raise DemoInvalid(reason, rule="causality", index=index)
        action = DemoAction(
            t=t, object=object_id, p=p, o=orientation, frames=snapshot_frames(self.world)
        )
        self.world = apply_primitive(self.world, t, object_id, target=p)
        self.actions.append(action)
        return action

    def finish(self) -> Demonstration:
        return Demonstration(
            id=self.demo_id, label=self.label, initial_scene=self.initial, actions=self.actions
        )


def validate(demo: Demonstration) -> list:
    """Static diagnostics: (rule, index, message) tuples; empty means valid."""
    diags = []
    if not demo.actions:
        diags.append(("nonempty", -1, "demonstration has no actions"))
    world = demo.initial_scene
    for i, action in enumerate(demo.actions):
        if action.t not in DEMONSTRABLE_TYPES:
            diags.append(("type", i, f"action {action.t!r} cannot be demonstrated"))
            continue
        reason = check_primitive(world, action.t, action.object, target=action.p)
        if reason is not None:
            diags.append(("causality", i, reason))
            continue
        world = apply_primitive(world, action.t, action.object, target=action.p)
    return diags


def replay(demo: Demonstration, check_frames: bool = True) -> WorldState:
    """Re-run the demonstration from its initial scene.

    Verifies every stored frame snapshot matches the replayed world exactly;
    returns the final world.
    """
    world = demo.initial_scene
    for i, action in enumerate(demo.actions):
        if check_frames:
            expected = snapshot_frames(world)
            if dict(action.frames) != expected:
                raise DemoInvalid(
                    f"frame snapshot mismatch at action {i}", rule="frames", index=i
                )
        reason = check_primitive(world, action.t, action.object, target=action.p)
        if reason is not None:
            raise DemoInvalid(reason, rule="causality", index=i)
        world = apply_primitive(world, action.t, action.object, target=action.p)
    return world


def save_demo(demo: Demonstration, path: str | Path) -> None:
    Path(path).write_text(json.dumps(demo.to_json(), indent=2, sort_keys=True))


def load_demo(path: str | Path) -> Demonstration:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"demo file is not valid JSON: {exc}", path=str(path)) from None
    return Demonstration.from_json(data)
