"""Symbolic conditions and parameterized manipulation actions.

Conditions come in three kinds: gripper state, held object, and object-at-pose
(precise for fine placement, loose for drops). Actions carry pre/postcondition
sets built from a fixed table per action type.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .config import Config, Costs, Tolerances
from .errors import FrameNotFound, TemplateError
from .geometry import (
    BASE_FRAME,
    GRIPPER_CLOSED,
    GRIPPER_OPEN,
    IDENTITY,
    Frame,
    Orientation,
    Position,
    WorldState,
    from_frame,
    resolve_frame,
    to_frame,
)

log = logging.getLogger(__name__)

NONE_OBJECT = "none"

GRIPPER = "gripper"
IN_GRIPPER = "in_gripper"
OBJECT_AT = "object_at"

PRECISE = "precise"
LOOSE = "loose"


@dataclass(frozen=True)
class Condition:
    kind: str
    # gripper
    state: str = ""
    # in_gripper and object_at
    object: str = ""
    # object_at only
    target: Optional[Position] = None
    frame: str = BASE_FRAME
    mode: str = PRECISE

    def describe(self) -> str:
        if self.kind == GRIPPER:
            return f"gripper {self.state}"
        if self.kind == IN_GRIPPER:
            return f"holding {self.object}"
        t = self.target
        return f"{self.object} at [{t.x:.2f},{t.y:.2f},{t.z:.2f}] in {self.frame} ({self.mode})"

    def to_json(self) -> dict:
        if self.kind == GRIPPER:
            return {"kind": GRIPPER, "state": self.state}
        if self.kind == IN_GRIPPER:
            return {"kind": IN_GRIPPER, "object": self.object}
        return {
            "kind": OBJECT_AT,
            "object": self.object,
            "target": self.target.as_list(),
            "frame": self.frame,
            "mode": self.mode,
        }

    @staticmethod
    def from_json(d: dict) -> "Condition":
        kind = d.get("kind")
        if kind == GRIPPER:
            return gripper(d["state"])
        if kind == IN_GRIPPER:
            return in_gripper(d["object"])
        if kind == OBJECT_AT:
            return object_at(
                d["object"], Position.from_seq(d["target"]), d.get("frame", BASE_FRAME),
                d.get("mode", PRECISE),
            )
        from .errors import ParseError

        raise ParseError(f"unknown condition kind {kind!r}", path="kind")

    def sort_key(self) -> tuple:
        t = self.target
        return (
            self.kind, self.object, self.state, self.frame, self.mode,
            (t.x, t.y, t.z) if t else (),
        )


def gripper(state: str) -> Condition:
    return Condition(kind=GRIPPER, state=state)


def in_gripper(object_id: str) -> Condition:
    return Condition(kind=IN_GRIPPER, object=object_id)


def object_at(object_id: str, target: Position, frame: str = BASE_FRAME, mode: str = PRECISE) -> Condition:
    return Condition(kind=OBJECT_AT, object=object_id, target=target, frame=frame, mode=mode)


def comp(
    a: Condition,
    b: Condition,
    tol: Tolerances | None = None,
    frames: Mapping[str, Frame] | None = None,
) -> bool:
    """Can both conditions hold at once?

    Symmetric and reflexive. Two object-at conditions for the same object in
    different frames count as incompatible unless a frame snapshot is given to
    resolve them into common coordinates.
    """
    tol = tol or Tolerances()
    if a.kind == IN_GRIPPER and b.kind == IN_GRIPPER:
        return a.object == b.object
    if a.kind == GRIPPER and b.kind == GRIPPER:
        return a.state == b.state
    pairs = {a.kind, b.kind}
    if pairs == {GRIPPER, IN_GRIPPER}:
        g, i = (a, b) if a.kind == GRIPPER else (b, a)
        if g.state == GRIPPER_OPEN and i.object != NONE_OBJECT:
            return False
        return True
    if a.kind == OBJECT_AT and b.kind == OBJECT_AT and a.object == b.object:
        limit = tol.place_sphere_m if a.mode == PRECISE and b.mode == PRECISE else tol.drop_radius_m
        if a.frame == b.frame:
            return a.target.dist(b.target) <= limit
        if frames is not None and a.frame in frames and b.frame in frames:
            pa = from_frame(a.target, frames[a.frame])
            pb = from_frame(b.target, frames[b.frame])
            return pa.dist(pb) <= limit
        # unresolvable cross-frame targets for one object: assume they differ
        return False
    return True


def compatible_with_all(c: Condition, existing: Sequence[Condition], tol: Tolerances) -> bool:
    return all(comp(c, other, tol) for other in existing)


def evaluate(c: Condition, world: WorldState, tol: Tolerances | None = None) -> bool:
    """Check a condition against the current world. Never raises: unresolvable
    frames or missing objects evaluate false with a diagnostic log line."""
    tol = tol or Tolerances()
    if c.kind == GRIPPER:
        return world.gripper == c.state
    if c.kind == IN_GRIPPER:
        held = world.held if world.held is not None else NONE_OBJECT
        return held == c.object
    # object_at
    if c.object not in world.objects:
        log.debug("condition %s: object missing", c.describe())
        return False
    try:
        frame = resolve_frame(world, c.frame)
    except FrameNotFound:
        log.debug("condition %s: frame %s unresolvable", c.describe(), c.frame)
        return False
    goal = from_frame(c.target, frame)
    pos = world.objects[c.object].position
    if c.mode == PRECISE:
        return pos.dist(goal) <= tol.place_sphere_m
    # loose: cylinder below the recorded release pose
    dz = pos.z - goal.z
    return pos.horiz_dist(goal) <= tol.drop_radius_m and tol.drop_band_low_m <= dz <= tol.drop_band_high_m


def unifies(post: Condition, goal: Condition, tol: Tolerances | None = None) -> bool:
    """Does achieving `post` establish `goal`? Used for action selection."""
    tol = tol or Tolerances()
    if post.kind != goal.kind:
        return False
    if post.kind == GRIPPER:
        return post.state == goal.state
    if post.kind == IN_GRIPPER:
        return post.object == goal.object
    if post.object != goal.object or post.frame != goal.frame:
        return False
    if post.mode == LOOSE and goal.mode == PRECISE:
        return False  # a drop can't guarantee a fine pose
    limit = tol.place_sphere_m if goal.mode == PRECISE else tol.drop_radius_m
    return post.target.dist(goal.target) <= limit


# ------------------------------------------------------------------- actions

ACTION_TYPES = ("pick", "place", "drop", "setgripper")
DEMONSTRABLE_TYPES = ("pick", "place", "drop")


@dataclass(frozen=True)
class ActionTemplate:
    """One parameterized action: type, gripper parameter, target object and
    pose, plus the pre/postconditions that type implies."""

    id: str
    t: str
    object: str = ""
    x: str = ""
    target: Optional[Position] = None
    frame: str = BASE_FRAME
    orientation: Orientation = IDENTITY
    pre: tuple = ()
    post: tuple = ()
    cost: float = 1.0
    context: Optional[int] = None
    provenance: tuple = ()  # (demo_id, action_index) refs

    def describe(self) -> str:
        if self.t == "setgripper":
            return f"set gripper {self.x}"
        if self.t == "pick":
            return f"pick {self.object}"
        t = self.target
        return f"{self.t} {self.object} at [{t.x:.2f},{t.y:.2f},{t.z:.2f}] in {self.frame}"

    def with_pre(self, pre: tuple) -> "ActionTemplate":
        return replace(self, pre=pre)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "t": self.t,
            "object": self.object,
            "x": self.x,
            "target": self.target.as_list() if self.target else None,
            "frame": self.frame,
            "orientation": self.orientation.as_list(),
            "pre": [c.to_json() for c in self.pre],
            "post": [c.to_json() for c in self.post],
            "cost": self.cost,
            "context": self.context,
            "provenance": [list(ref) for ref in self.provenance],
        }

    @staticmethod
    def from_json(d: dict) -> "ActionTemplate":
        return ActionTemplate(
            id=d["id"],
            t=d["t"],
            object=d.get("object", ""),
            x=d.get("x", ""),
            target=Position.from_seq(d["target"]) if d.get("target") else None,
            frame=d.get("frame", BASE_FRAME),
            orientation=Orientation.from_seq(d.get("orientation", [1, 0, 0, 0])),
            pre=tuple(Condition.from_json(c) for c in d.get("pre", [])),
            post=tuple(Condition.from_json(c) for c in d.get("post", [])),
            cost=float(d.get("cost", 1.0)),
            context=d.get("context"),
            provenance=tuple((r[0], int(r[1])) for r in d.get("provenance", [])),
        )


def instantiate(
    t: str,
    costs: Costs | None = None,
    *,
    action_id: str = "",
    object_id: str = "",
    x: str = "",
    target: Position | None = None,
    frame: str = BASE_FRAME,
    orientation: Orientation = IDENTITY,
    context: Optional[int] = None,
    provenance: tuple = (),
) -> ActionTemplate:
    """Build an action of the given type with its standard pre/postconditions."""
    costs = costs or Costs()
    if t == "pick":
        if not object_id:
            raise TemplateError("pick needs an object")
        pre = (gripper(GRIPPER_OPEN),)
        post = (gripper(GRIPPER_CLOSED), in_gripper(object_id))
    elif t in ("place", "drop"):
        if not object_id or target is None:
            raise TemplateError(f"{t} needs an object and a target")
        mode = PRECISE if t == "place" else LOOSE
        pre = (in_gripper(object_id),)
        post = (
            object_at(object_id, target, frame, mode),
            gripper(GRIPPER_OPEN),
            in_gripper(NONE_OBJECT),
        )
    elif t == "setgripper":
        if x == GRIPPER_OPEN:
            pre = ()
            post = (gripper(GRIPPER_OPEN), in_gripper(NONE_OBJECT))
        elif x == GRIPPER_CLOSED:
            pre = ()
            post = (gripper(GRIPPER_CLOSED),)
        else:
            raise TemplateError(f"setgripper needs x in (open, closed), got {x!r}")
    else:
        raise TemplateError(f"unknown action type {t!r}")
    if not action_id:
        action_id = default_action_id(t, object_id, x, frame, context)
    return ActionTemplate(
        id=action_id,
        t=t,
        object=object_id,
        x=x,
        target=target,
        frame=frame,
        orientation=orientation,
        pre=pre,
        post=post,
        cost=costs.for_type(t),
        context=context,
        provenance=provenance,
    )


def default_action_id(t: str, object_id: str, x: str, frame: str, context) -> str:
    parts = [t]
    if object_id:
        parts.append(object_id)
    if x:
        parts.append(x)
    if t in ("place", "drop"):
        parts.append(frame)
    if context is not None:
        parts.append(f"c{context}")
    return ":".join(parts)


def resolve_target(action: ActionTemplate, world: WorldState) -> Optional[Position]:
    """Current base-frame target of an action, or None when its frame is gone."""
    if action.target is None:
        return None
    try:
        frame = resolve_frame(world, action.frame)
    except FrameNotFound:
        return None
    return from_frame(action.target, frame)
