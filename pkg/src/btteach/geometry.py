"""Simulated tabletop world: poses, frames, gravity settling, primitives.

Objects are axis-aligned boxes identified by id. Object frames share the base
orientation (identity quaternion), so frame transforms are pure translations.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

import yaml

from .errors import FrameNotFound, ObjectNotFound, PrimitiveRejected, SceneInvalid

BASE_FRAME = "base"
GRIPPER_OPEN = "open"
GRIPPER_CLOSED = "closed"

# two footprints touching edge-to-edge do not count as support
_OVERLAP_EPS = 1e-9
_GROUND_Z = 0.0


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float

    def add(self, other: "Position") -> "Position":
        return Position(self.x + other.x, self.y + other.y, self.z + other.z)

    def sub(self, other: "Position") -> "Position":
        return Position(self.x - other.x, self.y - other.y, self.z - other.z)

    def dist(self, other: "Position") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )

    def horiz_dist(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_list(self) -> list:
        return [self.x, self.y, self.z]

    @staticmethod
    def from_seq(seq) -> "Position":
        x, y, z = (float(v) for v in seq)
        return Position(x, y, z)


@dataclass(frozen=True)
class Orientation:
    """Unit quaternion, w first. Recorded with poses, not used for frame math."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def as_list(self) -> list:
        return [self.w, self.x, self.y, self.z]

    @staticmethod
    def from_seq(seq) -> "Orientation":
        w, x, y, z = (float(v) for v in seq)
        return Orientation(w, x, y, z)


IDENTITY = Orientation()


@dataclass(frozen=True)
class Frame:
    id: str
    origin: Position
    orientation: Orientation = IDENTITY


def to_frame(p: Position, frame: Frame) -> Position:
    """Express a base-frame point in the given frame."""
    return p.sub(frame.origin)


def from_frame(p: Position, frame: Frame) -> Position:
    """Resolve a frame-local point back to base coordinates."""
    return p.add(frame.origin)


def object_frame_id(object_id: str) -> str:
    return f"object:{object_id}"


@dataclass(frozen=True)
class ObjectState:
    position: Position
    orientation: Orientation = IDENTITY
    # full box extents (dx, dy, dz) in meters
    extents: tuple = (0.05, 0.05, 0.05)
    container: bool = False

    @property
    def half(self) -> tuple:
        return (self.extents[0] / 2.0, self.extents[1] / 2.0, self.extents[2] / 2.0)

    @property
    def top_z(self) -> float:
        return self.position.z + self.half[2]

    @property
    def bottom_z(self) -> float:
        return self.position.z - self.half[2]

    def footprint(self) -> tuple:
        hx, hy, _ = self.half
        p = self.position
        return (p.x - hx, p.y - hy, p.x + hx, p.y + hy)


@dataclass(frozen=True)
class Surface:
    id: str
    z: float
    min_xy: tuple
    max_xy: tuple

    def footprint(self) -> tuple:
        return (self.min_xy[0], self.min_xy[1], self.max_xy[0], self.max_xy[1])


@dataclass(frozen=True)
class WorldState:
    objects: Mapping[str, ObjectState]
    surfaces: Mapping[str, Surface]
    gripper: str = GRIPPER_OPEN
    held: Optional[str] = None
    tick: int = 0

    def object(self, object_id: str) -> ObjectState:
        try:
            return self.objects[object_id]
        except KeyError:
            raise ObjectNotFound(object_id) from None

    def with_object(self, object_id: str, state: ObjectState) -> "WorldState":
        objs = dict(self.objects)
        objs[object_id] = state
        return replace(self, objects=objs)


def _rects_overlap(a: tuple, b: tuple) -> bool:
    return (
        min(a[2], b[2]) - max(a[0], b[0]) > _OVERLAP_EPS
        and min(a[3], b[3]) - max(a[1], b[1]) > _OVERLAP_EPS
    )


def _rest_top(obj: ObjectState, supports: Iterable[tuple]) -> float:
    """Top of the highest support this object can come to rest on.

    An object falls onto supports under its footprint. Supports above its
    center don't count (no teleporting up onto taller neighbors); a support
    within the lower half snaps the object up, which resolves the shallow
    penetration noisy placements produce. Containers only ever fall, so they
    can't climb onto their own contents.
    """
    fp = obj.footprint()
    limit = obj.bottom_z + 1e-6 if obj.container else obj.position.z
    best = _GROUND_Z
    for other_fp, top in supports:
        if top > best and top <= limit and _rects_overlap(fp, other_fp):
            best = top
    return best


def _settle_pass(world: WorldState) -> WorldState:
    supports: list = [(s.footprint(), s.z) for s in world.surfaces.values()]
    order = sorted(
        (oid for oid in world.objects if oid != world.held),
        key=lambda oid: (world.objects[oid].position.z, oid),
    )
    objects = dict(world.objects)
    for oid in order:
        obj = objects[oid]
        rest_z = _rest_top(obj, supports) + obj.half[2]
        if rest_z != obj.position.z:
            obj = replace(obj, position=replace(obj.position, z=rest_z))
            objects[oid] = obj
        top = obj.bottom_z if obj.container else obj.top_z
        supports.append((obj.footprint(), top))
    return replace(world, objects=objects)


def settle(world: WorldState) -> WorldState:
    """Let free objects fall onto the highest support below their footprint.

    Deterministic: objects are processed bottom-up (current z, then id), each
    resting on surfaces and already-settled objects, iterated to a fixpoint.
    Held objects stay put and support nothing while carried. Container objects
    support others at their interior floor, not their lid.
    """
    for _ in range(8):
        settled = _settle_pass(world)
        if settled == world:
            return settled
        world = settled
    return world


def object_inside(world: WorldState, container_id: str, object_id: str) -> bool:
    """True when the object's center lies inside the container's footprint and
    below its lid."""
    box = world.object(container_id)
    obj = world.object(object_id)
    fx0, fy0, fx1, fy1 = box.footprint()
    p = obj.position
    return fx0 < p.x < fx1 and fy0 < p.y < fy1 and p.z < box.top_z


def snapshot_frames(world: WorldState) -> dict:
    """All currently resolvable frames: base plus one per object."""
    frames = {BASE_FRAME: Frame(BASE_FRAME, Position(0.0, 0.0, 0.0))}
    for oid, obj in world.objects.items():
        fid = object_frame_id(oid)
        frames[fid] = Frame(fid, obj.position, obj.orientation)
    return frames


def resolve_frame(world: WorldState, frame_id: str) -> Frame:
    if frame_id == BASE_FRAME:
        return Frame(BASE_FRAME, Position(0.0, 0.0, 0.0))
    if frame_id.startswith("object:"):
        oid = frame_id.split(":", 1)[1]
        if oid in world.objects:
            obj = world.objects[oid]
            return Frame(frame_id, obj.position, obj.orientation)
    raise FrameNotFound(frame_id)


# ---------------------------------------------------------------- primitives

PRIMITIVE_TYPES = ("pick", "place", "drop", "setgripper")


def check_primitive(
    world: WorldState, t: str, object_id: str = "", x: str = "", target: Position | None = None
) -> Optional[str]:
    """Reason the primitive would be rejected, or None when applicable."""
    if t == "pick":
        if object_id not in world.objects:
            return f"unknown object {object_id!r}"
        if world.gripper != GRIPPER_OPEN:
            return "gripper is not open"
        if world.held is not None:
            return f"already holding {world.held!r}"
        return None
    if t in ("place", "drop"):
        if object_id not in world.objects:
            return f"unknown object {object_id!r}"
        if world.held != object_id:
            return f"not holding {object_id!r}"
        if target is None:
            return "no target pose"
        return None
    if t == "setgripper":
        if x not in (GRIPPER_OPEN, GRIPPER_CLOSED):
            return f"bad gripper state {x!r}"
        return None
    return f"unknown primitive type {t!r}"


def can_apply_primitive(world, t, object_id="", x="", target=None) -> bool:
    return check_primitive(world, t, object_id, x, target) is None


def apply_primitive(
    world: WorldState, t: str, object_id: str = "", x: str = "", target: Position | None = None
) -> WorldState:
    """Apply one manipulation primitive, returning the settled new world.

    Raises PrimitiveRejected (world unchanged) when preconditions fail.
    """
    reason = check_primitive(world, t, object_id, x, target)
    if reason is not None:
        raise PrimitiveRejected(f"{t}: {reason}")

    if t == "pick":
        w = replace(world, gripper=GRIPPER_CLOSED, held=object_id)
        return settle(w)
    if t == "place":
        w = world.with_object(object_id, replace(world.objects[object_id], position=target))
        w = replace(w, gripper=GRIPPER_OPEN, held=None)
        return settle(w)
    if t == "drop":
        # released above the target: keep xy, let gravity pick z
        obj = world.objects[object_id]
        moved = replace(obj, position=Position(target.x, target.y, target.z))
        w = world.with_object(object_id, moved)
        w = replace(w, gripper=GRIPPER_OPEN, held=None)
        return settle(w)
    # setgripper
    if x == GRIPPER_OPEN:
        w = replace(world, gripper=GRIPPER_OPEN, held=None)
        return settle(w)
    return replace(world, gripper=GRIPPER_CLOSED)


# -------------------------------------------------------------- disturbances

DISTURBANCE_KINDS = ("teleport", "remove_from_gripper")


@dataclass(frozen=True)
class Disturbance:
    kind: str
    object: str = ""
    target: Optional[Position] = None
    at_tick: int = 0

    def to_json(self) -> dict:
        d = {"kind": self.kind, "at_tick": self.at_tick}
        if self.object:
            d["object"] = self.object
        if self.target is not None:
            d["target"] = self.target.as_list()
        return d

    @staticmethod
    def from_json(d: dict) -> "Disturbance":
        return Disturbance(
            kind=d["kind"],
            object=d.get("object", ""),
            target=Position.from_seq(d["target"]) if d.get("target") else None,
            at_tick=int(d.get("at_tick", 0)),
        )


def apply_disturbance(world: WorldState, d: Disturbance) -> WorldState:
    """External world change outside any primitive."""
    if d.kind == "teleport":
        if d.object not in world.objects:
            raise ObjectNotFound(d.object)
        if d.target is None:
            raise PrimitiveRejected("teleport: no target pose")
        w = world.with_object(d.object, replace(world.objects[d.object], position=d.target))
        if world.held == d.object:
            # snatched out of the gripper; the gripper stays closed on nothing
            w = replace(w, held=None)
        return settle(w)
    if d.kind == "remove_from_gripper":
        if world.held is None:
            return world
        return settle(replace(world, held=None))
    raise PrimitiveRejected(f"unknown disturbance kind {d.kind!r}")


# ------------------------------------------------------------ serialization


def world_to_json(world: WorldState) -> dict:
    return {
        "objects": {
            oid: {
                "position": o.position.as_list(),
                "orientation": o.orientation.as_list(),
                "extents": list(o.extents),
                "container": o.container,
            }
            for oid, o in sorted(world.objects.items())
        },
        "surfaces": {
            sid: {"z": s.z, "min": list(s.min_xy), "max": list(s.max_xy)}
            for sid, s in sorted(world.surfaces.items())
        },
        "gripper": world.gripper,
        "held": world.held,
        "tick": world.tick,
    }


def world_from_json(d: dict) -> WorldState:
    objects = {}
    for oid, o in d.get("objects", {}).items():
        objects[oid] = ObjectState(
            position=Position.from_seq(o["position"]),
            orientation=Orientation.from_seq(o.get("orientation", [1, 0, 0, 0])),
            extents=tuple(float(v) for v in o.get("extents", [0.05, 0.05, 0.05])),
            container=bool(o.get("container", False)),
        )
    surfaces = {}
    for sid, s in d.get("surfaces", {}).items():
        surfaces[sid] = Surface(
            id=sid, z=float(s["z"]), min_xy=tuple(s["min"]), max_xy=tuple(s["max"])
        )
    return WorldState(
        objects=objects,
        surfaces=surfaces,
        gripper=d.get("gripper", GRIPPER_OPEN),
        held=d.get("held"),
        tick=int(d.get("tick", 0)),
    )


def world_digest(world: WorldState) -> str:
    blob = json.dumps(world_to_json(world), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _require(cond: bool, message: str):
    if not cond:
        raise SceneInvalid(message)


def scene_from_dict(data: dict) -> WorldState:
    """Validate and build a settled world from a scene document."""
    _require(isinstance(data, dict), "scene document must be a mapping")
    objects = {}
    for entry in data.get("objects", []) or []:
        if isinstance(entry, str):
            raise SceneInvalid(f"object entry must be a mapping, got {entry!r}")
        oid = entry.get("id")
        _require(bool(oid), "object without id")
        _require(oid not in objects, f"duplicate object id {oid!r}")
        _require("position" in entry, f"object {oid!r} missing position")
        pos = Position.from_seq(entry["position"])
        extents = tuple(float(v) for v in entry.get("extents", [0.05, 0.05, 0.05]))
        _require(all(v > 0 for v in extents), f"object {oid!r} has non-positive extents")
        _require(
            all(math.isfinite(v) for v in (pos.x, pos.y, pos.z)),
            f"object {oid!r} has non-finite position",
        )
        objects[oid] = ObjectState(
            position=pos,
            orientation=Orientation.from_seq(entry.get("orientation", [1, 0, 0, 0])),
            extents=extents,
            container=bool(entry.get("container", False)),
        )
    surfaces = {}
    for entry in data.get("surfaces", []) or []:
        sid = entry.get("id")
        _require(bool(sid), "surface without id")
        _require(sid not in surfaces, f"duplicate surface id {sid!r}")
        mn, mx = entry.get("min"), entry.get("max")
        _require(mn is not None and mx is not None, f"surface {sid!r} missing bounds")
        _require(mn[0] < mx[0] and mn[1] < mx[1], f"surface {sid!r} has empty area")
        surfaces[sid] = Surface(
            id=sid, z=float(entry.get("z", 0.0)), min_xy=tuple(mn), max_xy=tuple(mx)
        )
    gripper = data.get("gripper", GRIPPER_OPEN)
    _require(gripper in (GRIPPER_OPEN, GRIPPER_CLOSED), f"bad gripper state {gripper!r}")
    held = data.get("held")
    if held is not None:
        _require(held in objects, f"held object {held!r} not in scene")
        _require(gripper == GRIPPER_CLOSED, "holding an object requires a closed gripper")
    world = WorldState(objects=objects, surfaces=surfaces, gripper=gripper, held=held)
    return settle(world)


def load_scene(path: str | Path) -> WorldState:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        raise SceneInvalid(f"empty scene file {path}")
    return scene_from_dict(data)


def scene_to_dict(world: WorldState) -> dict:
    """Inverse of scene_from_dict (drops tick)."""
    return {
        "objects": [
            {
                "id": oid,
                "position": o.position.as_list(),
                "orientation": o.orientation.as_list(),
                "extents": list(o.extents),
                "container": o.container,
            }
            for oid, o in sorted(world.objects.items())
        ],
        "surfaces": [
            {"id": sid, "z": s.z, "min": list(s.min_xy), "max": list(s.max_xy)}
            for sid, s in sorted(world.surfaces.items())
        ],
        "gripper": world.gripper,
        "held": world.held,
    }
