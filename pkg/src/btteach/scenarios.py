"""Built-in tasks: scripted demonstration corpora and evaluation scenes.

Every builder is deterministic for a given seed. Placement noise is applied
to the commanded target before it is recorded, so saved demos replay exactly.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional

from .config import Config
from .demo import DemoCorpus, Demonstration, RecordingSession
from .errors import ParseError
from .geometry import (
    ObjectState,
    Position,
    Surface,
    WorldState,
    object_inside,
    scene_from_dict,
)

CUBE = 0.05
HALF = CUBE / 2.0
TABLE = Surface(id="table", z=0.0, min_xy=(-1.0, -1.0), max_xy=(1.0, 1.0))


def _world(objects: dict, gripper: str = "open") -> WorldState:
    return WorldState(
        objects=objects, surfaces={"table": TABLE}, gripper=gripper, held=None
    )


def cube(x: float, y: float, z: float = HALF, side: float = CUBE) -> ObjectState:
    return ObjectState(position=Position(x, y, z), extents=(side, side, side))


def tray(x: float, y: float, *, sx: float, sy: float, height: float) -> ObjectState:
    return ObjectState(
        position=Position(x, y, height / 2.0),
        extents=(sx, sy, height),
        container=True,
    )


def _jit(rng: random.Random, p: Position, sigma: float) -> Position:
    if sigma <= 0:
        return p
    return Position(p.x + rng.gauss(0.0, sigma), p.y + rng.gauss(0.0, sigma), p.z)


def _stacked(world: WorldState, top: str, base: str, xy_tol: float = 0.03) -> bool:
    t = world.objects[top]
    b = world.objects[base]
    return (
        t.position.horiz_dist(b.position) <= xy_tol
        and abs(t.bottom_z - b.top_z) <= 0.005
    )


def _spread(rng: random.Random, n: int, min_gap: float, span: float = 0.7) -> list:
    """n table spots pairwise at least min_gap apart."""
    spots: list = []
    while len(spots) < n:
        p = (rng.uniform(-span, span), rng.uniform(-span, span))
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min_gap**2 for q in spots):
            spots.append(p)
    return spots


# ---------------------------------------------------------------------------
# object-in-box: drop one cube into a tray that moves between demos

BOX_DROP_OFFSET_Z = 0.2  # release height above the table when over the tray


def build_object_in_box(seed: int = 11, sigma: Optional[float] = None) -> DemoCorpus:
    sigma = Config().demo.noise_sigma_m if sigma is None else sigma
    rng = random.Random(seed)
    layouts = [
        ("d1", (0.45, 0.25), (-0.2, -0.1)),
        ("d2", (-0.5, 0.15), (0.3, -0.4)),
        ("d3", (0.05, -0.55), (-0.45, 0.5)),
    ]
    demos = []
    for demo_id, (bx, by), (cx, cy) in layouts:
        world = _world(
            {"box": tray(bx, by, sx=0.24, sy=0.24, height=0.12), "cube": cube(cx, cy)}
        )
        session = RecordingSession(world, demo_id, label="cube into box")
        session.record("pick", "cube")
        target = _jit(rng, Position(bx, by, BOX_DROP_OFFSET_Z), sigma)
        session.record("drop", "cube", target=target)
        demos.append(session.finish())
    return DemoCorpus(demos)


def object_in_box_scene(rng: random.Random) -> WorldState:
    (bx, by), (cx, cy) = _spread(rng, 2, min_gap=0.35)
    return _world(
        {"box": tray(bx, by, sx=0.24, sy=0.24, height=0.12), "cube": cube(cx, cy)}
    )


def object_in_box_achieved(world: WorldState) -> bool:
    return object_inside(world, "box", "cube")


# ---------------------------------------------------------------------------
# towers: two 2-cube towers, build order permuted between demos

TOWER_SPOTS = {"e": (0.45, 0.35), "f": (-0.45, 0.35)}
TOWER_SPOTS_ALT = {"e": (0.4, -0.45), "f": (-0.4, -0.45)}


def _tower_demo(
    demo_id: str,
    rng: random.Random,
    spots: dict,
    order: tuple,
    starts: dict,
    base_sigma: float = 0.004,
    top_sigma: float = 0.002,
) -> Demonstration:
    world = _world({name: cube(*starts[name]) for name in ("e", "c", "f", "d")})
    session = RecordingSession(world, demo_id, label="two towers")
    tops = {"e": "c", "f": "d"}
    for base in order:
        top = tops[base]
        sx, sy = spots[base]
        session.record("pick", base)
        session.record("place", base, target=_jit(rng, Position(sx, sy, HALF), base_sigma))
        session.record("pick", top)
        base_pos = session.world.objects[base].position
        target = _jit(
            rng, Position(base_pos.x, base_pos.y, base_pos.z + CUBE), top_sigma
        )
        session.record("place", top, target=target)
    return session.finish()


def build_towers(seed: int = 12) -> DemoCorpus:
    rng = random.Random(seed)
    d1 = _tower_demo(
        "d1",
        rng,
        TOWER_SPOTS,
        ("e", "f"),
        {"e": (0.1, -0.3), "c": (-0.2, -0.5), "f": (0.5, -0.5), "d": (-0.55, -0.2)},
    )
    d2 = _tower_demo(
        "d2",
        rng,
        TOWER_SPOTS,
        ("f", "e"),
        {"e": (-0.1, -0.45), "c": (0.35, -0.25), "f": (-0.4, -0.35), "d": (0.6, 0.0)},
    )
    return DemoCorpus([d1, d2])


def build_towers_two_positions(seed: int = 42) -> DemoCorpus:
    # coarser tower spots, finer stacking: the shared on-top offset has to
    # outscore the per-position clusters of absolute placements
    sig = dict(base_sigma=0.008, top_sigma=0.0015)
    rng = random.Random(seed)
    demos = [
        _tower_demo(
            "d1",
            rng,
            TOWER_SPOTS,
            ("e", "f"),
            {"e": (0.1, -0.3), "c": (-0.2, -0.5), "f": (0.5, -0.5), "d": (-0.55, -0.2)},
            **sig,
        ),
        _tower_demo(
            "d2",
            rng,
            TOWER_SPOTS,
            ("f", "e"),
            {"e": (-0.1, -0.45), "c": (0.35, -0.25), "f": (-0.4, -0.35), "d": (0.6, 0.0)},
            **sig,
        ),
        _tower_demo(
            "d3",
            rng,
            TOWER_SPOTS_ALT,
            ("e", "f"),
            {"e": (0.15, 0.55), "c": (-0.25, 0.6), "f": (0.55, 0.6), "d": (-0.6, 0.5)},
            **sig,
        ),
        _tower_demo(
            "d4",
            rng,
            TOWER_SPOTS_ALT,
            ("f", "e"),
            {"e": (-0.15, 0.5), "c": (0.3, 0.65), "f": (-0.5, 0.65), "d": (0.65, 0.45)},
            **sig,
        ),
    ]
    return DemoCorpus(demos)


def towers_scene(rng: random.Random) -> WorldState:
    spots = _spread(rng, 4, min_gap=0.22)
    names = ("e", "c", "f", "d")
    return _world({n: cube(*spots[i]) for i, n in enumerate(names)})


def towers_achieved(world: WorldState) -> bool:
    for base, top in (("e", "c"), ("f", "d")):
        if not _stacked(world, top, base):
            return False
    return True


# ---------------------------------------------------------------------------
# relocation: move a 3-cube stack onto a pad, using fixed buffer spots

RELOC_TEMP1 = (0.6, -0.6)
RELOC_TEMP2 = (-0.6, 0.6)
PAD_HEIGHT = 0.02


def _relocation_demo(
    demo_id: str,
    rng: random.Random,
    stack_xy: tuple,
    pad_xy: tuple,
    temp_sigma: float = 0.002,
    stack_sigma: float = 0.008,
) -> Demonstration:
    px, py = stack_xy
    mx, my = pad_xy
    world = _world(
        {
            "c": cube(px, py, HALF),
            "b": cube(px, py, HALF + CUBE),
            "a": cube(px, py, HALF + 2 * CUBE),
            "pad": ObjectState(
                position=Position(mx, my, PAD_HEIGHT / 2),
                extents=(0.15, 0.15, PAD_HEIGHT),
            ),
        }
    )
    session = RecordingSession(world, demo_id, label="relocate stack to pad")
    session.record("pick", "a")
    session.record(
        "place", "a", target=_jit(rng, Position(RELOC_TEMP1[0], RELOC_TEMP1[1], HALF), temp_sigma)
    )
    session.record("pick", "b")
    session.record(
        "place", "b", target=_jit(rng, Position(RELOC_TEMP2[0], RELOC_TEMP2[1], HALF), temp_sigma)
    )
    session.record("pick", "c")
    pad = session.world.objects["pad"].position
    session.record(
        "place", "c", target=_jit(rng, Position(pad.x, pad.y, PAD_HEIGHT + HALF), stack_sigma)
    )
    session.record("pick", "b")
    c_pos = session.world.objects["c"].position
    session.record(
        "place", "b", target=_jit(rng, Position(c_pos.x, c_pos.y, c_pos.z + CUBE), stack_sigma)
    )
    session.record("pick", "a")
    b_pos = session.world.objects["b"].position
    session.record(
        "place", "a", target=_jit(rng, Position(b_pos.x, b_pos.y, b_pos.z + CUBE), stack_sigma)
    )
    return session.finish()


def build_relocation(seed: int = 14) -> DemoCorpus:
    rng = random.Random(seed)
    layouts = [
        ("d1", (0.35, 0.3), (-0.35, -0.35)),
        ("d2", (-0.4, 0.25), (0.4, -0.3)),
        ("d3", (0.0, -0.45), (-0.5, 0.4)),
    ]
    return DemoCorpus([_relocation_demo(i, rng, s, p) for i, s, p in layouts])


def relocation_scene(rng: random.Random) -> WorldState:
    spots = _spread(rng, 2, min_gap=0.4, span=0.45)
    (px, py), (mx, my) = spots
    return _world(
        {
            "c": cube(px, py, HALF),
            "b": cube(px, py, HALF + CUBE),
            "a": cube(px, py, HALF + 2 * CUBE),
            "pad": ObjectState(
                position=Position(mx, my, PAD_HEIGHT / 2),
                extents=(0.15, 0.15, PAD_HEIGHT),
            ),
        }
    )


def relocation_achieved(world: WorldState) -> bool:
    pad = world.objects["pad"]
    c = world.objects["c"]
    if c.position.horiz_dist(pad.position) > 0.05 or abs(c.bottom_z - pad.top_z) > 0.005:
        return False
    return _stacked(world, "b", "c") and _stacked(world, "a", "b")


# ---------------------------------------------------------------------------
# kitting: eight parts fine-placed into labelled slots of a kit tray.
# Slot placement is exact: the marked areas leave no room for sloppiness,
# and identical slot offsets keep every demo in one goal group.

KIT_PARTS = ("k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8")
KIT_SLOTS = {
    "k1": (-0.18, -0.08),
    "k2": (-0.06, -0.08),
    "k3": (0.06, -0.08),
    "k4": (0.18, -0.08),
    "k5": (-0.18, 0.08),
    "k6": (-0.06, 0.08),
    "k7": (0.06, 0.08),
    "k8": (0.18, 0.08),
}
KIT_TRAY_HEIGHT = 0.1


def _kitting_demo(
    demo_id: str,
    rng: random.Random,
    tray_xy: tuple,
    starts: dict,
    order: tuple,
    sigma: float = 0.0,
) -> Demonstration:
    tx, ty = tray_xy
    objects = {"kit": tray(tx, ty, sx=0.5, sy=0.35, height=KIT_TRAY_HEIGHT)}
    objects.update({name: cube(*starts[name]) for name in KIT_PARTS})
    session = RecordingSession(_world(objects), demo_id, label="kit the parts")
    for name in order:
        session.record("pick", name)
        kit = session.world.objects["kit"].position
        dx, dy = KIT_SLOTS[name]
        target = _jit(rng, Position(kit.x + dx, kit.y + dy, HALF), sigma)
        session.record("place", name, target=target)
    return session.finish()


def _kit_starts(rng: random.Random, tray_xy: tuple) -> dict:
    while True:
        spots = _spread(rng, len(KIT_PARTS), min_gap=0.15)
        tx, ty = tray_xy
        if all(abs(x - tx) > 0.4 or abs(y - ty) > 0.33 for x, y in spots):
            return {name: spots[i] for i, name in enumerate(KIT_PARTS)}


def build_kitting(seed: int = 15) -> DemoCorpus:
    rng = random.Random(seed)
    layouts = [
        ("d1", (0.45, 0.25), KIT_PARTS),
        ("d2", (-0.5, 0.2), tuple(reversed(KIT_PARTS))),
        ("d3", (0.1, -0.5), ("k3", "k1", "k6", "k8", "k2", "k7", "k4", "k5")),
    ]
    demos = []
    for demo_id, tray_xy, order in layouts:
        starts = _kit_starts(rng, tray_xy)
        demos.append(_kitting_demo(demo_id, rng, tray_xy, starts, order))
    return DemoCorpus(demos)


def kitting_scene(rng: random.Random) -> WorldState:
    tray_xy = (rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
    starts = _kit_starts(rng, tray_xy)
    objects = {"kit": tray(tray_xy[0], tray_xy[1], sx=0.5, sy=0.35, height=KIT_TRAY_HEIGHT)}
    objects.update({name: cube(*starts[name]) for name in KIT_PARTS})
    return _world(objects)


def kitting_achieved(world: WorldState) -> bool:
    kit = world.objects["kit"]
    for name in KIT_PARTS:
        if not object_inside(world, "kit", name):
            return False
        dx, dy = KIT_SLOTS[name]
        slot = Position(kit.position.x + dx, kit.position.y + dy, 0.0)
        if world.objects[name].position.horiz_dist(slot) > 0.05:
            return False
    return True


# ---------------------------------------------------------------------------
# drop stacking: releasing one cube right above another

DROP_RELEASE_GAP = 0.04  # release height above the lower cube's top face


def build_drop_stack(seed: int = 16, t: str = "drop") -> DemoCorpus:
    rng = random.Random(seed)
    layouts = [
        ("d1", (0.3, 0.2), (-0.3, -0.2)),
        ("d2", (-0.35, 0.15), (0.35, -0.35)),
        ("d3", (0.05, -0.4), (-0.5, 0.45)),
    ]
    demos = []
    for demo_id, (gx, gy), (hx, hy) in layouts:
        world = _world({"g": cube(gx, gy), "h": cube(hx, hy)})
        session = RecordingSession(world, demo_id, label="stack by dropping")
        session.record("pick", "h")
        g = session.world.objects["g"]
        release = Position(g.position.x, g.position.y, g.top_z + HALF + DROP_RELEASE_GAP)
        session.record(t, "h", target=_jit(rng, release, 0.005))
        demos.append(session.finish())
    return DemoCorpus(demos)


def relabel_drops_as_places(corpus: DemoCorpus) -> DemoCorpus:
    """The same recorded motions, read as precise placements."""
    from dataclasses import replace as dc_replace

    demos = []
    for demo in corpus:
        actions = [
            dc_replace(a, t="place") if a.t == "drop" else a for a in demo.actions
        ]
        demos.append(
            Demonstration(
                id=demo.id,
                label=demo.label,
                initial_scene=demo.initial_scene,
                actions=actions,
            )
        )
    return DemoCorpus(demos)


def drop_stack_scene(rng: random.Random) -> WorldState:
    (gx, gy), (hx, hy) = _spread(rng, 2, min_gap=0.3)
    return _world({"g": cube(gx, gy), "h": cube(hx, hy)})


def drop_stack_adjacent_scene() -> WorldState:
    """h sits beside g: near enough for a loose goal, not a real stack."""
    return _world({"g": cube(0.2, 0.0), "h": cube(0.27, 0.0)})


def drop_stack_achieved(world: WorldState) -> bool:
    return _stacked(world, "h", "g")


# ---------------------------------------------------------------------------
# registry and scripting


@dataclass(frozen=True)
class TaskSpec:
    name: str
    build: Callable
    sample_scene: Callable
    achieved: Callable


TASKS = {
    "object-in-box": TaskSpec(
        "object-in-box", build_object_in_box, object_in_box_scene, object_in_box_achieved
    ),
    "towers": TaskSpec("towers", build_towers, towers_scene, towers_achieved),
    "towers-two-positions": TaskSpec(
        "towers-two-positions", build_towers_two_positions, towers_scene, towers_achieved
    ),
    "relocation": TaskSpec(
        "relocation", build_relocation, relocation_scene, relocation_achieved
    ),
    "kitting": TaskSpec("kitting", build_kitting, kitting_scene, kitting_achieved),
    "drop-stack": TaskSpec(
        "drop-stack", build_drop_stack, drop_stack_scene, drop_stack_achieved
    ),
}


def get_task(name: str) -> TaskSpec:
    if name not in TASKS:
        known = ", ".join(sorted(TASKS))
        raise ParseError(f"unknown task {name!r}; known tasks: {known}", path=name)
    return TASKS[name]


def demo_from_script(
    doc: dict,
    demo_id: str,
    seed: Optional[int] = None,
    sigma: Optional[float] = None,
) -> Demonstration:
    """Run a scripted demonstration.

    The script is a mapping with a scene document under "scene" and a list
    of steps under "steps". Each step needs "do" (pick, place or drop), an
    "object", and for placements an "at" position, optionally interpreted
    relative to another object via "relative_to". Per-step "noise" overrides
    the script-level noise sigma.
    """
    if "scene" not in doc:
        raise ParseError("script needs a scene", path="scene")
    world = scene_from_dict(doc["scene"])
    rng = random.Random(doc.get("seed", seed))
    script_sigma = float(doc.get("noise", 0.0 if sigma is None else sigma))
    session = RecordingSession(world, demo_id, label=str(doc.get("label", "")))
    for index, step in enumerate(doc.get("steps", [])):
        verb = step.get("do")
        obj = step.get("object", "")
        if verb == "pick":
            session.record("pick", obj)
            continue
        if verb not in ("place", "drop"):
            raise ParseError(f"step {index}: unknown verb {verb!r}", path=f"steps[{index}]")
        if "at" not in step:
            raise ParseError(f"step {index}: {verb} needs 'at'", path=f"steps[{index}]")
        target = Position.from_seq(step["at"])
        anchor = step.get("relative_to")
        if anchor:
            if anchor not in session.world.objects:
                raise ParseError(
                    f"step {index}: unknown anchor object {anchor!r}",
                    path=f"steps[{index}]",
                )
            base = session.world.objects[anchor].position
            target = Position(base.x + target.x, base.y + target.y, base.z + target.z)
        step_sigma = float(step.get("noise", script_sigma))
        session.record(verb, obj, target=_jit(rng, target, step_sigma))
    return session.finish()
