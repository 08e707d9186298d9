from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btteach.demo import (
    DemoAction,
    Demonstration,
    RecordingSession,
    load_demo,
    replay,
    save_demo,
    validate,
)
from btteach.errors import DemoInvalid, MigrationError
from btteach.geometry import (
    ObjectState,
    Position,
    Surface,
    WorldState,
    object_frame_id,
    snapshot_frames,
    world_digest,
)

CUBE = 0.05
HALF = CUBE / 2.0


def make_world(objects: dict, gripper: str = "open", held=None) -> WorldState:
    table = Surface(id="table", z=0.0, min_xy=(-1.0, -1.0), max_xy=(1.0, 1.0))
    return WorldState(objects=objects, surfaces={"table": table}, gripper=gripper, held=held)


def cube_at(x: float, y: float, z: float = HALF) -> ObjectState:
    return ObjectState(position=Position(x, y, z), extents=(CUBE, CUBE, CUBE))


def two_cube_world() -> WorldState:
    return make_world({"a": cube_at(0.2, 0.0), "b": cube_at(-0.2, 0.1)})


class TestRecording:
    def test_pick_place_advances_world(self):
        session = RecordingSession(two_cube_world(), "d1", label="move a")
        session.record("pick", "a")
        session.record("place", "a", target=Position(0.4, 0.4, HALF))
        demo = session.finish()
        assert [a.t for a in demo.actions] == ["pick", "place"]
        assert session.world.objects["a"].position == Position(0.4, 0.4, HALF)
        assert session.world.gripper == "open"
        # the initial scene is untouched by recording
        assert demo.initial_scene.objects["a"].position == Position(0.2, 0.0, HALF)

    def test_pick_defaults_to_object_position(self):
        session = RecordingSession(two_cube_world(), "d1")
        action = session.record("pick", "b")
        assert action.p == Position(-0.2, 0.1, HALF)

    def test_frames_snapshot_taken_before_action(self):
        session = RecordingSession(two_cube_world(), "d1")
        a0 = session.record("pick", "a")
        a1 = session.record("place", "a", target=Position(0.4, 0.4, HALF))
        # both snapshots show a at its pre-action pose
        assert a0.frames[object_frame_id("a")].origin == Position(0.2, 0.0, HALF)
        assert a1.frames[object_frame_id("a")].origin == Position(0.2, 0.0, HALF)
        a2_frames = snapshot_frames(session.world)
        assert a2_frames[object_frame_id("a")].origin == Position(0.4, 0.4, HALF)

    def test_place_before_pick_rejected(self):
        session = RecordingSession(two_cube_world(), "d1")
        with pytest.raises(DemoInvalid) as exc:
            session.record("place", "a", target=Position(0.4, 0.4, HALF))
        assert exc.value.rule == "causality"
        assert exc.value.index == 0

    def test_pick_while_holding_rejected(self):
        session = RecordingSession(two_cube_world(), "d1")
        session.record("pick", "a")
        with pytest.raises(DemoInvalid) as exc:
            session.record("pick", "b")
        assert exc.value.index == 1

    def test_gripper_moves_not_demonstrable(self):
        session = RecordingSession(two_cube_world(), "d1")
        with pytest.raises(DemoInvalid) as exc:
            session.record("setgripper", "", target=Position(0, 0, 0))
        assert exc.value.rule == "type"

    def test_unknown_object(self):
        session = RecordingSession(two_cube_world(), "d1")
        with pytest.raises(DemoInvalid):
            session.record("pick", "ghost")


class TestValidate:
    def test_empty_demo_flagged(self):
        demo = Demonstration("d1", "", two_cube_world(), [])
        assert [d[0] for d in validate(demo)] == ["nonempty"]

    def test_recorded_demo_is_clean(self):
        session = RecordingSession(two_cube_world(), "d1")
        session.record("pick", "a")
        session.record("drop", "a", target=Position(0.3, -0.3, 0.2))
        assert validate(session.finish()) == []

    def test_hand_built_causality_break(self):
        world = two_cube_world()
        bad = DemoAction(t="place", object="a", p=Position(0.4, 0.4, HALF))
        demo = Demonstration("d1", "", world, [bad])
        diags = validate(demo)
        assert diags and diags[0][0] == "causality" and diags[0][1] == 0


class TestReplay:
    def test_replay_reaches_recorded_final_world(self):
        session = RecordingSession(two_cube_world(), "d1")
        session.record("pick", "a")
        session.record("place", "a", target=Position(0.4, 0.4, HALF))
        session.record("pick", "b")
        session.record("place", "b", target=Position(0.4, 0.4, HALF + CUBE))
        demo = session.finish()
        final = replay(demo)
        assert world_digest(final) == world_digest(session.world)

    def test_replay_rejects_tampered_snapshot(self):
        session = RecordingSession(two_cube_world(), "d1")
        session.record("pick", "a")
        session.record("place", "a", target=Position(0.4, 0.4, HALF))
        demo = session.finish()
        frames = dict(demo.actions[1].frames)
        shifted = frames[object_frame_id("b")]
        frames[object_frame_id("b")] = type(shifted)(
            id=shifted.id, origin=Position(9.0, 9.0, 9.0), orientation=shifted.orientation
        )
        demo.actions[1] = DemoAction(
            t="place", object="a", p=demo.actions[1].p, frames=frames
        )
        with pytest.raises(DemoInvalid) as exc:
            replay(demo)
        assert exc.value.rule == "frames"
        assert exc.value.index == 1


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        session = RecordingSession(two_cube_world(), "d1", label="demo")
        session.record("pick", "a")
        session.record("place", "a", target=Position(0.35, 0.15, HALF))
        demo = session.finish()
        path = tmp_path / "d1.json"
        save_demo(demo, path)
        loaded = load_demo(path)
        assert loaded.id == "d1" and loaded.label == "demo"
        assert loaded.to_json() == demo.to_json()
        assert world_digest(replay(loaded)) == world_digest(session.world)

    def test_newer_schema_refused(self, tmp_path):
        session = RecordingSession(two_cube_world(), "d1")
        session.record("pick", "a")
        doc = session.finish().to_json()
        doc["schema"] = 2
        path = tmp_path / "d1.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(MigrationError):
            load_demo(path)

    def test_file_is_sorted_json(self, tmp_path):
        session = RecordingSession(two_cube_world(), "d1")
        session.record("pick", "a")
        path = tmp_path / "d1.json"
        save_demo(session.finish(), path)
        text = path.read_text()
        assert json.loads(text) == session.finish().to_json()
        assert text.index('"actions"') < text.index('"initial_scene"')


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_random_sequences_replay_exactly(data):
    names = ["a", "b", "c"]
    objects = {}
    for i, name in enumerate(names):
        x = data.draw(st.floats(-0.8, 0.8), label=f"{name}.x")
        y = data.draw(st.floats(-0.8, 0.8), label=f"{name}.y")
        objects[name] = cube_at(round(x, 3), round(y, 3))
    session = RecordingSession(make_world(objects), "rand")
    n_moves = data.draw(st.integers(1, 4), label="moves")
    for m in range(n_moves):
        name = data.draw(st.sampled_from(names), label=f"obj{m}")
        tx = round(data.draw(st.floats(-0.8, 0.8), label=f"tx{m}"), 3)
        ty = round(data.draw(st.floats(-0.8, 0.8), label=f"ty{m}"), 3)
        session.record("pick", name)
        if data.draw(st.booleans(), label=f"drop{m}"):
            session.record("drop", name, target=Position(tx, ty, 0.3))
        else:
            session.record("place", name, target=Position(tx, ty, HALF))
    demo = session.finish()
    assert validate(demo) == []
    assert world_digest(replay(demo)) == world_digest(session.world)
