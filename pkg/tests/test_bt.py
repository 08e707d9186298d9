from __future__ import annotations

import random

import pytest

from btteach.actions import gripper, in_gripper, instantiate, object_at
from btteach.bt import (
    FAILURE,
    RUNNING,
    SUCCESS,
    BTNode,
    ExecutionContext,
    action_node,
    clone,
    condition_node,
    count_nodes,
    deserialize,
    fallback,
    find_parent,
    sequence,
    serialize,
    tick,
    to_dot,
    tree_from_doc,
    tree_to_doc,
    validate_tree,
)
from btteach.config import Costs
from btteach.errors import MigrationError, ParseError, TreeInvalid
from btteach.geometry import ObjectState, Position, Surface, WorldState

HALF = 0.025


def small_world(**kw) -> WorldState:
    objects = {
        "cube": ObjectState(position=Position(0.1, 0.1, HALF)),
        "box": ObjectState(position=Position(0.5, 0.5, 0.06), extents=(0.24, 0.24, 0.12), container=True),
    }
    return WorldState(
        objects=objects,
        surfaces={"table": Surface(id="table", z=0.0, min_xy=(-1, -1), max_xy=(1, 1))},
        **kw,
    )


def pick_cube_tree() -> BTNode:
    pick = instantiate("pick", Costs(), object_id="cube")
    return fallback(
        "f1",
        [
            condition_node("c1", in_gripper("cube")),
            sequence("s1", [condition_node("c2", gripper("open")), action_node("a1", pick)]),
        ],
    )


class TestTickSemantics:
    def test_sequence_returns_first_non_success(self):
        world = small_world(gripper="closed")
        seq = sequence(
            "s", [condition_node("c1", gripper("closed")), condition_node("c2", in_gripper("cube"))]
        )
        ctx = ExecutionContext(world)
        assert tick(seq, ctx) == FAILURE
        assert ctx.last_failed_condition.id == "c2"

    def test_fallback_returns_first_non_failure(self):
        world = small_world()
        fb = fallback(
            "f", [condition_node("c1", gripper("closed")), condition_node("c2", gripper("open"))]
        )
        ctx = ExecutionContext(world)
        assert tick(fb, ctx) == SUCCESS

    def test_condition_never_runs_actions(self):
        tree = pick_cube_tree()
        ctx = ExecutionContext(small_world(), action_duration=1)
        assert tick(tree, ctx) == SUCCESS
        assert ctx.activations == 1
        # goal now holds: later ticks short-circuit at the condition
        for _ in range(3):
            assert tick(tree, ctx) == SUCCESS
        assert ctx.activations == 1

    def test_action_duration_running_then_success(self):
        tree = pick_cube_tree()
        ctx = ExecutionContext(small_world(), action_duration=5)
        for _ in range(4):
            assert tick(tree, ctx) == RUNNING
            assert ctx.world.held is None  # no partial effects
        assert tick(tree, ctx) == SUCCESS
        assert ctx.world.held == "cube"
        assert ctx.activations == 1

    def test_action_failure_when_rejected(self):
        # gripper closed and nothing held: pick is rejected
        pick = instantiate("pick", Costs(), object_id="cube")
        tree = action_node("a1", pick)
        ctx = ExecutionContext(small_world(gripper="closed"))
        assert tick(tree, ctx) == FAILURE
        assert ctx.failed_action == pick.id

    def test_preempted_action_aborts_without_effects(self):
        pick_cube = instantiate("pick", Costs(), object_id="cube")
        pick_box = instantiate("pick", Costs(), object_id="box")
        tree = fallback(
            "f",
            [
                sequence(
                    "s1",
                    [
                        condition_node("c1", object_at("cube", Position(0.1, 0.1, HALF))),
                        action_node("a1", pick_cube),
                    ],
                ),
                action_node("a2", pick_box),
            ],
        )
        ctx = ExecutionContext(small_world(), action_duration=5)
        assert tick(tree, ctx) == RUNNING
        assert ctx.running_id == "a1"
        # the cube moves away; traversal now reaches a2, aborting a1
        ctx.world = ctx.world.with_object(
            "cube", ObjectState(position=Position(0.9, 0.9, HALF))
        )
        assert tick(tree, ctx) == RUNNING
        assert ctx.running_id == "a2"
        assert "a1" in ctx.aborted
        assert ctx.world.held is None  # a1 never applied

    def test_unreached_running_action_aborts_at_tick_end(self):
        tree = pick_cube_tree()
        ctx = ExecutionContext(small_world(), action_duration=5)
        assert tick(tree, ctx) == RUNNING
        # hand the cube over externally: first child succeeds, action unreached
        import dataclasses

        ctx.world = dataclasses.replace(ctx.world, gripper="closed", held="cube")
        assert tick(tree, ctx) == SUCCESS
        assert "a1" in ctx.aborted
        assert ctx.running_id is None

    def test_success_stays_success_while_undisturbed(self):
        tree = pick_cube_tree()
        ctx = ExecutionContext(small_world(), action_duration=1)
        tick(tree, ctx)
        for _ in range(5):
            assert tick(tree, ctx) == SUCCESS


def random_tree(rng: random.Random, depth: int = 0) -> BTNode:
    next_id = f"n{rng.randrange(10**9)}"
    if depth >= 3 or rng.random() < 0.4:
        if rng.random() < 0.5:
            cond = object_at(
                rng.choice("ab"),
                Position(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 1)),
                rng.choice(["base", "object:b"]),
                rng.choice(["precise", "loose"]),
            )
            return condition_node(next_id, cond)
        action = instantiate(
            rng.choice(["pick", "place", "drop", "setgripper"]),
            Costs(),
            object_id="a",
            x=rng.choice(["open", "closed"]),
            target=Position(0.1, 0.2, 0.3),
            context=rng.choice([None, 0, 1]),
            provenance=(("d1", rng.randrange(5)),),
        )
        return action_node(next_id, action)
    kids = [random_tree(rng, depth + 1) for _ in range(rng.randint(1, 3))]
    kind = rng.choice(["sequence", "fallback"])
    return BTNode(kind=kind, id=next_id, children=kids)


class TestStructure:
    def test_count_nodes(self):
        assert count_nodes(pick_cube_tree()) == 5

    def test_find_parent(self):
        tree = pick_cube_tree()
        assert find_parent(tree, "a1").id == "s1"
        assert find_parent(tree, "f1") is None

    def test_clone_is_independent(self):
        tree = pick_cube_tree()
        copy = clone(tree)
        copy.children[1].children.pop()
        assert count_nodes(tree) == 5
        assert count_nodes(copy) == 4

    def test_validate_rejects_malformed(self):
        with pytest.raises(TreeInvalid):
            validate_tree(BTNode(kind="sequence", id="s", children=[]))
        with pytest.raises(TreeInvalid):
            validate_tree(
                BTNode(kind="condition", id="c", payload=gripper("open"), children=[pick_cube_tree()])
            )
        dup = sequence("x", [condition_node("x", gripper("open"))])
        with pytest.raises(TreeInvalid):
            validate_tree(dup)

    def test_serialize_round_trip_random_trees(self):
        rng = random.Random(7)
        for _ in range(50):
            tree = random_tree(rng)
            doc = tree_to_doc(tree)
            again = tree_from_doc(doc) if tree.kind in ("sequence", "fallback") else deserialize(doc["root"])
            assert serialize(again) == serialize(tree)

    def test_parse_errors(self):
        with pytest.raises(ParseError):
            deserialize({"kind": "wiggle", "id": "x"})
        with pytest.raises(ParseError):
            deserialize({"kind": "condition", "id": "c", "payload": {}})
        with pytest.raises(ParseError):
            deserialize({"kind": "sequence"})
        with pytest.raises(MigrationError):
            tree_from_doc({"schema": 99, "root": {"kind": "condition", "id": "c"}})

    def test_dot_output_is_deterministic_and_shaped(self):
        tree = pick_cube_tree()
        dot = to_dot(tree)
        assert dot == to_dot(clone(tree))
        assert 'shape=diamond' in dot  # fallback
        assert 'shape=box' in dot  # sequence
        assert dot.count("->") >= 4
        assert '"f1" -> "c1"' in dot
