"""Behavior tree engine: sequence/fallback control flow over condition and
action leaves, ticked reactively from the root.

Statuses are plain strings. No node caches its status between ticks; the only
cross-tick state is the progress counter of the currently running action,
owned by the ExecutionContext rather than the tree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from .actions import ActionTemplate, Condition, evaluate, resolve_target
from .config import Tolerances
from .errors import ParseError, PrimitiveRejected, TreeInvalid
from .geometry import WorldState, apply_primitive, check_primitive

SUCCESS = "success"
FAILURE = "failure"
RUNNING = "running"

SEQUENCE = "sequence"
FALLBACK = "fallback"
ACTION = "action"
CONDITION = "condition"

CONTROL_KINDS = (SEQUENCE, FALLBACK)
LEAF_KINDS = (ACTION, CONDITION)


@dataclass
class BTNode:
    kind: str
    id: str
    payload: object = None  # Condition or ActionTemplate for leaves
    children: list = field(default_factory=list)

    def label(self) -> str:
        if self.kind == SEQUENCE:
            return "->"
        if self.kind == FALLBACK:
            return "?"
        return self.payload.describe()


def sequence(node_id: str, children: list) -> BTNode:
    return BTNode(kind=SEQUENCE, id=node_id, children=children)


def fallback(node_id: str, children: list) -> BTNode:
    return BTNode(kind=FALLBACK, id=node_id, children=children)


def condition_node(node_id: str, cond: Condition) -> BTNode:
    return BTNode(kind=CONDITION, id=node_id, payload=cond)


def action_node(node_id: str, action: ActionTemplate) -> BTNode:
    return BTNode(kind=ACTION, id=node_id, payload=action)


class ExecutionContext:
    """World handle plus the per-run state actions need: progress of the one
    running action, activation counters, and per-tick event scratch."""

    def __init__(
        self,
        world: WorldState,
        tolerances: Tolerances | None = None,
        action_duration: int = 1,
    ):
        self.world = world
        self.tol = tolerances or Tolerances()
        self.action_duration = max(1, int(action_duration))
        self.progress: dict = {}
        self.running_id: Optional[str] = None
        self.activations = 0
        self.ticks = 0
        # per-tick scratch
        self.visited_actions: set = set()
        self.last_failed_condition: Optional[BTNode] = None
        self.started: list = []
        self.completed: list = []
        self.aborted: list = []
        self.failed_action: Optional[str] = None

    def begin_tick(self) -> None:
        self.ticks += 1
        self.visited_actions = set()
        self.last_failed_condition = None
        self.started = []
        self.completed = []
        self.aborted = []
        self.failed_action = None

    def end_tick(self) -> None:
        if self.running_id is not None and self.running_id not in self.visited_actions:
            self.abort(self.running_id)

    def abort(self, node_id: str) -> None:
        self.progress.pop(node_id, None)
        if self.running_id == node_id:
            self.running_id = None
        self.aborted.append(node_id)

    def running_action(self, root: BTNode) -> Optional[ActionTemplate]:
        if self.running_id is None:
            return None
        node = find_node(root, self.running_id)
        return node.payload if node else None


def _tick_action(node: BTNode, ctx: ExecutionContext) -> str:
    action: ActionTemplate = node.payload
    ctx.visited_actions.add(node.id)
    if ctx.running_id not in (None, node.id):
        # a higher-priority action took over; the old one aborts with no effects
        ctx.abort(ctx.running_id)

    target = resolve_target(action, ctx.world)
    reason = check_primitive(ctx.world, action.t, action.object, action.x, target)
    if reason is not None or (action.t in ("place", "drop") and target is None):
        ctx.abort(node.id)
        ctx.failed_action = action.id
        return FAILURE

    prog = ctx.progress.get(node.id, 0)
    if prog == 0:
        ctx.activations += 1
        ctx.started.append(action.id)
    prog += 1
    if prog >= ctx.action_duration:
        try:
            ctx.world = apply_primitive(ctx.world, action.t, action.object, action.x, target)
        except PrimitiveRejected:
            ctx.abort(node.id)
            ctx.failed_action = action.id
            return FAILURE
        ctx.progress.pop(node.id, None)
        if ctx.running_id == node.id:
            ctx.running_id = None
        ctx.completed.append(action.id)
        return SUCCESS
    ctx.progress[node.id] = prog
    ctx.running_id = node.id
    return RUNNING


def _tick_node(node: BTNode, ctx: ExecutionContext) -> str:
    if node.kind == CONDITION:
        ok = evaluate(node.payload, ctx.world, ctx.tol)
        if not ok:
            ctx.last_failed_condition = node
        return SUCCESS if ok else FAILURE
    if node.kind == ACTION:
        return _tick_action(node, ctx)
    if node.kind == SEQUENCE:
        for child in node.children:
            status = _tick_node(child, ctx)
            if status != SUCCESS:
                return status
        return SUCCESS
    if node.kind == FALLBACK:
        for child in node.children:
            status = _tick_node(child, ctx)
            if status != FAILURE:
                return status
        return FAILURE
    raise TreeInvalid(f"unknown node kind {node.kind!r}")


def tick(root: BTNode, ctx: ExecutionContext) -> str:
    """One reactive tick from the root. Aborts any running action the
    traversal no longer reaches."""
    ctx.begin_tick()
    status = _tick_node(root, ctx)
    ctx.end_tick()
    return status


# ----------------------------------------------------------------- structure


def iter_nodes(root: BTNode) -> Iterator[BTNode]:
    yield root
    for child in root.children:
        yield from iter_nodes(child)


def count_nodes(root: BTNode) -> int:
    return sum(1 for _ in iter_nodes(root))


def find_node(root: BTNode, node_id: str) -> Optional[BTNode]:
    for node in iter_nodes(root):
        if node.id == node_id:
            return node
    return None


def find_parent(root: BTNode, node_id: str) -> Optional[BTNode]:
    for node in iter_nodes(root):
        for child in node.children:
            if child.id == node_id:
                return node
    return None


def clone(root: BTNode) -> BTNode:
    """Structural copy keeping node ids; payloads are shared (immutable)."""
    return BTNode(
        kind=root.kind,
        id=root.id,
        payload=root.payload,
        children=[clone(c) for c in root.children],
    )


def validate_tree(root: BTNode) -> None:
    """Raise TreeInvalid on structural violations."""
    seen = set()
    for node in iter_nodes(root):
        if node.id in seen:
            raise TreeInvalid(f"duplicate node id {node.id!r}")
        seen.add(node.id)
        if node.kind in CONTROL_KINDS:
            if not node.children:
                raise TreeInvalid(f"control node {node.id!r} has no children")
            if node.payload is not None:
                raise TreeInvalid(f"control node {node.id!r} carries a payload")
        elif node.kind == CONDITION:
            if node.children:
                raise TreeInvalid(f"condition node {node.id!r} has children")
            if not isinstance(node.payload, Condition):
                raise TreeInvalid(f"condition node {node.id!r} payload is not a condition")
        elif node.kind == ACTION:
            if node.children:
                raise TreeInvalid(f"action node {node.id!r} has children")
            if not isinstance(node.payload, ActionTemplate):
                raise TreeInvalid(f"action node {node.id!r} payload is not an action")
        else:
            raise TreeInvalid(f"unknown node kind {node.kind!r}")


# ------------------------------------------------------------- serialization


def serialize(root: BTNode) -> dict:
    doc: dict = {"kind": root.kind, "id": root.id}
    if root.kind == CONDITION:
        doc["payload"] = {"condition": root.payload.to_json()}
    elif root.kind == ACTION:
        doc["payload"] = {"action": root.payload.to_json()}
    if root.kind in CONTROL_KINDS:
        doc["children"] = [serialize(c) for c in root.children]
    return doc


def deserialize(doc: dict, path: str = "root") -> BTNode:
    if not isinstance(doc, dict):
        raise ParseError("node must be a mapping", path=path)
    kind = doc.get("kind")
    node_id = doc.get("id")
    if kind not in CONTROL_KINDS + LEAF_KINDS:
        raise ParseError(f"unknown node kind {kind!r}", path=f"{path}.kind")
    if not node_id or not isinstance(node_id, str):
        raise ParseError("node id missing", path=f"{path}.id")
    if kind in CONTROL_KINDS:
        children_doc = doc.get("children") or []
        children = [
            deserialize(c, path=f"{path}.children[{i}]") for i, c in enumerate(children_doc)
        ]
        return BTNode(kind=kind, id=node_id, children=children)
    payload = doc.get("payload") or {}
    if kind == CONDITION:
        if "condition" not in payload:
            raise ParseError("condition node without condition payload", path=f"{path}.payload")
        return condition_node(node_id, Condition.from_json(payload["condition"]))
    if "action" not in payload:
        raise ParseError("action node without action payload", path=f"{path}.payload")
    return action_node(node_id, ActionTemplate.from_json(payload["action"]))


def tree_to_doc(root: BTNode) -> dict:
    return {"schema": 1, "root": serialize(root)}


def tree_digest(root: BTNode) -> str:
    import hashlib
    import json

    blob = json.dumps(tree_to_doc(root), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def tree_from_doc(doc: dict) -> BTNode:
    if not isinstance(doc, dict) or "root" not in doc:
        raise ParseError("tree document needs a root", path="root")
    schema = doc.get("schema", 1)
    if schema > 1:
        from .errors import MigrationError

        raise MigrationError(f"tree schema {schema} is newer than this build")
    root = deserialize(doc["root"])
    validate_tree(root)
    return root


_DOT_SHAPES = {
    SEQUENCE: ("box", ""),
    FALLBACK: ("diamond", ""),
    CONDITION: ("ellipse", ""),
    ACTION: ("ellipse", ', style=filled, fillcolor="lightgrey"'),
}


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(root: BTNode) -> str:
    """Deterministic graphviz rendering: control nodes as polygons, execution
    leaves as ovals, children in tick order."""
    lines = ["digraph bt {", "  rankdir=TB;"]
    for node in iter_nodes(root):
        shape, extra = _DOT_SHAPES[node.kind]
        lines.append(
            f'  "{_dot_escape(node.id)}" [shape={shape}, label="{_dot_escape(node.label())}"{extra}];'
        )
    for node in iter_nodes(root):
        for child in node.children:
            lines.append(f'  "{_dot_escape(node.id)}" -> "{_dot_escape(child.id)}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
