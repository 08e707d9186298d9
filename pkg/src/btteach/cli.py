"""Command line for the record, learn, run workflow.

Every verb works against a workspace directory (``--workspace`` or the
BTTEACH_WORKSPACE variable) and goes through the same pipeline the HTTP
service uses, so artifacts come out digest-identical either way.
"""
from __future__ import annotations

import functools
import json
import random
from dataclasses import replace
from pathlib import Path

import click
import yaml

from .bt import to_dot, tree_digest, tree_from_doc
from .config import load_config
from .demo import Demonstration, validate
from .errors import BtteachError
from .geometry import (
    Disturbance,
    scene_from_dict,
    settle,
    world_from_json,
    world_to_json,
)
from .pipeline import learn_from_demos, load_demos, load_tree, save_learned
from .runner import RunRecord, execute_run, replay_matches
from .scenarios import TASKS, demo_from_script, get_task
from .workspace import Workspace


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BtteachError as exc:
            stage = getattr(exc, "stage", "")
            where = f" [{stage}]" if stage else ""
            raise click.ClickException(f"{exc}{where}")

    return wrapper


def _load_doc(path: str) -> dict:
    text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise click.ClickException(f"{path} does not contain a mapping")
    return doc


@click.group()
@click.option(
    "--workspace",
    "-w",
    envvar="BTTEACH_WORKSPACE",
    default=None,
    help="Workspace directory (default ./btteach-workspace).",
)
@click.pass_context
def cli(ctx, workspace):
    """Teach manipulation tasks from demonstrations and run the results."""
    ws = Workspace.open(workspace)
    ctx.obj = {"ws": ws, "config": load_config(ws.root)}


@cli.group()
def scene():
    """Scenario artifacts."""


@scene.command("new")
@click.option("--task", "task_name", default=None, help="Sample a scene from a named task.")
@click.option("--file", "file_path", default=None, help="Scene document (YAML or JSON).")
@click.option("--seed", type=int, default=None)
@click.option("--label", default="")
@click.pass_obj
@_cli_errors
def scene_new(obj, task_name, file_path, seed, label):
    """Store a new scenario, from a task sampler or a scene file."""
    if task_name:
        world = get_task(task_name).sample_scene(random.Random(seed))
    elif file_path:
        world = scene_from_dict(_load_doc(file_path))
    else:
        raise click.ClickException("pass --task or --file")
    ref = obj["ws"].save("scenarios", world_to_json(world), label=label)
    click.echo(f"scenario {ref.id}")


@cli.group()
def demo():
    """Demonstration artifacts."""


@demo.command("record")
@click.argument("script", type=click.Path(exists=True))
@click.option("--id", "demo_id", default=None, help="Demo id (default: script stem).")
@click.option("--seed", type=int, default=None)
@click.option("--noise", type=float, default=None, help="Target jitter sigma in meters.")
@click.pass_obj
@_cli_errors
def demo_record(obj, script, demo_id, seed, noise):
    """Replay a scripted demonstration and store it."""
    doc = _load_doc(script)
    demo_id = demo_id or Path(script).stem
    demonstration = demo_from_script(doc, demo_id, seed=seed, sigma=noise)
    problems = validate(demonstration)
    if problems:
        rule, index, message = problems[0]
        raise click.ClickException(f"invalid demo ({rule} at action {index}): {message}")
    ref = obj["ws"].save(
        "demos",
        demonstration.to_json(),
        label=demonstration.label or demo_id,
        meta={"demo_id": demo_id, "actions": len(demonstration.actions)},
    )
    click.echo(f"demo {ref.id} ({len(demonstration.actions)} actions)")


@demo.command("synth")
@click.argument("task_name", metavar="TASK")
@click.option("--seed", type=int, default=None)
@click.pass_obj
@_cli_errors
def demo_synth(obj, task_name, seed):
    """Store the built-in demonstration set for a task."""
    task = get_task(task_name)
    corpus = task.build() if seed is None else task.build(seed=seed)
    for d in corpus:
        ref = obj["ws"].save(
            "demos",
            d.to_json(),
            label=d.label or d.id,
            meta={"demo_id": d.id, "actions": len(d.actions), "task": task.name},
        )
        click.echo(f"demo {ref.id} ({d.id}, {len(d.actions)} actions)")


@demo.command("list")
@click.pass_obj
def demo_list(obj):
    for ref in obj["ws"].entries("demos"):
        meta = ref.meta or {}
        click.echo(f"{ref.id}  {meta.get('demo_id', ''):<12} {ref.label}")


@cli.command("learn")
@click.argument("demo_ids", nargs=-1, required=True)
@click.option("--label", default="")
@click.pass_obj
@_cli_errors
def learn(obj, demo_ids, label):
    """Learn a tree from stored demonstrations."""
    ws = obj["ws"]
    ids = [ws.resolve("demos", d) for d in demo_ids]
    corpus = load_demos(ws, ids)
    outcome = learn_from_demos(list(corpus), obj["config"])
    saved = save_learned(ws, outcome, label=label)
    click.echo(f"tree {saved.tree.id}")
    click.echo(f"report {saved.report.id}")
    click.echo(f"nodes {outcome.report['nodes']}")


def _jittered(world, rng: random.Random, sigma: float):
    if sigma <= 0:
        return world
    objects = dict(world.objects)
    for oid, o in objects.items():
        p = o.position
        objects[oid] = replace(
            o, position=replace(p, x=p.x + rng.gauss(0, sigma), y=p.y + rng.gauss(0, sigma))
        )
    return settle(replace(world, objects=objects))


@cli.command("run")
@click.option("--tree", "tree_id", required=True)
@click.option("--scenario", "scenario_id", default=None, help="Stored scenario to run against.")
@click.option("--task", "task_name", default=None, help="Sample fresh scenes from a task.")
@click.option("--repeat", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="Seed for sampling and jitter.")
@click.option("--jitter", type=float, default=0.0, help="Gaussian XY noise added per repeat.")
@click.option("--budget", type=int, default=None, help="Tick budget override.")
@click.option(
    "--disturb",
    multiple=True,
    help='Disturbance JSON, e.g. \'{"kind":"teleport","object":"cube","target":[0,0,0.025],"at_tick":40}\'.',
)
@click.pass_obj
@_cli_errors
def run(obj, tree_id, scenario_id, task_name, repeat, seed, jitter, budget, disturb):
    """Execute a learned tree, optionally many times with scene noise."""
    ws = obj["ws"]
    config = obj["config"]
    if budget:
        config = replace(config, executor=replace(config.executor, tick_budget=budget))
    tree = load_tree(ws, ws.resolve("trees", tree_id))
    disturbances = [Disturbance.from_json(json.loads(d)) for d in disturb]

    rng = random.Random(seed)
    base_world = None
    task = None
    if scenario_id:
        base_world = world_from_json(ws.load("scenarios", ws.resolve("scenarios", scenario_id)))
    elif task_name:
        task = get_task(task_name)
    else:
        raise click.ClickException("pass --scenario or --task")

    successes = 0
    for i in range(repeat):
        world = task.sample_scene(rng) if task else _jittered(base_world, rng, jitter)
        record = execute_run(tree, world, config, disturbances=disturbances)
        ref = ws.save(
            "reports",
            {"type": "run", "tree": tree_digest(tree)[:12], "record": record.to_json()},
            meta={"type": "run", "reason": record.reason},
        )
        if record.reason == "success":
            successes += 1
        click.echo(f"run {i + 1}: {record.reason} in {record.ticks} ticks (report {ref.id})")
    if repeat > 1:
        click.echo(f"success rate: {successes}/{repeat}")


@cli.command("export-dot")
@click.argument("tree_id")
@click.option("--out", "-o", type=click.Path(), default=None)
@click.pass_obj
@_cli_errors
def export_dot(obj, tree_id, out):
    """Write a tree as Graphviz dot."""
    ws = obj["ws"]
    tree = load_tree(ws, ws.resolve("trees", tree_id))
    text = to_dot(tree)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


@cli.command("report")
@click.argument("artifact_id", required=False)
@click.option("--full", is_flag=True, help="Dump the stored JSON body.")
@click.pass_obj
@_cli_errors
def report(obj, artifact_id, full):
    """List artifacts, or inspect one (run reports get a replay check)."""
    ws = obj["ws"]
    if artifact_id is None:
        for ref in ws.entries():
            click.echo(f"{ref.kind:<10} {ref.id}  {ref.created}  {ref.label}")
        return
    matches = []
    for kind in ("reports", "trees", "demos", "scenarios"):
        try:
            matches.append((kind, ws.resolve(kind, artifact_id)))
        except BtteachError:
            continue
    if not matches:
        raise click.ClickException(f"no artifact matches {artifact_id!r}")
    if len(matches) > 1:
        raise click.ClickException(
            "ambiguous id: " + ", ".join(f"{k}/{a}" for k, a in matches)
        )
    kind, aid = matches[0]
    body = ws.load(kind, aid)
    if full:
        click.echo(json.dumps(body, indent=2, sort_keys=True))
        return
    click.echo(f"{kind} {aid}")
    if kind == "reports" and body.get("type") == "run":
        record = RunRecord.from_json(body["record"])
        click.echo(f"reason {record.reason} in {record.ticks} ticks")
        click.echo(f"activations {record.activations}")
        tree_ref = body.get("tree", "")
        if ws.exists("trees", tree_ref):
            tree = tree_from_doc(ws.load("trees", tree_ref))
            ok = replay_matches(record, tree)
            click.echo(f"replay {'ok' if ok else 'MISMATCH'}")
    elif kind == "reports" and body.get("type") == "learn":
        rep = body.get("report", {})
        click.echo(f"tree {body.get('tree', '')}")
        click.echo(f"nodes {rep.get('nodes')}  groups {len(rep.get('groups', []))}")
    elif kind == "trees":
        tree = tree_from_doc(body)
        click.echo(f"digest {tree_digest(tree)}")
    elif kind == "demos":
        demo_doc = Demonstration.from_json(body)
        click.echo(f"demo {demo_doc.id}: {len(demo_doc.actions)} actions")


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Start the HTTP/WebSocket service (also hosts the web console)."""
    from .server import serve as _serve

    _serve(root=str(ctx.obj["ws"].root), host=host, port=port, config=ctx.obj["config"])


def main():
    cli()


if __name__ == "__main__":
    main()
