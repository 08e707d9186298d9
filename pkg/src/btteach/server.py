"""HTTP and WebSocket service for scenes, demo recording, learning and runs.

Scene sessions are in-memory worlds a client mutates through primitives;
starting a demo session turns those primitives into a recording. Learning
and run artifacts go through the same workspace module the CLI uses, so
either entry point produces byte-identical files. Runs execute on worker
threads and broadcast tick events to any number of WebSocket subscribers;
slow consumers lose oldest events first.
"""
from __future__ import annotations

import asyncio
import itertools
import json
import queue
import random
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .bt import to_dot, tree_from_doc
from .config import CONFIG_FILENAME, Config, load_config
from .demo import RecordingSession
from .errors import (
    BtteachError,
    DemoInvalid,
    MigrationError,
    ObjectNotFound,
    ParseError,
    PrimitiveRejected,
    SceneInvalid,
    TreeInvalid,
    WorkspaceError,
)
from .geometry import (
    Disturbance,
    Orientation,
    Position,
    apply_primitive,
    scene_from_dict,
    world_digest,
    world_to_json,
)
from .pipeline import learn_from_demos, load_demos, save_learned
from .runner import execute_run
from .scenarios import get_task
from .workspace import Workspace

EVENT_QUEUE_SIZE = 512


def _error_payload(exc: BtteachError) -> dict:
    payload = {"error": str(exc), "type": type(exc).__name__}
    stage = getattr(exc, "stage", "")
    if stage:
        payload["stage"] = stage
    if isinstance(exc, DemoInvalid):
        payload["rule"] = exc.rule
        payload["index"] = exc.index
    return payload


def _http_error(exc: BtteachError) -> HTTPException:
    status = 404 if isinstance(exc, WorkspaceError) else 422
    return HTTPException(status_code=status, detail=_error_payload(exc))


class _RunStopped(Exception):
    """Raised inside a run thread when the service is draining."""


class SceneSession:
    def __init__(self, sid: str, world):
        self.id = sid
        self.lock = threading.Lock()
        self.world = world
        self.recording: Optional[RecordingSession] = None
        self.demo_session: Optional[str] = None

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "world": world_to_json(self.world),
            "digest": world_digest(self.world),
            "recording": self.recording is not None,
            "demo_session": self.demo_session,
            "recorded": len(self.recording.actions) if self.recording else 0,
        }


class RunSession:
    def __init__(self, rid: str, tree_id: str, tree, world, config: Config, tick_hz: float):
        self.id = rid
        self.tree_id = tree_id
        self.tree = tree
        self.initial = world
        self.config = config
        self.tick_hz = tick_hz
        self.lock = threading.Lock()
        self.status = "running"
        self.tick = 0
        self.world = world
        self.events: list = []
        self._last_status: Optional[str] = None
        self.record = None
        self.report_id: Optional[str] = None
        self.error: Optional[str] = None
        self.pending: "queue.Queue" = queue.Queue()
        self.subscribers: list = []  # (event loop, asyncio queue) pairs
        self.stop = False
        self.thread: Optional[threading.Thread] = None

    def view(self) -> dict:
        with self.lock:
            doc = {
                "id": self.id,
                "tree": self.tree_id,
                "status": self.status,
                "tick": self.tick,
                "world": world_to_json(self.world),
                "digest": world_digest(self.world),
                "events": list(self.events),
            }
            if self.record is not None:
                doc["record"] = self.record.to_json()
            if self.report_id is not None:
                doc["report"] = self.report_id
            if self.error is not None:
                doc["error"] = self.error
            return doc

    def _broadcast(self, item: dict) -> None:
        # caller holds self.lock
        for loop, q in self.subscribers:
            loop.call_soon_threadsafe(_offer, q, item)

    def on_tick(self, t: int, status: str, ctx, applied: list) -> None:
        if self.stop:
            raise _RunStopped()
        event = {"type": "tick", "tick": t, "status": status}
        if ctx.started:
            event["started"] = list(ctx.started)
        if ctx.completed:
            event["completed"] = list(ctx.completed)
        if ctx.aborted:
            event["aborted"] = list(ctx.aborted)
        if applied:
            event["disturbed"] = [d.to_json() for d in applied]
        if ctx.running_id is not None:
            running = ctx.running_action(self.tree)
            if running is not None:
                event["running"] = running.id
        with self.lock:
            self.tick = t
            self.world = ctx.world
            changed = (
                ctx.started or ctx.completed or ctx.aborted or applied
                or status != self._last_status
            )
            if changed:
                self.events.append({k: v for k, v in event.items() if k != "type"})
            self._last_status = status
            self._broadcast({**event, "world": world_to_json(ctx.world)})
        if self.tick_hz > 0:
            time.sleep(1.0 / self.tick_hz)

    def feed(self, t: int) -> list:
        out = []
        while True:
            try:
                out.append(self.pending.get_nowait())
            except queue.Empty:
                return out

    def drive(self, workspace: Workspace) -> None:
        try:
            record = execute_run(
                self.tree,
                self.initial,
                self.config,
                on_tick=self.on_tick,
                feed=self.feed,
            )
        except _RunStopped:
            with self.lock:
                self.status = "aborted"
                self._broadcast({"type": "end", "status": "aborted"})
            return
        except BtteachError as exc:
            with self.lock:
                self.status = "error"
                self.error = str(exc)
                self._broadcast({"type": "end", "status": "error", "error": str(exc)})
            return
        ref = workspace.save(
            "reports",
            {"type": "run", "tree": self.tree_id, "record": record.to_json()},
            label=f"run {self.id}",
            meta={"type": "run", "tree": self.tree_id, "reason": record.reason},
        )
        with self.lock:
            self.record = record
            self.report_id = ref.id
            self.status = record.reason
            self.world = record.final_scene
            self._broadcast(
                {
                    "type": "end",
                    "status": record.reason,
                    "ticks": record.ticks,
                    "report": ref.id,
                    "world": world_to_json(record.final_scene),
                }
            )


def _offer(q: asyncio.Queue, item: dict) -> None:
    while True:
        try:
            q.put_nowait(item)
            return
        except asyncio.QueueFull:
            try:
                q.get_nowait()
            except asyncio.QueueEmpty:
                pass


def _position(value, field: str) -> Position:
    try:
        return Position.from_seq(value)
    except (TypeError, ValueError) as exc:
        raise HTTPException(422, detail={"error": f"bad {field}: {exc}"})


def create_app(
    root: Optional[str] = None,
    config: Optional[Config] = None,
    frontend_dir: Optional[str] = None,
) -> FastAPI:
    workspace = Workspace.open(root)
    cfg = config or load_config(workspace.root / CONFIG_FILENAME)

    scenes: dict = {}
    runs: dict = {}
    demo_sessions: dict = {}  # demo session id -> scene id
    counters = {k: itertools.count(1) for k in ("scene", "demo", "run")}
    ids_lock = threading.Lock()

    def next_id(kind: str, prefix: str) -> str:
        with ids_lock:
            return f"{prefix}{next(counters[kind])}"

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        # drain: stop live runs and wait for their threads
        for run in list(runs.values()):
            run.stop = True
        for run in list(runs.values()):
            if run.thread is not None:
                run.thread.join(timeout=5)

    app = FastAPI(title="btteach", version=__version__, lifespan=lifespan)
    app.state.workspace = workspace
    app.state.config = cfg

    def get_scene(sid: str) -> SceneSession:
        scene = scenes.get(sid)
        if scene is None:
            raise HTTPException(404, detail={"error": f"no scene session {sid!r}"})
        return scene

    def get_run(rid: str) -> RunSession:
        run = runs.get(rid)
        if run is None:
            raise HTTPException(404, detail={"error": f"no run {rid!r}"})
        return run

    @app.get("/api/health")
    def health() -> dict:
        return {"version": __version__, "workspace": str(workspace.root)}

    @app.post("/api/scenes")
    def create_scene(body: dict) -> dict:
        if "scene" in body:
            try:
                world = scene_from_dict(body["scene"])
            except (SceneInvalid, ParseError) as exc:
                raise _http_error(exc)
        elif "task" in body:
            try:
                task = get_task(body["task"])
            except ParseError as exc:
                raise _http_error(exc)
            world = task.sample_scene(random.Random(body.get("seed")))
        else:
            raise HTTPException(422, detail={"error": "need 'scene' or 'task'"})
        sid = next_id("scene", "s")
        scenes[sid] = SceneSession(sid, world)
        return scenes[sid].snapshot()

    @app.get("/api/scenes/{sid}")
    def read_scene(sid: str) -> dict:
        return get_scene(sid).snapshot()

    @app.post("/api/scenes/{sid}/primitive")
    def scene_primitive(sid: str, body: dict) -> dict:
        scene = get_scene(sid)
        t = body.get("t", "")
        object_id = body.get("object", "")
        target = _position(body["target"], "target") if body.get("target") else None
        orientation = (
            Orientation.from_seq(body["orientation"])
            if body.get("orientation")
            else Orientation()
        )
        with scene.lock:
            try:
                if scene.recording is not None:
                    scene.recording.record(t, object_id, target=target, orientation=orientation)
                    scene.world = scene.recording.world
                else:
                    if t == "pick" and target is None and object_id in scene.world.objects:
                        target = scene.world.objects[object_id].position
                    scene.world = apply_primitive(
                        scene.world, t, object_id, body.get("x", ""), target
                    )
            except (DemoInvalid, PrimitiveRejected, ObjectNotFound) as exc:
                raise _http_error(exc)
            return scene.snapshot()

    @app.post("/api/demos/start")
    def demo_start(body: dict) -> dict:
        scene = get_scene(body.get("scene", ""))
        with scene.lock:
            if scene.recording is not None:
                raise HTTPException(
                    409, detail={"error": f"scene {scene.id} is already recording"}
                )
            dsid = next_id("demo", "d")
            demo_id = body.get("id") or f"demo-{dsid}"
            scene.recording = RecordingSession(
                scene.world, demo_id, label=body.get("label", "")
            )
            scene.demo_session = dsid
            demo_sessions[dsid] = scene.id
        return {"demo_session": dsid, "scene": scene.id, "demo_id": demo_id}

    @app.post("/api/demos/{dsid}/finish")
    def demo_finish(dsid: str) -> dict:
        sid = demo_sessions.get(dsid)
        if sid is None:
            raise HTTPException(404, detail={"error": f"no demo session {dsid!r}"})
        scene = get_scene(sid)
        with scene.lock:
            if scene.demo_session != dsid or scene.recording is None:
                raise HTTPException(409, detail={"error": "demo session is not active"})
            demo = scene.recording.finish()
            if not demo.actions:
                raise HTTPException(422, detail={"error": "demo recorded no actions"})
            scene.recording = None
            scene.demo_session = None
        demo_sessions.pop(dsid, None)
        ref = workspace.save(
            "demos",
            demo.to_json(),
            label=demo.label or demo.id,
            meta={"demo_id": demo.id, "actions": len(demo.actions)},
        )
        return {"id": ref.id, "demo_id": demo.id, "actions": len(demo.actions)}

    @app.get("/api/demos")
    def demo_list() -> dict:
        return {"demos": [r.to_json() for r in workspace.entries("demos")]}

    @app.post("/api/learn")
    def learn(body: dict) -> dict:
        ids = body.get("demos") or []
        if not ids:
            raise HTTPException(422, detail={"error": "no demo ids given"})
        try:
            corpus = load_demos(workspace, ids)
        except WorkspaceError as exc:
            raise _http_error(exc)
        except (ParseError, MigrationError) as exc:
            raise _http_error(exc)
        try:
            outcome = learn_from_demos(list(corpus), cfg)
        except BtteachError as exc:
            raise _http_error(exc)
        saved = save_learned(workspace, outcome, label=body.get("label", ""))
        return {
            "tree": saved.tree.id,
            "report": saved.report.id,
            "nodes": outcome.report["nodes"],
            "digest": outcome.report["tree_digest"],
            "report_body": outcome.report,
        }

    @app.get("/api/trees/{tid}")
    def read_tree(tid: str, format: str = "json"):
        try:
            doc = workspace.load("trees", tid)
        except WorkspaceError as exc:
            raise _http_error(exc)
        if format == "dot":
            try:
                return PlainTextResponse(to_dot(tree_from_doc(doc)))
            except (ParseError, TreeInvalid, MigrationError) as exc:
                raise _http_error(exc)
        return doc

    @app.post("/api/runs")
    def start_run(body: dict) -> dict:
        tid = body.get("tree", "")
        try:
            tree = tree_from_doc(workspace.load("trees", tid))
        except (WorkspaceError, ParseError, TreeInvalid, MigrationError) as exc:
            raise _http_error(exc)
        if body.get("scene"):
            scene = get_scene(body["scene"])
            with scene.lock:
                world = scene.world
        elif body.get("scenario"):
            try:
                world = scene_from_dict(body["scenario"])
            except (SceneInvalid, ParseError) as exc:
                raise _http_error(exc)
        elif body.get("task"):
            try:
                task = get_task(body["task"])
            except ParseError as exc:
                raise _http_error(exc)
            world = task.sample_scene(random.Random(body.get("seed")))
        else:
            raise HTTPException(422, detail={"error": "need 'scene', 'scenario' or 'task'"})

        run_cfg = cfg
        if body.get("budget"):
            run_cfg = replace(
                cfg, executor=replace(cfg.executor, tick_budget=int(body["budget"]))
            )
        rid = next_id("run", "r")
        run = RunSession(rid, tid, tree, world, run_cfg, float(body.get("tick_hz", 0)))
        if body.get("disturbances"):
            for d in body["disturbances"]:
                run.pending.put(Disturbance.from_json(d))
        runs[rid] = run
        run.thread = threading.Thread(target=run.drive, args=(workspace,), daemon=True)
        run.thread.start()
        return {"id": rid, "tree": tid, "status": "running"}

    @app.post("/api/runs/{rid}/disturb")
    def disturb_run(rid: str, body: dict) -> dict:
        run = get_run(rid)
        with run.lock:
            if run.status != "running":
                raise HTTPException(
                    409, detail={"error": f"run {rid} already ended: {run.status}"}
                )
            kind = body.get("kind", "teleport")
            d = Disturbance(
                kind=kind,
                object=body.get("object", ""),
                target=_position(body["target"], "target") if body.get("target") else None,
            )
            if kind == "teleport":
                if d.object not in run.world.objects:
                    raise HTTPException(
                        422, detail={"error": f"unknown object {d.object!r}"}
                    )
                if d.target is None:
                    raise HTTPException(422, detail={"error": "teleport needs a target"})
            run.pending.put(d)
            return {"run": rid, "scheduled": True, "tick": run.tick}

    @app.get("/api/runs/{rid}")
    def read_run(rid: str) -> dict:
        return get_run(rid).view()

    @app.websocket("/api/runs/{rid}/events")
    async def run_events(ws: WebSocket, rid: str):
        run = runs.get(rid)
        await ws.accept()
        if run is None:
            await ws.send_text(json.dumps({"type": "error", "error": f"no run {rid!r}"}))
            await ws.close()
            return
        loop = asyncio.get_running_loop()
        q: asyncio.Queue = asyncio.Queue(maxsize=EVENT_QUEUE_SIZE)
        with run.lock:
            snapshot = {
                "type": "snapshot",
                "status": run.status,
                "tick": run.tick,
                "events": list(run.events),
                "world": world_to_json(run.world),
            }
            ended = run.status != "running"
            if not ended:
                run.subscribers.append((loop, q))
        try:
            await ws.send_text(json.dumps(snapshot))
            if ended:
                end = {"type": "end", "status": run.status}
                if run.report_id:
                    end["report"] = run.report_id
                await ws.send_text(json.dumps(end))
                return
            while True:
                item = await q.get()
                await ws.send_text(json.dumps(item))
                if item.get("type") == "end":
                    return
        except WebSocketDisconnect:
            pass
        finally:
            with run.lock:
                if (loop, q) in run.subscribers:
                    run.subscribers.remove((loop, q))
            try:
                await ws.close()
            except RuntimeError:
                pass

    static_dir = frontend_dir or Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app


def serve(
    root: Optional[str] = None,
    host: str = "127.0.0.1",
    port: int = 8321,
    config: Optional[Config] = None,
) -> None:
    import uvicorn

    uvicorn.run(create_app(root=root, config=config), host=host, port=port, log_level="warning")
