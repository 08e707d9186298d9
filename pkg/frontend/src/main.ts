/** Console wiring: one scene canvas, record/learn/run panels.
 *
 * Free play and recording both click primitives into the scene; during a
 * run the canvas switches to the live world stream and dragging a cube
 * posts a teleport disturbance so you can watch the tree redo its work.
 */
import { ApiError, Client } from "./api.js";
import type { RunMessage, SceneView, Vec3, World } from "./api.js";
import { draw, hitTest, makeViewport, toWorld } from "./render.js";
import type { Viewport } from "./render.js";
import {
  applyRunMessage,
  gripperLabel,
  newRunPanel,
  primitiveTargetZ,
} from "./state.js";
import type { RunPanel, Verb } from "./state.js";

const client = new Client("");

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

const canvas = $("world") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = $("status-line");
const runLog = $("run-log");

let scene: SceneView | null = null;
let demoSession: string | null = null;
let learnedTree: { id: string; nodes: number } | null = null;
let run: RunPanel | null = null;
let runSocket: WebSocket | null = null;
let drag: { id: string; x: number; y: number } | null = null;
let viewport: Viewport | null = null;

function say(text: string, bad = false): void {
  statusLine.textContent = text;
  statusLine.className = bad ? "bad" : "";
}

function logLine(text: string): void {
  const li = document.createElement("li");
  li.textContent = text;
  runLog.appendChild(li);
  runLog.scrollTop = runLog.scrollHeight;
}

function currentWorld(): World | null {
  if (run && run.world) return run.world;
  return scene?.world ?? null;
}

function redraw(): void {
  const world = currentWorld();
  if (!world) return;
  viewport = makeViewport(world, canvas.width, canvas.height);
  draw(ctx, world, viewport, { drag });
  $("gripper-line").textContent = gripperLabel(world);
}

function verb(): Verb {
  const checked = document.querySelector<HTMLInputElement>("input[name=verb]:checked");
  return (checked?.value ?? "pick") as Verb;
}

function refreshRecordPanel(): void {
  const recording = scene?.recording ?? false;
  ($("record-start") as HTMLButtonElement).disabled = !scene || recording;
  ($("record-finish") as HTMLButtonElement).disabled = !recording;
  $("record-status").textContent = recording
    ? `recording ${scene!.recorded} action(s)`
    : "not recording";
}

async function refreshDemoList(): Promise<void> {
  const demos = await client.listDemos();
  const ul = $("demo-list");
  ul.textContent = "";
  for (const ref of demos) {
    const li = document.createElement("li");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.value = ref.id;
    const label = document.createElement("span");
    label.textContent = ` ${ref.id}  ${ref.label}`;
    li.appendChild(box);
    li.appendChild(label);
    ul.appendChild(li);
  }
}

async function newScene(): Promise<void> {
  const task = ($("task-select") as HTMLSelectElement).value;
  const seed = parseInt(($("seed-input") as HTMLInputElement).value, 10);
  scene = await client.createTaskScene(task, Number.isNaN(seed) ? undefined : seed);
  run = null;
  runSocket?.close();
  runSocket = null;
  say(`scene ${scene.id} (${task})`);
  refreshRecordPanel();
  redraw();
}

async function applyPrimitive(x: number, y: number): Promise<void> {
  if (!scene) return;
  const world = scene.world;
  const v = verb();
  try {
    if (v === "pick") {
      const id = hitTest(world, x, y);
      if (!id) return say("nothing to pick there", true);
      scene = await client.primitive(scene.id, { t: "pick", object: id });
    } else if (v === "place" || v === "drop") {
      if (!world.held) return say("not holding anything", true);
      const extents = world.objects[world.held]?.extents ?? null;
      const target: Vec3 = [x, y, primitiveTargetZ(v, extents)];
      scene = await client.primitive(scene.id, { t: v, object: world.held, target });
    }
    say(`${v} ok${scene.recording ? ` (recorded ${scene.recorded})` : ""}`);
  } catch (err) {
    if (err instanceof ApiError) say(`${v} rejected: ${err.message}`, true);
    else throw err;
  }
  refreshRecordPanel();
  redraw();
}

async function setGripper(x: "open" | "closed"): Promise<void> {
  if (!scene) return;
  try {
    scene = await client.primitive(scene.id, { t: "setgripper", x });
    say(`gripper ${x}`);
  } catch (err) {
    if (err instanceof ApiError) say(`rejected: ${err.message}`, true);
    else throw err;
  }
  redraw();
}

function onRunMessage(msg: RunMessage): void {
  if (!run) return;
  const before = run.log.length;
  const wasRedo = run.redoSeen;
  applyRunMessage(run, msg);
  for (const line of run.log.slice(before)) logLine(line);
  if (run.redoSeen && !wasRedo) logLine("redo observed: the tree went back to work");
  $("run-status").textContent = `run ${run.id}: ${run.status} (tick ${run.tick})`;
  if (msg.type === "end" && run.report) {
    logLine(`report ${run.report} saved; replay it with: btteach report ${run.report}`);
  }
  redraw();
}

async function startRun(): Promise<void> {
  if (!learnedTree) return say("learn a tree first", true);
  if (!scene) return say("make a scene first", true);
  const hz = parseFloat(($("tick-hz") as HTMLInputElement).value) || 30;
  const res = await client.startRun({ tree: learnedTree.id, scene: scene.id, tick_hz: hz });
  run = newRunPanel(res.id);
  runLog.textContent = "";
  logLine(`run ${res.id} started on scene ${scene.id} at ${hz} ticks/s`);
  say("run started; drag a cube to disturb it");
  runSocket = client.openRunEvents(res.id, onRunMessage, () => {
    if (run && run.status === "running") logLine("stream closed");
  });
}

async function learnFromChecked(): Promise<void> {
  const ids = Array.from(
    document.querySelectorAll<HTMLInputElement>("#demo-list input:checked"),
  ).map((el) => el.value);
  if (ids.length === 0) return say("check at least one demo", true);
  say("learning...");
  try {
    const res = await client.learn(ids);
    learnedTree = { id: res.tree, nodes: res.nodes };
    $("learn-status").textContent = `tree ${res.tree} (${res.nodes} nodes)`;
    ($("run-btn") as HTMLButtonElement).disabled = false;
    ($("show-tree") as HTMLButtonElement).disabled = false;
    say(`learned tree ${res.tree}`);
  } catch (err) {
    if (err instanceof ApiError) say(`learning failed: ${err.message}`, true);
    else throw err;
  }
}

function canvasPoint(ev: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const py = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  return viewport ? toWorld(viewport, px, py) : [0, 0];
}

canvas.addEventListener("mousedown", (ev) => {
  if (!run || run.status !== "running" || !run.world) return;
  const [x, y] = canvasPoint(ev);
  const id = hitTest(run.world, x, y);
  if (id && !run.world.objects[id]?.container) drag = { id, x, y };
});

canvas.addEventListener("mousemove", (ev) => {
  if (!drag) return;
  const [x, y] = canvasPoint(ev);
  drag = { ...drag, x, y };
  redraw();
});

canvas.addEventListener("mouseup", async (ev) => {
  if (!drag || !run) return;
  const [x, y] = canvasPoint(ev);
  const obj = run.world?.objects[drag.id];
  const half = obj ? obj.extents[2] / 2 : 0.025;
  const moved = drag.id;
  drag = null;
  try {
    const res = await client.disturb(run.id, { object: moved, target: [x, y, half] });
    logLine(`disturbance scheduled: teleport ${moved} around tick ${res.tick}`);
  } catch (err) {
    if (err instanceof ApiError) say(`disturb rejected: ${err.message}`, true);
    else throw err;
  }
  redraw();
});

canvas.addEventListener("click", (ev) => {
  if (run && run.status === "running") return; // drags handle running mode
  const [x, y] = canvasPoint(ev);
  void applyPrimitive(x, y);
});

$("new-scene").addEventListener("click", () => void newScene());
$("gripper-open").addEventListener("click", () => void setGripper("open"));
$("gripper-close").addEventListener("click", () => void setGripper("closed"));
$("learn-btn").addEventListener("click", () => void learnFromChecked());
$("run-btn").addEventListener("click", () => void startRun());
$("refresh-demos").addEventListener("click", () => void refreshDemoList());

$("record-start").addEventListener("click", async () => {
  if (!scene) return;
  const res = await client.startDemo(scene.id, undefined, "recorded in console");
  demoSession = res.demo_session;
  scene = await client.getScene(scene.id);
  say(`recording demo ${res.demo_id}`);
  refreshRecordPanel();
});

$("record-finish").addEventListener("click", async () => {
  if (!demoSession || !scene) return;
  try {
    const res = await client.finishDemo(demoSession);
    say(`saved demo ${res.id} (${res.actions} actions)`);
    demoSession = null;
    scene = await client.getScene(scene.id);
    refreshRecordPanel();
    await refreshDemoList();
  } catch (err) {
    if (err instanceof ApiError) say(`finish rejected: ${err.message}`, true);
    else throw err;
  }
});

$("show-tree").addEventListener("click", async () => {
  if (!learnedTree) return;
  $("tree-dot").textContent = await client.treeDot(learnedTree.id);
});

async function boot(): Promise<void> {
  const health = await client.health();
  $("health-line").textContent = `btteach ${health.version} on ${health.workspace}`;
  await refreshDemoList();
  await newScene();
}

void boot();
