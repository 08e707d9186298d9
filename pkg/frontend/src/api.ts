/** Typed client for the btteach HTTP service.
 *
 * No DOM dependencies: the same module runs in the browser and under the
 * test runner. WebSocket streaming is optional; pollRunUntilDone covers
 * environments without it.
 */

export type Vec3 = [number, number, number];

export interface WorldObject {
  position: Vec3;
  orientation: [number, number, number, number];
  extents: Vec3;
  container: boolean;
}

export interface WorldSurface {
  z: number;
  min: [number, number];
  max: [number, number];
}

export interface World {
  objects: Record<string, WorldObject>;
  surfaces: Record<string, WorldSurface>;
  gripper: string;
  held: string | null;
  tick: number;
}

export interface SceneView {
  id: string;
  world: World;
  digest: string;
  recording: boolean;
  demo_session: string | null;
  recorded: number;
}

export interface ArtifactRef {
  id: string;
  kind: string;
  label: string;
  created: string;
  meta: Record<string, unknown>;
}

export interface LearnResult {
  tree: string;
  report: string;
  nodes: number;
  digest: string;
  report_body: Record<string, unknown>;
}

/** Sparse per-tick entry from the run event log. */
export interface RunEvent {
  tick: number;
  status: string;
  started?: string[];
  completed?: string[];
  aborted?: string[];
  disturbed?: string[];
}

export interface RunRecord {
  schema: number;
  tree_digest: string;
  initial_scene: World;
  final_scene: World;
  disturbances: Array<Record<string, unknown>>;
  events: RunEvent[];
  reason: string;
  ticks: number;
  first_success_tick: number | null;
  stable_since: number | null;
  activations: number;
  [key: string]: unknown;
}

export interface RunView {
  id: string;
  tree: string;
  status: string;
  tick: number;
  world: World;
  digest: string;
  events: RunEvent[];
  record?: RunRecord;
  report?: string;
  error?: string;
}

/** Messages arriving on the run event socket. */
export type RunMessage =
  | ({ type: "snapshot"; status: string; tick: number; events: RunEvent[]; world: World })
  | ({ type: "tick"; world: World; running?: string } & RunEvent)
  | ({ type: "end"; status: string; ticks: number; report?: string; world: World })
  | ({ type: "error"; error: string });

export type PrimitiveKind = "pick" | "place" | "drop" | "setgripper";

export interface PrimitiveRequest {
  t: PrimitiveKind;
  object?: string;
  target?: Vec3;
  x?: string;
}

export interface DisturbRequest {
  kind?: "teleport" | "remove";
  object: string;
  target?: Vec3;
}

export interface StartRunRequest {
  tree: string;
  scene?: string;
  scenario?: Record<string, unknown>;
  task?: string;
  seed?: number;
  budget?: number;
  tick_hz?: number;
  disturbances?: Array<Record<string, unknown>>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly detail: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(res: Response): Promise<never> {
  let detail: Record<string, unknown> = {};
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = (await res.json()) as { detail?: Record<string, unknown> };
    if (body && typeof body.detail === "object" && body.detail !== null) {
      detail = body.detail;
      if (typeof detail.error === "string") message = detail.error;
    }
  } catch {
    // non-JSON error body, keep the status line
  }
  throw new ApiError(res.status, message, detail);
}

export class Client {
  constructor(readonly base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) await parseError(res);
    return (await res.json()) as T;
  }

  health(): Promise<{ version: string; workspace: string }> {
    return this.request("GET", "/api/health");
  }

  createTaskScene(task: string, seed?: number): Promise<SceneView> {
    return this.request("POST", "/api/scenes", { task, seed });
  }

  createScene(scene: Record<string, unknown>): Promise<SceneView> {
    return this.request("POST", "/api/scenes", { scene });
  }

  getScene(sid: string): Promise<SceneView> {
    return this.request("GET", `/api/scenes/${sid}`);
  }

  primitive(sid: string, req: PrimitiveRequest): Promise<SceneView> {
    return this.request("POST", `/api/scenes/${sid}/primitive`, req);
  }

  startDemo(scene: string, id?: string, label?: string): Promise<{ demo_session: string; scene: string; demo_id: string }> {
    return this.request("POST", "/api/demos/start", { scene, id, label });
  }

  finishDemo(dsid: string): Promise<{ id: string; demo_id: string; actions: number }> {
    return this.request("POST", `/api/demos/${dsid}/finish`);
  }

  async listDemos(): Promise<ArtifactRef[]> {
    const doc = await this.request<{ demos: ArtifactRef[] }>("GET", "/api/demos");
    return doc.demos;
  }

  learn(demos: string[], label?: string): Promise<LearnResult> {
    return this.request("POST", "/api/learn", { demos, label });
  }

  getTree(tid: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/api/trees/${tid}`);
  }

  async treeDot(tid: string): Promise<string> {
    const res = await fetch(`${this.base}/api/trees/${tid}?format=dot`);
    if (!res.ok) await parseError(res);
    return res.text();
  }

  startRun(req: StartRunRequest): Promise<{ id: string; tree: string; status: string }> {
    return this.request("POST", "/api/runs", req);
  }

  getRun(rid: string): Promise<RunView> {
    return this.request("GET", `/api/runs/${rid}`);
  }

  disturb(rid: string, req: DisturbRequest): Promise<{ run: string; scheduled: boolean; tick: number }> {
    return this.request("POST", `/api/runs/${rid}/disturb`, req);
  }

  /** Open the live event stream. Browser only; callers must have WebSocket. */
  openRunEvents(rid: string, onMessage: (msg: RunMessage) => void, onClose?: () => void): WebSocket {
    if (typeof WebSocket === "undefined") {
      throw new Error("WebSocket is not available in this environment");
    }
    const scheme = this.base.startsWith("https") ? "wss" : "ws";
    const host = this.base === "" ? location.host : new URL(this.base).host;
    const ws = new WebSocket(`${scheme}://${host}/api/runs/${rid}/events`);
    ws.onmessage = (ev) => onMessage(JSON.parse(String(ev.data)) as RunMessage);
    if (onClose) ws.onclose = onClose;
    return ws;
  }

  /** REST fallback for the stream: poll until the run leaves "running". */
  async pollRunUntilDone(rid: string, opts: { intervalMs?: number; timeoutMs?: number; onView?: (v: RunView) => void } = {}): Promise<RunView> {
    const interval = opts.intervalMs ?? 100;
    const deadline = Date.now() + (opts.timeoutMs ?? 60_000);
    for (;;) {
      const view = await this.getRun(rid);
      opts.onView?.(view);
      if (view.status !== "running") return view;
      if (Date.now() > deadline) throw new Error(`run ${rid} still running after timeout`);
      await new Promise((r) => setTimeout(r, interval));
    }
  }
}
