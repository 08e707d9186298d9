/** Console state: what the panels show, derived from API payloads.
 *
 * Everything here is pure data-in data-out so it can be tested without a
 * browser. main.ts owns the DOM and calls these helpers.
 */
import type { RunEvent, RunMessage, World } from "./api.js";

export type Verb = "pick" | "place" | "drop" | "open" | "close";

export interface RunPanel {
  id: string;
  status: string;
  tick: number;
  world: World | null;
  log: string[];
  report: string | null;
  disturbedAt: number[];
  redoSeen: boolean;
}

export function newRunPanel(id: string): RunPanel {
  return {
    id,
    status: "running",
    tick: 0,
    world: null,
    log: [],
    report: null,
    disturbedAt: [],
    redoSeen: false,
  };
}

/** One readable line per noteworthy run event; quiet ticks produce none. */
export function describeEvent(ev: RunEvent): string[] {
  const lines: string[] = [];
  for (const id of ev.disturbed ?? []) lines.push(`tick ${ev.tick}: disturbed ${id}`);
  for (const id of ev.started ?? []) lines.push(`tick ${ev.tick}: started ${id}`);
  for (const id of ev.completed ?? []) lines.push(`tick ${ev.tick}: completed ${id}`);
  for (const id of ev.aborted ?? []) lines.push(`tick ${ev.tick}: aborted ${id}`);
  return lines;
}

/**
 * True when the tree went back to work after a disturbance: some action
 * started at a later tick than the given one.
 */
export function redoAfter(events: RunEvent[], disturbTick: number): boolean {
  return events.some((ev) => ev.tick > disturbTick && (ev.started?.length ?? 0) > 0);
}

/** Fold one socket message into the panel. Returns the same object, mutated. */
export function applyRunMessage(panel: RunPanel, msg: RunMessage): RunPanel {
  switch (msg.type) {
    case "snapshot": {
      panel.status = msg.status;
      panel.tick = msg.tick;
      panel.world = msg.world;
      panel.log = msg.events.flatMap(describeEvent);
      for (const ev of msg.events) {
        if (ev.disturbed?.length) panel.disturbedAt.push(ev.tick);
      }
      break;
    }
    case "tick": {
      panel.status = msg.status;
      panel.tick = msg.tick;
      panel.world = msg.world;
      panel.log.push(...describeEvent(msg));
      if (msg.disturbed?.length) panel.disturbedAt.push(msg.tick);
      const last = panel.disturbedAt[panel.disturbedAt.length - 1];
      if (last !== undefined && msg.tick > last && (msg.started?.length ?? 0) > 0) {
        panel.redoSeen = true;
      }
      break;
    }
    case "end": {
      panel.status = msg.status;
      panel.tick = msg.ticks;
      panel.world = msg.world;
      panel.report = msg.report ?? null;
      panel.log.push(`ended: ${msg.status} after ${msg.ticks} ticks`);
      break;
    }
    case "error": {
      panel.status = "error";
      panel.log.push(`stream error: ${msg.error}`);
      break;
    }
  }
  return panel;
}

/** Gripper line for the status bar. */
export function gripperLabel(world: World | null): string {
  if (!world) return "";
  if (world.held) return `gripper closed on ${world.held}`;
  return `gripper ${world.gripper}`;
}

/** Target z for a primitive aimed at a table point. */
export function primitiveTargetZ(verb: Verb, heldExtents: [number, number, number] | null): number {
  if (verb === "drop") return 0.2; // release height, object falls from here
  const half = heldExtents ? heldExtents[2] / 2 : 0.025;
  return half;
}
