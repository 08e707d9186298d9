/** Top-down canvas view of a world.
 *
 * The coordinate math lives in exported pure helpers (tested headless);
 * draw() is the only function that touches a canvas context.
 */
import type { Vec3, World, WorldObject } from "./api.js";

export interface Viewport {
  minX: number;
  minY: number;
  scale: number; // pixels per meter
  width: number;
  height: number;
}

/** Fit the union of all surfaces (plus padding) into a w x h canvas. */
export function makeViewport(world: World, width: number, height: number, pad = 0.08): Viewport {
  let minX = -0.5, minY = -0.5, maxX = 0.5, maxY = 0.5;
  const surfaces = Object.values(world.surfaces);
  if (surfaces.length > 0) {
    minX = Math.min(...surfaces.map((s) => s.min[0]));
    minY = Math.min(...surfaces.map((s) => s.min[1]));
    maxX = Math.max(...surfaces.map((s) => s.max[0]));
    maxY = Math.max(...surfaces.map((s) => s.max[1]));
  }
  minX -= pad; minY -= pad; maxX += pad; maxY += pad;
  const scale = Math.min(width / (maxX - minX), height / (maxY - minY));
  return { minX, minY, scale, width, height };
}

/** World xy to canvas pixels; world y points up, canvas y points down. */
export function toCanvas(vp: Viewport, x: number, y: number): [number, number] {
  return [(x - vp.minX) * vp.scale, vp.height - (y - vp.minY) * vp.scale];
}

export function toWorld(vp: Viewport, px: number, py: number): [number, number] {
  return [px / vp.scale + vp.minX, (vp.height - py) / vp.scale + vp.minY];
}

function footprintContains(obj: WorldObject, x: number, y: number, slop = 0): boolean {
  const [ox, oy] = obj.position;
  const hx = obj.extents[0] / 2 + slop;
  const hy = obj.extents[1] / 2 + slop;
  return Math.abs(x - ox) <= hx && Math.abs(y - oy) <= hy;
}

/** Topmost object under a world point, or null. Containers only match when
 * no plain object is under the point, so clicking into a box grabs its
 * content rather than the box. */
export function hitTest(world: World, x: number, y: number, slop = 0.01): string | null {
  let best: string | null = null;
  let bestKey = -Infinity;
  for (const [id, obj] of Object.entries(world.objects)) {
    if (!footprintContains(obj, x, y, slop)) continue;
    const key = obj.position[2] + (obj.container ? 0 : 1000);
    if (key > bestKey) {
      bestKey = key;
      best = id;
    }
  }
  return best;
}

/** How many objects sit underneath this one (0 = directly on a surface). */
export function pileLevel(world: World, id: string): number {
  const obj = world.objects[id];
  if (!obj) return 0;
  let level = 0;
  for (const [otherId, other] of Object.entries(world.objects)) {
    if (otherId === id || other.container) continue;
    if (other.position[2] < obj.position[2] && footprintContains(other, obj.position[0], obj.position[1])) {
      level += 1;
    }
  }
  return level;
}

const OBJECT_FILL = "#5b9bd5";
const HELD_FILL = "#e0a23c";
const CONTAINER_STROKE = "#7bc47f";

export interface DrawOverlay {
  selected?: string | null;
  drag?: { id: string; x: number; y: number } | null;
}

export function draw(ctx: CanvasRenderingContext2D, world: World, vp: Viewport, overlay: DrawOverlay = {}): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  ctx.fillStyle = "#11141a";
  ctx.fillRect(0, 0, vp.width, vp.height);

  for (const [id, s] of Object.entries(world.surfaces)) {
    const [x0, y0] = toCanvas(vp, s.min[0], s.max[1]);
    const [x1, y1] = toCanvas(vp, s.max[0], s.min[1]);
    ctx.fillStyle = "#1c222c";
    ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
    ctx.strokeStyle = "#333c4a";
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    ctx.fillStyle = "#55607080";
    ctx.font = "11px monospace";
    ctx.fillText(id, x0 + 4, y1 - 4);
  }

  const byHeight = Object.entries(world.objects).sort((a, b) => a[1].position[2] - b[1].position[2]);
  for (const [id, obj] of byHeight) {
    const pos: Vec3 = obj.position;
    const dragged = overlay.drag && overlay.drag.id === id;
    const cx = dragged ? overlay.drag!.x : pos[0];
    const cy = dragged ? overlay.drag!.y : pos[1];
    const [x0, y0] = toCanvas(vp, cx - obj.extents[0] / 2, cy + obj.extents[1] / 2);
    const w = obj.extents[0] * vp.scale;
    const h = obj.extents[1] * vp.scale;

    if (obj.container) {
      ctx.strokeStyle = CONTAINER_STROKE;
      ctx.lineWidth = 2;
      ctx.strokeRect(x0, y0, w, h);
      ctx.lineWidth = 1;
    } else {
      ctx.fillStyle = world.held === id ? HELD_FILL : OBJECT_FILL;
      ctx.globalAlpha = dragged ? 0.6 : 1.0;
      ctx.fillRect(x0, y0, w, h);
      ctx.globalAlpha = 1.0;
      const level = pileLevel(world, id);
      if (level > 0) {
        // stacking badge: a corner tag showing how high this cube sits
        ctx.fillStyle = "#f2d54c";
        ctx.font = "bold 10px monospace";
        ctx.fillText(`+${level}`, x0 + w - 14, y0 + 10);
      }
    }
    if (overlay.selected === id) {
      ctx.strokeStyle = "#e8e8e8";
      ctx.strokeRect(x0 - 2, y0 - 2, w + 4, h + 4);
    }
    ctx.fillStyle = "#d7dde6";
    ctx.font = "11px monospace";
    ctx.fillText(id, x0 + 2, y0 - 3);
  }

  if (world.held) {
    ctx.fillStyle = HELD_FILL;
    ctx.font = "12px monospace";
    ctx.fillText(`holding ${world.held}`, 8, 16);
  }
}
