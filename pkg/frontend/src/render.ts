/**
 * Frame composition in two stages: a pure pass that turns view + tracks
 * into an ordered draw-command list (unit-testable, no DOM), and a thin
 * executor that replays the list onto a canvas 2D context over the
 * server-rendered heightmap PNG.
 *
 * The world->pixel mapping is the same one the service uses for its PNG,
 * so client overlays sit exactly on the server's own strokes:
 *   px = (x_mm - origin_x) / cell_mm * scale
 */

import { markersAt, trailOverlays } from "./overlay";
import type { GridInfo, TrackRow, ViewState } from "./types";

export type DrawCmd =
  | { op: "image"; width: number; height: number }
  | { op: "trail"; id: number; color: string; points: [number, number][] }
  | {
      op: "marker";
      id: number;
      color: string;
      x: number;
      y: number;
      r: number;
      selected: boolean;
    }
  | { op: "label"; id: number; color: string; x: number; y: number; text: string };

export interface RenderOptions {
  scale: number;
  /** Trail length in frames (window is [frame - trailLen, frame]). */
  trailLen: number;
}

export function worldToPx(
  grid: GridInfo,
  scale: number,
): (x_mm: number, y_mm: number) => [number, number] {
  const [ox, oy] = grid.origin;
  const cell = grid.cell_mm;
  return (x, y) => [((x - ox) / cell) * scale, ((y - oy) / cell) * scale];
}

/**
 * Canvas pixel size for a sequence grid (matches the PNG the service
 * returns for the same scale).
 */
export function canvasSize(grid: GridInfo, scale: number): [number, number] {
  return [grid.dims[0] * scale, grid.dims[1] * scale];
}

/**
 * Compute the composite for one frame.  With no track rows in view the
 * result is the bare heightmap; selected tracklets get a highlighted
 * marker.  Ordering is image, trails, markers, labels so text stays on
 * top.
 */
export function drawCommands(
  view: ViewState,
  grid: GridInfo,
  rows: TrackRow[],
  opts: RenderOptions,
): DrawCmd[] {
  const toPx = worldToPx(grid, opts.scale);
  const [width, height] = canvasSize(grid, opts.scale);
  const cmds: DrawCmd[] = [{ op: "image", width, height }];

  for (const trail of trailOverlays(rows, view.frame, opts.trailLen)) {
    if (trail.points.length < 2) continue;
    cmds.push({
      op: "trail",
      id: trail.id,
      color: trail.color,
      points: trail.points.map(([x, y]) => toPx(x, y)),
    });
  }

  const selected = new Set(view.selected);
  const markers = markersAt(rows, view.frame);
  for (const m of markers) {
    const [x, y] = toPx(m.x_mm, m.y_mm);
    cmds.push({
      op: "marker",
      id: m.id,
      color: m.color,
      x,
      y,
      r: 3 * opts.scale,
      selected: selected.has(m.id),
    });
  }
  for (const m of markers) {
    const [x, y] = toPx(m.x_mm, m.y_mm);
    cmds.push({
      op: "label",
      id: m.id,
      color: m.color,
      x: x + 3 * opts.scale + 3,
      y: y - 3 * opts.scale,
      text: String(m.id),
    });
  }
  return cmds;
}

/** Replay draw commands onto a 2D context; img may be null if the PNG
 * fetch failed (the banner reports that separately — we still draw
 * overlays on a dark background rather than nothing). */
export function renderTo(
  ctx: CanvasRenderingContext2D,
  img: CanvasImageSource | null,
  cmds: DrawCmd[],
): void {
  for (const cmd of cmds) {
    switch (cmd.op) {
      case "image":
        ctx.canvas.width = cmd.width;
        ctx.canvas.height = cmd.height;
        ctx.fillStyle = "#181818";
        ctx.fillRect(0, 0, cmd.width, cmd.height);
        if (img !== null) ctx.drawImage(img, 0, 0, cmd.width, cmd.height);
        break;
      case "trail": {
        ctx.strokeStyle = cmd.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(cmd.points[0][0], cmd.points[0][1]);
        for (const [x, y] of cmd.points.slice(1)) ctx.lineTo(x, y);
        ctx.stroke();
        break;
      }
      case "marker":
        if (cmd.selected) {
          ctx.strokeStyle = "#ffffff";
          ctx.lineWidth = 5;
          ctx.beginPath();
          ctx.arc(cmd.x, cmd.y, cmd.r + 3, 0, 2 * Math.PI);
          ctx.stroke();
        }
        ctx.strokeStyle = cmd.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(cmd.x, cmd.y, cmd.r, 0, 2 * Math.PI);
        ctx.stroke();
        break;
      case "label":
        ctx.fillStyle = cmd.color;
        ctx.font = "12px sans-serif";
        ctx.textBaseline = "top";
        ctx.fillText(cmd.text, cmd.x, cmd.y);
        break;
    }
  }
}
