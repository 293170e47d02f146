/**
 * Pure overlay geometry: turn the last-fetched track rows into trail
 * polylines and current-frame markers, all in world millimetres.  No DOM,
 * no fetch — render.ts maps the result to pixels.
 */

import { idColorCss } from "./palette";
import type { TrackRow, TrailOverlay } from "./types";

export interface Marker {
  id: number;
  color: string;
  x_mm: number;
  y_mm: number;
}

/**
 * One polyline per tracklet covering frames [current - n, current]; rows
 * after the current frame never appear (the annotator sees only the past).
 * Tracklets with no state in the window are omitted.
 */
export function trailOverlays(
  rows: TrackRow[],
  currentFrame: number,
  n: number,
): TrailOverlay[] {
  const byId = new Map<number, TrackRow[]>();
  for (const r of rows) {
    if (r.frame > currentFrame || r.frame < currentFrame - n) continue;
    const bucket = byId.get(r.id);
    if (bucket === undefined) byId.set(r.id, [r]);
    else bucket.push(r);
  }
  const out: TrailOverlay[] = [];
  for (const id of [...byId.keys()].sort((a, b) => a - b)) {
    const states = byId.get(id)!.sort((a, b) => a.frame - b.frame);
    out.push({
      id,
      color: idColorCss(id),
      points: states.map((s) => [s.x_mm, s.y_mm]),
      lastFrame: states[states.length - 1].frame,
    });
  }
  return out;
}

/** Markers for tracklets present exactly at the given frame, sorted by id. */
export function markersAt(rows: TrackRow[], frame: number): Marker[] {
  return rows
    .filter((r) => r.frame === frame)
    .sort((a, b) => a.id - b.id)
    .map((r) => ({
      id: r.id,
      color: idColorCss(r.id),
      x_mm: r.x_mm,
      y_mm: r.y_mm,
    }));
}
