/**
 * Shared types: the annotation service's wire format plus the two pieces
 * of client-side state the review tool maintains (ViewState, TrailOverlay).
 *
 * The client never owns track data — every row and digest here is a copy
 * of the last server response, replaced wholesale on refetch.
 */

export interface GridInfo {
  origin: [number, number, number];
  dims: [number, number, number];
  cell_mm: number;
}

export interface SequenceInfo {
  id: string;
  n_frames: number;
  digest: string;
  track_count: number;
  grid: GridInfo | null;
  cameras: number[];
}

/** One per-frame track state as served by GET .../tracks. */
export interface TrackRow {
  frame: number;
  id: number;
  x_mm: number;
  y_mm: number;
  h_mm: number;
  score: number;
}

export interface TracksResponse {
  digest: string;
  tracks: TrackRow[];
}

export interface MetricsReport {
  idf1: number;
  mota: number;
  fp: number;
  fn: number;
  ids: number;
  idp: number;
  idr: number;
  gt_total: number;
}

export type EditKind = "merge" | "split" | "delete" | "reassign";

/** Wire form of one tracklet correction, mirroring the service vocabulary. */
export interface EditDraft {
  kind: EditKind;
  id?: number;
  from_id?: number;
  into_id?: number;
  at_frame?: number;
  from_frame?: number;
  to_frame?: number;
  new_id?: number;
}

export interface EditAck {
  digest: string;
  created_ids: number[];
}

export interface EditLogResponse {
  base_digest: string;
  ops: Record<string, unknown>[];
}

/**
 * Everything the view layer needs to draw one moment of the session.
 *
 * Invariants (enforced by the store, checked in tests):
 *  - frame stays within [0, n_frames - 1] of the open sequence;
 *  - at most two tracklets are selected (merge needs exactly two),
 *    in click order — the merge keystroke folds the later selection
 *    into the earlier one;
 *  - digest is whatever the server last told us, never locally invented.
 */
export interface ViewState {
  sequence: string | null;
  frame: number;
  /** Playback speed in frames per second while holding play. */
  playbackRate: number;
  playing: boolean;
  /** Selected tracklet ids, oldest first, length <= 2. */
  selected: number[];
  /** Edit awaiting server acknowledgement; cleared on ack or failure. */
  draft: EditDraft | null;
  digest: string | null;
}

/**
 * Recent ground-track polyline for one tracklet: positions over the last
 * N frames, none later than the current frame, colored deterministically
 * from the id so it matches the server's own rendering.
 */
export interface TrailOverlay {
  id: number;
  /** CSS color string, stable across sessions for a given id. */
  color: string;
  /** [x_mm, y_mm] sorted by frame, all frames <= current. */
  points: [number, number][];
  /** Frame the polyline ends at (position of the newest point). */
  lastFrame: number;
}
