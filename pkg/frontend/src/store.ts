/**
 * Session state and edit workflow.  One rule above all others: the store
 * holds no authoritative track data.  Rows and digests are snapshots of
 * server responses, an edit is only reflected after the service
 * acknowledges it and the tracks have been refetched, and a stale digest
 * turns into a reload prompt instead of a local guess.
 */

import { Api, ApiError, DigestConflict } from "./api";
import type {
  EditDraft,
  EditKind,
  MetricsReport,
  SequenceInfo,
  TrackRow,
  ViewState,
} from "./types";

const MAX_SELECTED = 2;

export type Listener = () => void;

export class Store {
  view: ViewState = {
    sequence: null,
    frame: 0,
    playbackRate: 15,
    playing: false,
    selected: [],
    draft: null,
    digest: null,
  };
  info: SequenceInfo | null = null;
  /** Last server-acknowledged track rows (never locally mutated). */
  rows: TrackRow[] = [];
  metrics: MetricsReport | null = null;
  /** Visible error text; every failed request lands here, never silently. */
  banner: string | null = null;
  /** Set when the server reports our digest stale; cleared by reload(). */
  reloadPrompt = false;
  /** Ids created by the last acknowledged edit (e.g. the tail of a split). */
  lastCreatedIds: number[] = [];

  private listeners = new Set<Listener>();
  private inflight: Promise<void> | null = null;

  constructor(private api: Api) {}

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  /** Wait for any in-flight request chain to settle (test hook). */
  async idle(): Promise<void> {
    while (this.inflight !== null) await this.inflight;
  }

  get busy(): boolean {
    return this.inflight !== null;
  }

  private lastFrame(): number {
    return this.info === null ? 0 : Math.max(0, this.info.n_frames - 1);
  }

  setBanner(message: string | null): void {
    this.banner = message;
    this.notify();
  }

  // ------------------------------------------------------------------
  //  navigation

  setFrame(frame: number): void {
    const clamped = Math.min(Math.max(Math.trunc(frame), 0), this.lastFrame());
    if (clamped !== this.view.frame) {
      this.view.frame = clamped;
      this.notify();
    }
  }

  step(delta: number): void {
    this.setFrame(this.view.frame + delta);
  }

  /** One playback beat: advance a single frame, stop at the end.  The
   * playback rate controls how often this is called, never the stride,
   * so scrubbing can skip nothing. */
  tick(): void {
    if (!this.view.playing) return;
    if (this.view.frame >= this.lastFrame()) {
      this.view.playing = false;
      this.notify();
      return;
    }
    this.step(1);
  }

  togglePlay(): void {
    this.view.playing = !this.view.playing;
    this.notify();
  }

  setRate(fps: number): void {
    this.view.playbackRate = fps;
    this.notify();
  }

  // ------------------------------------------------------------------
  //  selection

  /** Toggle a tracklet; keeps at most two selections, oldest dropped
   * first, click order preserved (merge folds later into earlier). */
  toggleSelect(id: number): void {
    const sel = this.view.selected;
    const at = sel.indexOf(id);
    if (at >= 0) sel.splice(at, 1);
    else {
      sel.push(id);
      while (sel.length > MAX_SELECTED) sel.shift();
    }
    this.notify();
  }

  clearSelection(): void {
    this.view.selected = [];
    this.view.draft = null;
    this.notify();
  }

  // ------------------------------------------------------------------
  //  sequence lifecycle

  async openSequence(name: string): Promise<void> {
    const run = async () => {
      try {
        const info = await this.api.sequenceInfo(name);
        const tracks = await this.api.tracks(name);
        this.info = info;
        this.rows = tracks.tracks;
        this.view = {
          sequence: name,
          frame: 0,
          playbackRate: this.view.playbackRate,
          playing: false,
          selected: [],
          draft: null,
          digest: tracks.digest,
        };
        this.metrics = null;
        this.banner = null;
        this.reloadPrompt = false;
        this.lastCreatedIds = [];
      } catch (err) {
        this.banner = messageOf(err);
      }
    };
    await this.enqueue(run);
  }

  /** Refetch server truth for the open sequence; answers a stale-digest
   * prompt.  Selection survives only for ids that still exist. */
  async reload(): Promise<void> {
    const name = this.view.sequence;
    if (name === null) return;
    const run = async () => {
      try {
        const info = await this.api.sequenceInfo(name);
        const tracks = await this.api.tracks(name);
        this.info = info;
        this.rows = tracks.tracks;
        this.view.digest = tracks.digest;
        this.view.frame = Math.min(this.view.frame, this.lastFrame());
        const alive = new Set(tracks.tracks.map((r) => r.id));
        this.view.selected = this.view.selected.filter((id) => alive.has(id));
        this.view.draft = null;
        this.reloadPrompt = false;
        this.banner = null;
      } catch (err) {
        this.banner = messageOf(err);
      }
    };
    await this.enqueue(run);
  }

  async refreshMetrics(gt?: string): Promise<void> {
    const name = this.view.sequence;
    if (name === null) return;
    const run = async () => {
      try {
        this.metrics = await this.api.metrics(name, gt);
        this.banner = null;
      } catch (err) {
        this.metrics = null;
        this.banner = messageOf(err);
      }
    };
    await this.enqueue(run);
  }

  // ------------------------------------------------------------------
  //  edits

  /**
   * Build the edit the current selection and frame describe, or an error
   * message when the selection arity does not fit the kind.  Split is the
   * one-keystroke path: select the tracklet, scrub to the switch frame,
   * hit the key.
   */
  draftFor(kind: EditKind): EditDraft | string {
    const sel = this.view.selected;
    switch (kind) {
      case "split":
        if (sel.length !== 1) return "split needs exactly one selected tracklet";
        return { kind, id: sel[0], at_frame: this.view.frame };
      case "delete":
        if (sel.length !== 1)
          return "delete needs exactly one selected tracklet";
        return { kind, id: sel[0] };
      case "merge":
        if (sel.length !== 2) return "merge needs exactly two selected tracklets";
        return { kind, from_id: sel[1], into_id: sel[0] };
      case "reassign":
        if (sel.length !== 1)
          return "reassign needs exactly one selected tracklet";
        return {
          kind,
          id: sel[0],
          from_frame: this.view.frame,
          to_frame: this.lastFrame(),
        };
    }
  }

  /**
   * Validate locally, then submit.  Nothing is applied optimistically:
   * on acknowledgement the digest comes from the response and the rows
   * from a refetch; on a digest conflict the only state change is the
   * reload prompt; any other failure surfaces the service's message
   * verbatim in the banner.  Returns true once an edit was acknowledged.
   */
  async submitKind(kind: EditKind): Promise<boolean> {
    const name = this.view.sequence;
    const digest = this.view.digest;
    if (name === null || digest === null) {
      this.setBanner("no sequence open");
      return false;
    }
    if (this.busy) return false; // one edit on the wire at a time
    const draft = this.draftFor(kind);
    if (typeof draft === "string") {
      this.setBanner(draft);
      return false;
    }
    this.view.draft = draft;
    this.banner = null;
    this.notify();

    let acked = false;
    const run = async () => {
      try {
        const ack = await this.api.submitEdit(name, draft, digest);
        const tracks = await this.api.tracks(name);
        this.view.digest = tracks.digest;
        this.rows = tracks.tracks;
        this.lastCreatedIds = ack.created_ids;
        this.view.selected = [];
        acked = true;
      } catch (err) {
        if (err instanceof DigestConflict) {
          this.reloadPrompt = true;
        } else {
          this.banner = messageOf(err);
        }
      } finally {
        this.view.draft = null;
      }
    };
    await this.enqueue(run);
    return acked;
  }

  private async enqueue(run: () => Promise<void>): Promise<void> {
    while (this.inflight !== null) await this.inflight;
    const p = run().finally(() => {
      this.inflight = null;
      this.notify();
    });
    this.inflight = p;
    this.notify();
    await p;
  }
}

function messageOf(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return `request failed: ${err.message}`;
  return `request failed: ${String(err)}`;
}
