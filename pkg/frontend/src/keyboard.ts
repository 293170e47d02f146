/**
 * Keyboard surface.  Pure mapping from key name to store action so tests
 * can drive it without a DOM; main.ts wires real keydown events here.
 *
 * Scrubbing contract: arrows move exactly one frame per event and the
 * play loop advances one frame per beat, so the frame index is monotone
 * while a key is held — no frame is ever skipped.
 */

import type { Store } from "./store";

export const KEY_HELP: [string, string][] = [
  ["←/→", "scrub one frame"],
  ["Home/End", "first / last frame"],
  ["Space", "play / pause"],
  ["S", "split selected tracklet at this frame"],
  ["M", "merge later selection into earlier"],
  ["D / Del", "delete selected tracklet"],
  ["R", "reassign tail from this frame to a fresh id"],
  ["Esc", "clear selection and message"],
];

/** Handle one key press; returns true when the key was consumed. */
export function handleKey(store: Store, key: string): boolean {
  switch (key) {
    case "ArrowRight":
      store.step(1);
      return true;
    case "ArrowLeft":
      store.step(-1);
      return true;
    case "Home":
      store.setFrame(0);
      return true;
    case "End":
      store.setFrame(Number.MAX_SAFE_INTEGER);
      return true;
    case " ":
      store.togglePlay();
      return true;
    case "s":
    case "S":
      void store.submitKind("split");
      return true;
    case "m":
    case "M":
      void store.submitKind("merge");
      return true;
    case "d":
    case "D":
    case "Delete":
    case "Backspace":
      void store.submitKind("delete");
      return true;
    case "r":
    case "R":
      void store.submitKind("reassign");
      return true;
    case "Escape":
      store.clearSelection();
      store.setBanner(null);
      return true;
    default:
      return false;
  }
}
