import { describe, expect, it } from "vitest";

import type { Api } from "../src/api";
import { handleKey } from "../src/keyboard";
import { Store } from "../src/store";
import type {
  EditAck,
  EditDraft,
  MetricsReport,
  SequenceInfo,
  TracksResponse,
} from "../src/types";

const INFO: SequenceInfo = {
  id: "seq",
  n_frames: 20,
  digest: "v1",
  track_count: 1,
  grid: null,
  cameras: [],
};

function fakeApi() {
  const fake = {
    submitted: [] as EditDraft[],
    sequenceInfo: async (): Promise<SequenceInfo> => INFO,
    tracks: async (): Promise<TracksResponse> => ({
      digest: "v1",
      tracks: [{ frame: 0, id: 4, x_mm: 0, y_mm: 0, h_mm: 1700, score: 1 }],
    }),
    submitEdit: async (
      _n: string,
      op: EditDraft,
      _d: string,
    ): Promise<EditAck> => {
      fake.submitted.push(op);
      return { digest: "v2", created_ids: [] };
    },
    metrics: async (): Promise<MetricsReport> => {
      throw new Error("unused");
    },
  };
  return fake;
}

async function openStore() {
  const fake = fakeApi();
  const store = new Store(fake as unknown as Api);
  await store.openSequence("seq");
  return { store, fake };
}

describe("scrubbing", () => {
  it("a held arrow key visits every frame in order", async () => {
    const { store } = await openStore();
    const visited: number[] = [];
    for (let i = 0; i < 30; i++) {
      expect(handleKey(store, "ArrowRight")).toBe(true);
      visited.push(store.view.frame);
    }
    // monotone, stride one, clamped at the last frame (19)
    expect(visited.slice(0, 19)).toEqual(
      Array.from({ length: 19 }, (_, i) => i + 1),
    );
    expect(visited.slice(19).every((f) => f === 19)).toBe(true);
  });

  it("steps back down without skipping", async () => {
    const { store } = await openStore();
    store.setFrame(3);
    handleKey(store, "ArrowLeft");
    expect(store.view.frame).toBe(2);
    handleKey(store, "Home");
    expect(store.view.frame).toBe(0);
    handleKey(store, "End");
    expect(store.view.frame).toBe(19);
  });

  it("space toggles playback", async () => {
    const { store } = await openStore();
    handleKey(store, " ");
    expect(store.view.playing).toBe(true);
    handleKey(store, " ");
    expect(store.view.playing).toBe(false);
  });
});

describe("edit keys", () => {
  it("split is select + scrub + one keystroke", async () => {
    const { store, fake } = await openStore();
    store.toggleSelect(4);
    store.setFrame(11);
    expect(handleKey(store, "s")).toBe(true);
    await store.idle();
    expect(fake.submitted).toEqual([{ kind: "split", id: 4, at_frame: 11 }]);
  });

  it("delete works from the Delete key", async () => {
    const { store, fake } = await openStore();
    store.toggleSelect(4);
    handleKey(store, "Delete");
    await store.idle();
    expect(fake.submitted).toEqual([{ kind: "delete", id: 4 }]);
  });

  it("escape clears selection and banner", async () => {
    const { store } = await openStore();
    store.toggleSelect(4);
    store.setBanner("whatever");
    handleKey(store, "Escape");
    expect(store.view.selected).toEqual([]);
    expect(store.banner).toBeNull();
  });

  it("unknown keys are left to the browser", async () => {
    const { store } = await openStore();
    expect(handleKey(store, "x")).toBe(false);
    expect(handleKey(store, "F5")).toBe(false);
  });
});
