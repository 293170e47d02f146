/**
 * DOM wiring: builds the page, connects store events to rendering, and
 * translates clicks/keys into store calls.  All logic that deserves a
 * test lives in the imported modules; this file only glues.
 */

import { Api } from "./api";
import { handleKey, KEY_HELP } from "./keyboard";
import { markersAt } from "./overlay";
import { idColorCss } from "./palette";
import { canvasSize, drawCommands, renderTo, worldToPx } from "./render";
import { Store } from "./store";

const SCALE = 4;
const TRAIL_LEN = 45;
const CLICK_RADIUS_PX = 14;

const api = new Api("");
const store = new Store(api);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

// ---------------------------------------------------------------- layout

const app = document.getElementById("app")!;

const toolbar = el("div", "toolbar");
const seqSelect = el("select", "seq-select");
const playBtn = el("button", "", "▶");
const frameLabel = el("span", "frame-label", "frame 0 / 0");
const scrubber = el("input", "scrubber") as HTMLInputElement;
scrubber.type = "range";
scrubber.min = "0";
scrubber.value = "0";
const rateSelect = el("select", "rate-select");
for (const fps of [5, 10, 15, 30]) {
  const opt = el("option", "", `${fps} fps`);
  opt.setAttribute("value", String(fps));
  if (fps === 15) opt.setAttribute("selected", "");
  rateSelect.append(opt);
}
const metricsBtn = el("button", "", "metrics");
const metricsLabel = el("span", "metrics-label", "");
toolbar.append(
  seqSelect, playBtn, scrubber, frameLabel, rateSelect, metricsBtn, metricsLabel,
);

const banner = el("div", "banner hidden");
const bannerText = el("span");
const reloadBtn = el("button", "", "reload");
const dismissBtn = el("button", "", "✕");
banner.append(bannerText, reloadBtn, dismissBtn);

const stage = el("div", "stage");
const canvas = el("canvas");
const noView = el("div", "no-view hidden", "no depth data for this sequence");
stage.append(canvas, noView);

const side = el("div", "side");
const selLabel = el("div", "sel-label", "selection: none");
const trackList = el("div", "track-list");
const help = el("div", "help");
for (const [key, what] of KEY_HELP) {
  const row = el("div", "help-row");
  row.append(el("kbd", "", key), el("span", "", what));
  help.append(row);
}
side.append(selLabel, trackList, help);

const body = el("div", "body");
body.append(stage, side);
app.append(toolbar, banner, body);

// ------------------------------------------------------------ rendering

const ctx = canvas.getContext("2d");
let bitmap: ImageBitmap | null = null;
let bitmapKey = "";
let fetchGeneration = 0;

async function ensureBitmap(): Promise<void> {
  const name = store.view.sequence;
  if (name === null || store.info?.grid == null) return;
  const key = `${name}/${store.view.frame}@${store.view.digest}`;
  if (key === bitmapKey) return;
  const generation = ++fetchGeneration;
  try {
    const blob = await api.fetchTopdown(name, store.view.frame, SCALE);
    if (generation !== fetchGeneration) return; // superseded
    bitmap = await createImageBitmap(blob);
    bitmapKey = key;
  } catch (err) {
    if (generation !== fetchGeneration) return;
    bitmap = null;
    bitmapKey = key;
    store.setBanner(err instanceof Error ? err.message : String(err));
    return;
  }
  render();
}

function render(): void {
  const info = store.info;
  const view = store.view;

  playBtn.textContent = view.playing ? "⏸" : "▶";
  const last = info === null ? 0 : Math.max(0, info.n_frames - 1);
  scrubber.max = String(last);
  scrubber.value = String(view.frame);
  frameLabel.textContent = `frame ${view.frame} / ${last}`;

  banner.classList.toggle("hidden", store.banner === null && !store.reloadPrompt);
  if (store.reloadPrompt) {
    bannerText.textContent =
      "tracks changed on the server — reload to continue editing";
    reloadBtn.classList.remove("hidden");
  } else {
    bannerText.textContent = store.banner ?? "";
    reloadBtn.classList.add("hidden");
  }

  selLabel.textContent = view.selected.length
    ? `selection: ${view.selected.join(", ")}${store.busy ? " (sending…)" : ""}`
    : "selection: none";

  const ids = [...new Set(store.rows.map((r) => r.id))].sort((a, b) => a - b);
  trackList.replaceChildren();
  for (const id of ids) {
    const chip = el("button", "chip", String(id));
    chip.style.borderColor = idColorCss(id);
    chip.classList.toggle("chip-selected", view.selected.includes(id));
    chip.addEventListener("click", () => store.toggleSelect(id));
    trackList.append(chip);
  }

  const m = store.metrics;
  metricsLabel.textContent =
    m === null
      ? ""
      : `IDF1 ${m.idf1.toFixed(1)} · MOTA ${m.mota.toFixed(1)} · ` +
        `IDs ${m.ids} · FP ${m.fp} · FN ${m.fn}`;

  const grid = info?.grid ?? null;
  noView.classList.toggle("hidden", grid !== null);
  canvas.classList.toggle("hidden", grid === null);
  if (grid !== null && ctx !== null) {
    const [w, h] = canvasSize(grid, SCALE);
    canvas.width = w;
    canvas.height = h;
    renderTo(
      ctx,
      bitmap,
      drawCommands(view, grid, store.rows, { scale: SCALE, trailLen: TRAIL_LEN }),
    );
    void ensureBitmap();
  }
}

// ---------------------------------------------------------------- wiring

store.subscribe(render);

seqSelect.addEventListener("change", () => {
  void store.openSequence(seqSelect.value);
});
playBtn.addEventListener("click", () => store.togglePlay());
scrubber.addEventListener("input", () => store.setFrame(Number(scrubber.value)));
rateSelect.addEventListener("change", () =>
  store.setRate(Number(rateSelect.value)),
);
metricsBtn.addEventListener("click", () => void store.refreshMetrics());
reloadBtn.addEventListener("click", () => void store.reload());
dismissBtn.addEventListener("click", () => {
  store.setBanner(null);
  store.reloadPrompt = false;
  render();
});

canvas.addEventListener("click", (ev) => {
  const grid = store.info?.grid;
  if (grid == null) return;
  const rect = canvas.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const py = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  const toPx = worldToPx(grid, SCALE);
  let best: number | null = null;
  let bestDist = CLICK_RADIUS_PX;
  for (const m of markersAt(store.rows, store.view.frame)) {
    const [mx, my] = toPx(m.x_mm, m.y_mm);
    const d = Math.hypot(mx - px, my - py);
    if (d < bestDist) {
      best = m.id;
      bestDist = d;
    }
  }
  if (best !== null) store.toggleSelect(best);
});

document.addEventListener("keydown", (ev) => {
  const target = ev.target as HTMLElement | null;
  if (target !== null && ["INPUT", "SELECT", "TEXTAREA"].includes(target.tagName))
    return;
  if (handleKey(store, ev.key)) ev.preventDefault();
});

// one frame per beat; the rate only changes the beat interval
let playTimer: number | null = null;
let playTimerRate = 0;
setInterval(() => {
  if (store.view.playing && playTimerRate !== store.view.playbackRate) {
    if (playTimer !== null) clearInterval(playTimer);
    playTimerRate = store.view.playbackRate;
    playTimer = window.setInterval(
      () => store.tick(),
      1000 / playTimerRate,
    );
  } else if (!store.view.playing && playTimer !== null) {
    clearInterval(playTimer);
    playTimer = null;
    playTimerRate = 0;
  }
}, 100);

// ------------------------------------------------------------- start-up

async function start(): Promise<void> {
  try {
    const names = await api.listSequences();
    seqSelect.replaceChildren();
    for (const name of names) {
      const opt = el("option", "", name);
      opt.setAttribute("value", name);
      seqSelect.append(opt);
    }
    if (names.length > 0) await store.openSequence(names[0]);
    else store.setBanner("service reports no sequences");
  } catch (err) {
    store.setBanner(err instanceof Error ? err.message : String(err));
  }
}

void start();
