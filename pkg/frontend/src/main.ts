/** Studio entry point: wires the viewer, mask editors, timeline and gallery
 * to the motion service. */
import { MotionClient } from "./api.js";
import { Gallery } from "./gallery.js";
import {
  jointToggleMask,
  lowerBodyMask,
  placementDoc,
  roiFrameMask,
  upperBodyMask,
  validateMask,
  validatePlacements,
} from "./masks.js";
import {
  beginDrag,
  clearRanges,
  createTimeline,
  endDrag,
  type TimelineState,
} from "./timeline.js";
import type { MaskJson, MotionJson } from "./types.js";
import {
  initialState,
  loadMotion,
  render,
  step,
  type ViewerState,
} from "./viewer.js";

const client = new MotionClient("");
const gallery = new Gallery();
const viewer: ViewerState = initialState();
let timeline: TimelineState | null = null;
let currentModel: string | null = null;
let reference: MotionJson | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function status(text: string, isError = false): void {
  const box = el<HTMLDivElement>("status");
  box.textContent = text;
  box.className = isError ? "status error" : "status";
}

function selectedSeed(): number {
  return Number(el<HTMLInputElement>("seed").value || "0");
}

function currentMask(): MaskJson {
  const preset = el<HTMLSelectElement>("mask-preset").value;
  if (!reference) throw new Error("load a motion first");
  const topo = reference.topology;
  if (preset === "lower") return lowerBodyMask(topo);
  if (preset === "upper") return upperBodyMask(topo);
  return jointToggleMask(viewer.selectedJoints);
}

function redraw(): void {
  const canvas = el<HTMLCanvasElement>("viewport");
  const ctx = canvas.getContext("2d");
  if (ctx) render(ctx, viewer);
  const slider = el<HTMLInputElement>("playhead");
  slider.value = String(viewer.playhead);
  el<HTMLSpanElement>("frame-label").textContent = String(viewer.playhead);
  drawTimeline();
}

function drawTimeline(): void {
  if (!timeline) return;
  const canvas = el<HTMLCanvasElement>("timeline");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#20242e";
  ctx.fillRect(0, 0, width, height);
  const scale = width / timeline.length;
  ctx.fillStyle = "#ffb45488";
  for (const [s, e] of timeline.ranges) {
    ctx.fillRect(s * scale, 0, (e - s) * scale, height);
  }
  ctx.fillStyle = "#7fd1b9";
  ctx.fillRect(viewer.playhead * scale - 1, 0, 2, height);
}

function addToGallery(label: string, motions: MotionJson[], seed: number): void {
  for (const motion of motions) {
    const entry = gallery.add(label, motion, seed);
    const list = el<HTMLUListElement>("gallery");
    const item = document.createElement("li");
    const badge = entry.duplicateOf !== null
      ? ` <span class="badge">identical to #${entry.duplicateOf}</span>`
      : "";
    item.innerHTML = `#${entry.id} ${label} seed=${seed} hash=${entry.hash}${badge}`;
    item.onclick = () => {
      viewer.reference = reference;
      loadMotion(viewer, entry.motion);
      redraw();
    };
    list.appendChild(item);
  }
}

async function run(label: string, call: () => Promise<any>): Promise<void> {
  try {
    status(`${label}...`);
    const response = await call();
    const motions = await client.resolveMotions(response);
    addToGallery(label, motions, selectedSeed());
    if (motions.length) {
      viewer.reference = reference;
      loadMotion(viewer, motions[0]);
      redraw();
    }
    status(`${label}: done`);
  } catch (err) {
    status(`${label} failed: ${err}`, true);
  }
}

async function boot(): Promise<void> {
  const models = await client.listModels();
  const select = el<HTMLSelectElement>("model");
  for (const id of models.models) {
    const option = document.createElement("option");
    option.value = id;
    option.textContent = id;
    select.appendChild(option);
  }
  select.onchange = async () => {
    currentModel = select.value;
    const info = await client.modelInfo(currentModel);
    status(
      `model ${currentModel}: stages ${info.stage_lengths.join("/")} ` +
        `frames@${info.frame_rate}fps`,
    );
  };
  if (models.models.length) {
    select.value = models.models[0];
    select.onchange!(new Event("change"));
  }

  el<HTMLButtonElement>("load-reference").onclick = async () => {
    if (!currentModel) return status("pick a model first", true);
    const gen = await client.generate(currentModel, selectedSeed());
    const motions = await client.resolveMotions(gen);
    reference = motions[0];
    timeline = createTimeline(reference.frames.length);
    viewer.reference = null;
    loadMotion(viewer, reference);
    redraw();
    status("reference loaded");
  };

  el<HTMLButtonElement>("btn-generate").onclick = () =>
    run("generate", () => client.generate(currentModel!, selectedSeed()));

  el<HTMLButtonElement>("btn-compose").onclick = () => {
    const mask = currentMask();
    validateMask(mask, reference?.topology);
    return run("compose", () =>
      client.composeBodypart(currentModel!, mask, selectedSeed()),
    );
  };

  el<HTMLButtonElement>("btn-inpaint").onclick = () => {
    if (!timeline?.ranges.length) return status("drag a range first", true);
    const mask = roiFrameMask(timeline.ranges);
    validateMask(mask);
    return run("inpaint", () =>
      client.composeInpaint(currentModel!, mask, selectedSeed()),
    );
  };

  el<HTMLButtonElement>("btn-roi").onclick = () => {
    if (!timeline?.ranges.length || !reference) {
      return status("drag a range first", true);
    }
    const rois = timeline.ranges.map(([s, e]) => ({
      source_start: s,
      source_end: e,
      target_start: 0,
    }));
    const doc = placementDoc(rois, reference.frames.length);
    validatePlacements(doc);
    return run("place rois", () =>
      client.composeRoi(currentModel!, doc, selectedSeed()),
    );
  };

  el<HTMLButtonElement>("btn-crowd").onclick = () =>
    run("crowd", () => client.crowd(currentModel!, 4, selectedSeed()));

  el<HTMLButtonElement>("btn-clear-ranges").onclick = () => {
    if (timeline) clearRanges(timeline);
    redraw();
  };

  const timelineCanvas = el<HTMLCanvasElement>("timeline");
  timelineCanvas.onmousedown = (ev) => {
    if (!timeline) return;
    const frame = Math.floor(
      (ev.offsetX / timelineCanvas.width) * timeline.length,
    );
    beginDrag(timeline, frame);
  };
  timelineCanvas.onmouseup = (ev) => {
    if (!timeline) return;
    const frame = Math.floor(
      (ev.offsetX / timelineCanvas.width) * timeline.length,
    );
    endDrag(timeline, frame);
    redraw();
  };

  el<HTMLInputElement>("playhead").oninput = (ev) => {
    viewer.playhead = Number((ev.target as HTMLInputElement).value);
    redraw();
  };

  const viewport = el<HTMLCanvasElement>("viewport");
  let dragging = false;
  viewport.onmousedown = () => (dragging = true);
  viewport.onmouseup = () => (dragging = false);
  viewport.onmousemove = (ev) => {
    if (!dragging) return;
    viewer.yaw += ev.movementX * 0.01;
    viewer.pitch = Math.max(
      -1.4,
      Math.min(1.4, viewer.pitch + ev.movementY * 0.01),
    );
    redraw();
  };

  setInterval(() => {
    if (viewer.playing && viewer.motion) {
      step(viewer);
      redraw();
    }
  }, 33);
  el<HTMLButtonElement>("btn-play").onclick = () => {
    viewer.playing = !viewer.playing;
  };
  el<HTMLInputElement>("loop").onchange = (ev) => {
    viewer.loop = (ev.target as HTMLInputElement).checked;
  };
}

boot().catch((err) => status(`boot failed: ${err}`, true));
