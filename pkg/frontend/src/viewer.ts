/**
 * Canvas skeleton viewer: orbiting perspective camera, bones as lines,
 * selected joints highlighted. Playback clamps or loops at the last frame.
 */
import { framePositions } from "./fk.js";
import type { MotionJson, Vec3 } from "./types.js";

export interface ViewerState {
  motion: MotionJson | null;
  reference: MotionJson | null; // optional side-by-side ghost
  playhead: number;
  playing: boolean;
  loop: boolean;
  selectedJoints: Set<number>;
  yaw: number;
  pitch: number;
  distance: number;
}

export function initialState(): ViewerState {
  return {
    motion: null,
    reference: null,
    playhead: 0,
    playing: false,
    loop: true,
    selectedJoints: new Set(),
    yaw: 0.6,
    pitch: 0.25,
    distance: 4,
  };
}

export function loadMotion(state: ViewerState, motion: MotionJson): void {
  if (!motion.frames?.length) throw new Error("motion has no frames");
  state.motion = motion;
  state.playhead = 0;
}

/** Advance the playhead; clamps at the end unless looping. */
export function step(state: ViewerState, frames = 1): number {
  if (!state.motion) return 0;
  const last = state.motion.frames.length - 1;
  let next = state.playhead + frames;
  if (next > last) next = state.loop ? next % (last + 1) : last;
  if (next < 0) next = 0;
  state.playhead = next;
  return next;
}

export function project(
  point: Vec3,
  state: ViewerState,
  width: number,
  height: number,
  center: Vec3,
): [number, number] {
  const cy = Math.cos(state.yaw);
  const sy = Math.sin(state.yaw);
  const cp = Math.cos(state.pitch);
  const sp = Math.sin(state.pitch);
  const x = point[0] - center[0];
  const y = point[1] - center[1];
  const z = point[2] - center[2];
  // yaw about +y then pitch about +x, camera on +z
  const x1 = cy * x + sy * z;
  const z1 = -sy * x + cy * z;
  const y2 = cp * y - sp * z1;
  const z2 = sp * y + cp * z1 + state.distance;
  const f = (0.9 * Math.min(width, height)) / Math.max(z2, 0.1);
  return [width / 2 + f * x1, height / 2 - f * y2];
}

function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  motion: MotionJson,
  frame: number,
  state: ViewerState,
  style: { bone: string; joint: string; selected: string },
): void {
  const positions = framePositions(motion, frame);
  const root = positions[motion.topology.parents.indexOf(-1)];
  const { width, height } = ctx.canvas;
  motion.topology.parents.forEach((parent, j) => {
    if (parent < 0) return;
    const a = project(positions[parent], state, width, height, root);
    const b = project(positions[j], state, width, height, root);
    ctx.strokeStyle = style.bone;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
  });
  positions.forEach((p, j) => {
    const [px, py] = project(p, state, width, height, root);
    ctx.fillStyle = state.selectedJoints.has(j) ? style.selected : style.joint;
    ctx.beginPath();
    ctx.arc(px, py, state.selectedJoints.has(j) ? 5 : 3, 0, 2 * Math.PI);
    ctx.fill();
  });
}

export function render(ctx: CanvasRenderingContext2D, state: ViewerState): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, width, height);
  if (state.reference) {
    const frame = Math.min(state.playhead, state.reference.frames.length - 1);
    drawSkeleton(ctx, state.reference, frame, state, {
      bone: "#3a4154",
      joint: "#3a4154",
      selected: "#3a4154",
    });
  }
  if (state.motion) {
    drawSkeleton(ctx, state.motion, state.playhead, state, {
      bone: "#7fd1b9",
      joint: "#e8edf2",
      selected: "#ffb454",
    });
  }
}
