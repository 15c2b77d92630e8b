/** ROI range selection over the clip timeline (half-open frame ranges). */

export interface TimelineState {
  length: number;
  ranges: [number, number][];
  dragStart: number | null;
}

export function createTimeline(length: number): TimelineState {
  if (length < 2) throw new Error("timeline needs at least 2 frames");
  return { length, ranges: [], dragStart: null };
}

export function beginDrag(state: TimelineState, frame: number): void {
  state.dragStart = clamp(state, frame);
}

export function endDrag(state: TimelineState, frame: number): [number, number] | null {
  if (state.dragStart === null) return null;
  const a = state.dragStart;
  const b = clamp(state, frame);
  state.dragStart = null;
  const range: [number, number] = a <= b ? [a, b + 1] : [b, a + 1];
  if (range[1] - range[0] < 1) return null;
  addRange(state, range);
  return range;
}

export function addRange(state: TimelineState, range: [number, number]): void {
  const [s, e] = range;
  if (s < 0 || e > state.length || e <= s) {
    throw new Error(`range [${s}, ${e}) outside timeline 0..${state.length}`);
  }
  state.ranges.push([s, e]);
  state.ranges.sort((x, y) => x[0] - y[0]);
}

export function clearRanges(state: TimelineState): void {
  state.ranges = [];
}

function clamp(state: TimelineState, frame: number): number {
  return Math.max(0, Math.min(state.length - 1, Math.round(frame)));
}
