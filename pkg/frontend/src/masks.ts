/**
 * Mask construction and validation. Documents emitted here must match the
 * service's schema exactly; the fixture tests pin that byte-for-byte.
 */
import type {
  MaskJson,
  PlacementDocJson,
  RoiPlacementJson,
  TopologyJson,
} from "./types.js";

export class MaskValidationError extends Error {}

/** Joints on a root-to-contact chain; the root belongs to the lower body. */
export function lowerBodyJoints(topology: TopologyJson): number[] {
  const keep = new Set<number>();
  for (const c of topology.contact_joints) {
    let k = c;
    while (k >= 0) {
      keep.add(k);
      k = topology.parents[k];
    }
  }
  return [...keep].sort((a, b) => a - b);
}

export function lowerBodyMask(topology: TopologyJson): MaskJson {
  return {
    kept_joints: lowerBodyJoints(topology),
    include_root: true,
    include_contacts: true,
  };
}

export function upperBodyMask(topology: TopologyJson): MaskJson {
  const lower = new Set(lowerBodyJoints(topology));
  const kept = topology.names
    .map((_, i) => i)
    .filter((i) => !lower.has(i));
  return { kept_joints: kept, include_root: false, include_contacts: false };
}

export function jointToggleMask(selected: Iterable<number>, includeRoot = false): MaskJson {
  const kept = [...new Set(selected)].sort((a, b) => a - b);
  return { kept_joints: kept, include_root: includeRoot, include_contacts: false };
}

/** A dragged ROI range [start, end) becomes the frames field. */
export function roiFrameMask(ranges: [number, number][]): MaskJson {
  return { frames: ranges.map(([s, e]) => [s, e]) };
}

export function placementDoc(
  rois: RoiPlacementJson[],
  totalFrames: number,
): PlacementDocJson {
  return { rois, total_frames: totalFrames };
}

const MASK_FIELDS = new Set([
  "kept_joints",
  "include_root",
  "include_contacts",
  "frames",
]);

/**
 * Mirror of the service-side validation: reject anything the service would
 * answer with 422 so invalid documents never leave the UI.
 */
export function validateMask(mask: MaskJson, topology?: TopologyJson): void {
  for (const key of Object.keys(mask)) {
    if (!MASK_FIELDS.has(key)) {
      throw new MaskValidationError(`unknown mask field: ${key}`);
    }
  }
  const kept = mask.kept_joints ?? [];
  if (!Array.isArray(kept) || kept.some((k) => !Number.isInteger(k))) {
    throw new MaskValidationError("kept_joints must be a list of joint indices");
  }
  if (new Set(kept).size !== kept.length) {
    throw new MaskValidationError("kept_joints contains duplicates");
  }
  if (topology) {
    const j = topology.names.length;
    for (const k of kept) {
      if (k < 0 || k >= j) {
        throw new MaskValidationError(`joint index ${k} out of range`);
      }
    }
  }
  for (const range of mask.frames ?? []) {
    if (!Array.isArray(range) || range.length !== 2) {
      throw new MaskValidationError("each frame range must be [start, end]");
    }
    const [s, e] = range;
    if (!Number.isInteger(s) || !Number.isInteger(e) || s < 0 || e <= s) {
      throw new MaskValidationError(`bad frame range [${s}, ${e})`);
    }
  }
}

export function validatePlacements(doc: PlacementDocJson): void {
  if (doc.total_frames < 2) {
    throw new MaskValidationError("total_frames must be at least 2");
  }
  for (const roi of doc.rois) {
    if (roi.source_start < 0 || roi.source_end <= roi.source_start) {
      throw new MaskValidationError(
        `bad source range [${roi.source_start}, ${roi.source_end})`,
      );
    }
    if (roi.target_start < 0) {
      throw new MaskValidationError("target_start must be >= 0");
    }
  }
  const spans = doc.rois
    .map((r) => [r.target_start, r.target_start + (r.source_end - r.source_start)])
    .sort((a, b) => a[0] - b[0]);
  for (let i = 1; i < spans.length; i++) {
    if (spans[i][0] < spans[i - 1][1]) {
      throw new MaskValidationError("placements overlap");
    }
  }
}
