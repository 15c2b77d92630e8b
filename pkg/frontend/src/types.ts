/** Wire-format types shared with the motion service. */

export interface TopologyJson {
  names: string[];
  parents: number[]; // -1 marks the root
  offsets: number[][]; // J x 3
  contact_joints: number[];
}

/** One frame is 4*J numbers: wxyz quaternion per joint, concatenated. */
export interface MotionJson {
  topology: TopologyJson;
  frame_rate: number;
  frames: number[][];
  root: number[][]; // T x 3
}

export interface MaskJson {
  kept_joints?: number[];
  include_root?: boolean;
  include_contacts?: boolean;
  frames?: [number, number][];
}

export interface RoiPlacementJson {
  source_start: number;
  source_end: number;
  target_start: number; // level-2 resolution of the composed timeline
}

export interface PlacementDocJson {
  rois: RoiPlacementJson[];
  total_frames: number;
}

export interface JobRecordJson {
  job_id: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  artifacts: string[];
  log_tail: string[];
  error: { code: string; message: string } | null;
}

export interface ModelInfoJson {
  id: string;
  stage_lengths: number[];
  level_grouping: number[];
  trained: boolean[];
  frame_rate: number;
  joint_names: string[];
  contact_joints: number[];
  has_training_clip: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

export type Vec3 = [number, number, number];
