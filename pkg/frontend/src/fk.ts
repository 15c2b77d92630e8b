/**
 * Forward kinematics over MotionJSON, using the same convention as the
 * service: a joint sits at its parent's global transform applied to its rest
 * offset, the root at the root translation. Quaternions are wxyz.
 */
import type { MotionJson, TopologyJson, Vec3 } from "./types.js";

export type Mat3 = [Vec3, Vec3, Vec3];

export function quatToMatrix(w: number, x: number, y: number, z: number): Mat3 {
  return [
    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
  ];
}

export function matMul(a: Mat3, b: Mat3): Mat3 {
  const out: number[][] = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return out as Mat3;
}

export function matVec(m: Mat3, v: Vec3): Vec3 {
  return [
    m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
    m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
    m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
  ];
}

export function rootIndex(topology: TopologyJson): number {
  const idx = topology.parents.indexOf(-1);
  if (idx < 0) throw new Error("topology has no root joint");
  return idx;
}

/** Parents-before-children traversal order. */
export function traversalOrder(topology: TopologyJson): number[] {
  const j = topology.names.length;
  const children: number[][] = Array.from({ length: j }, () => []);
  topology.parents.forEach((p, i) => {
    if (p >= 0) children[p].push(i);
  });
  const order: number[] = [];
  const stack = [rootIndex(topology)];
  while (stack.length) {
    const node = stack.pop()!;
    order.push(node);
    for (let k = children[node].length - 1; k >= 0; k--) stack.push(children[node][k]);
  }
  return order;
}

/** Global joint positions of one frame: J x 3. */
export function framePositions(motion: MotionJson, frame: number): Vec3[] {
  const topo = motion.topology;
  const j = topo.names.length;
  if (frame < 0 || frame >= motion.frames.length) {
    throw new Error(`frame ${frame} out of range 0..${motion.frames.length - 1}`);
  }
  const row = motion.frames[frame];
  if (row.length !== 4 * j) {
    throw new Error(`frame row has ${row.length} values, expected ${4 * j}`);
  }
  const rots: Mat3[] = [];
  for (let i = 0; i < j; i++) {
    rots.push(quatToMatrix(row[4 * i], row[4 * i + 1], row[4 * i + 2], row[4 * i + 3]));
  }
  const globalRot: Mat3[] = new Array(j);
  const pos: Vec3[] = new Array(j);
  for (const idx of traversalOrder(topo)) {
    const parent = topo.parents[idx];
    if (parent < 0) {
      globalRot[idx] = rots[idx];
      pos[idx] = [...motion.root[frame]] as Vec3;
    } else {
      globalRot[idx] = matMul(globalRot[parent], rots[idx]);
      const step = matVec(globalRot[parent], topo.offsets[idx] as Vec3);
      const p = pos[parent];
      pos[idx] = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
    }
  }
  return pos;
}

/** All frames: T x J x 3. */
export function allPositions(motion: MotionJson): Vec3[][] {
  return motion.frames.map((_, t) => framePositions(motion, t));
}
