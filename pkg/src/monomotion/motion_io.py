"""Skeletal motion containers, forward kinematics, contact detection and the
motion feature representation.

A motion clip is stored either as a `SkeletonMotion` (per-frame local joint
quaternions + root trajectory) or as a `MotionTensor`: a T x F matrix with
F = 6*J + C + 3 laid out per frame as

    [J blocks of 6D rotation | C contact values | root x-vel, z-vel, y-pos]

Root x/z velocities are expressed in the root's local yaw (heading) frame so
that generated velocities compose under turning; integration back to world
space is anchored at the origin.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rotations import (
    matrix_to_quat,
    quat_to_matrix,
    rotation_to_6d,
    sixd_to_matrix_flagged,
)

ROOT_FEATURES = 3  # x-velocity, z-velocity, y-position
ROTATION_DIM = 6

DEFAULT_VELOCITY_THRESHOLD = 0.2  # skeleton units per frame
DEFAULT_HEIGHT_FRACTION = 0.05  # of leg length, above the floor estimate


class StructuralError(ValueError):
    """Shape/topology mismatch between data and skeleton."""


@dataclass(frozen=True, eq=False)
class SkeletonTopology:
    """Joint hierarchy: names, parent indices (-1 for the root), rest offsets
    and the subset of joints used for ground-contact supervision."""

    joint_names: tuple[str, ...]
    parent_index: tuple[int, ...]
    offsets: np.ndarray  # (J, 3)
    contact_joints: tuple[int, ...]

    def __eq__(self, other):
        return (
            isinstance(other, SkeletonTopology)
            and self.joint_names == other.joint_names
            and self.parent_index == other.parent_index
            and np.array_equal(self.offsets, other.offsets)
            and self.contact_joints == other.contact_joints
        )

    def __post_init__(self):
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.float64))
        j = len(self.joint_names)
        if len(self.parent_index) != j or self.offsets.shape != (j, 3):
            raise StructuralError("joint_names, parent_index and offsets disagree on J")
        roots = [i for i, p in enumerate(self.parent_index) if p < 0]
        if len(roots) != 1:
            raise StructuralError(f"expected exactly one root, found {len(roots)}")
        for i, p in enumerate(self.parent_index):
            if p >= j:
                raise StructuralError(f"parent index {p} of joint {i} out of range")
        # reject cycles by walking each joint up to the root
        for i in range(j):
            seen = set()
            k = i
            while self.parent_index[k] >= 0:
                if k in seen:
                    raise StructuralError("parent_index contains a cycle")
                seen.add(k)
                k = self.parent_index[k]
        if not self.contact_joints:
            raise StructuralError("contact_joints must be nonempty")
        if len(set(self.contact_joints)) != len(self.contact_joints):
            raise StructuralError("contact_joints contains duplicates")
        if any(c < 0 or c >= j for c in self.contact_joints):
            raise StructuralError("contact joint index out of range")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def root_index(self) -> int:
        return self.parent_index.index(-1)

    @property
    def feature_dim(self) -> int:
        return ROTATION_DIM * self.joint_count + len(self.contact_joints) + ROOT_FEATURES

    def traversal_order(self) -> list[int]:
        """Joint indices ordered so that parents precede children."""
        children: dict[int, list[int]] = {i: [] for i in range(self.joint_count)}
        for i, p in enumerate(self.parent_index):
            if p >= 0:
                children[p].append(i)
        order, stack = [], [self.root_index]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(reversed(children[node]))
        return order

    def tree_distances(self) -> np.ndarray:
        """All-pairs graph distances over the (undirected) joint tree."""
        j = self.joint_count
        adj = [[] for _ in range(j)]
        for i, p in enumerate(self.parent_index):
            if p >= 0:
                adj[i].append(p)
                adj[p].append(i)
        dist = np.full((j, j), np.iinfo(np.int64).max, dtype=np.int64)
        for s in range(j):
            dist[s, s] = 0
            queue = [s]
            while queue:
                nxt = []
                for u in queue:
                    for v in adj[u]:
                        if dist[s, v] > dist[s, u] + 1:
                            dist[s, v] = dist[s, u] + 1
                            nxt.append(v)
                queue = nxt
        return dist

    def leg_length(self) -> float:
        """Longest chain of offset lengths from the root to a contact joint."""
        best = 0.0
        for c in self.contact_joints:
            total, k = 0.0, c
            while self.parent_index[k] >= 0:
                total += float(np.linalg.norm(self.offsets[k]))
                k = self.parent_index[k]
            best = max(best, total)
        return best if best > 0 else 1.0

    def to_json_dict(self) -> dict:
        return {
            "names": list(self.joint_names),
            "parents": list(self.parent_index),
            "offsets": self.offsets.tolist(),
            "contact_joints": list(self.contact_joints),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SkeletonTopology":
        return cls(
            joint_names=tuple(d["names"]),
            parent_index=tuple(int(p) for p in d["parents"]),
            offsets=np.asarray(d["offsets"], dtype=np.float64),
            contact_joints=tuple(int(c) for c in d["contact_joints"]),
        )


@dataclass
class SkeletonMotion:
    """Parsed clip: per-frame local rotations (T, J, 4 wxyz unit quaternions),
    root translation (T, 3) and the frame rate."""

    topology: SkeletonTopology
    local_rotations: np.ndarray
    root_translation: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        self.local_rotations = np.asarray(self.local_rotations, dtype=np.float64)
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)
        t, j = self.local_rotations.shape[:2]
        if self.local_rotations.ndim != 3 or self.local_rotations.shape[2] != 4:
            raise StructuralError("local_rotations must have shape (T, J, 4)")
        if j != self.topology.joint_count:
            raise StructuralError("local_rotations J does not match topology")
        if self.root_translation.shape != (t, 3):
            raise StructuralError("root_translation must have shape (T, 3)")
        if t < 2:
            raise StructuralError("a motion needs at least 2 frames")
        norms = np.linalg.norm(self.local_rotations, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise StructuralError("local_rotations must be unit quaternions (1e-6)")

    @property
    def frames(self) -> int:
        return self.local_rotations.shape[0]


@dataclass
class MotionTensor:
    """The network-facing feature matrix (T, F) with F = 6*J + C + 3."""

    features: np.ndarray
    topology: SkeletonTopology
    frame_rate: float = 30.0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise StructuralError("features must be 2-D (T, F)")
        if self.features.shape[1] != self.topology.feature_dim:
            raise StructuralError(
                f"feature dim {self.features.shape[1]} != "
                f"6*J+C+3 = {self.topology.feature_dim}"
            )

    @property
    def frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def rotation_block(self) -> np.ndarray:
        """(T, J, 6) view of the per-joint 6D rotations."""
        j = self.topology.joint_count
        return self.features[:, : ROTATION_DIM * j].reshape(self.frames, j, ROTATION_DIM)

    def contact_block(self) -> np.ndarray:
        j = self.topology.joint_count
        c = len(self.topology.contact_joints)
        return self.features[:, ROTATION_DIM * j : ROTATION_DIM * j + c]

    def root_block(self) -> np.ndarray:
        return self.features[:, -ROOT_FEATURES:]

    def copy(self) -> "MotionTensor":
        return MotionTensor(self.features.copy(), self.topology, self.frame_rate)


@dataclass(frozen=True)
class PyramidConfig:
    """Temporal pyramid: S stages grouped into levels, with per-stage target
    frame counts growing geometrically from `coarsest_fraction` of the clip."""

    num_stages: int
    level_grouping: tuple[int, ...]
    stage_lengths: tuple[int, ...]
    length_ratio: float = 4.0 / 3.0
    coarsest_fraction: float = 0.25

    def __post_init__(self):
        if sum(self.level_grouping) != self.num_stages:
            raise ValueError("level_grouping must sum to num_stages")
        if len(self.stage_lengths) != self.num_stages:
            raise ValueError("stage_lengths must list one length per stage")
        full = self.stage_lengths[-1]
        reached_top = False
        for prev, cur in zip(self.stage_lengths, self.stage_lengths[1:]):
            if reached_top:
                if cur != full:
                    raise ValueError("stage lengths must stay at T once capped")
            elif cur <= prev:
                raise ValueError("stage_lengths must be strictly increasing below T")
            reached_top = cur == full

    @classmethod
    def for_length(
        cls,
        total_frames: int,
        num_stages: int = 7,
        level_grouping: tuple[int, ...] = (2, 2, 2, 1),
        length_ratio: float = 4.0 / 3.0,
        coarsest_fraction: float = 0.25,
    ) -> "PyramidConfig":
        """Stage lengths by the rounding rule: start at round(T*coarsest),
        multiply by the ratio and round, enforce strict increase, cap at T."""
        lengths = [max(2, round(total_frames * coarsest_fraction))]
        for _ in range(num_stages - 1):
            nxt = round(lengths[-1] * length_ratio)
            nxt = max(nxt, lengths[-1] + 1)
            lengths.append(min(nxt, total_frames))
        lengths[-1] = total_frames
        return cls(
            num_stages=num_stages,
            level_grouping=tuple(level_grouping),
            stage_lengths=tuple(lengths),
            length_ratio=length_ratio,
            coarsest_fraction=coarsest_fraction,
        )

    @property
    def num_levels(self) -> int:
        return len(self.level_grouping)

    def level_of_stage(self, stage: int) -> int:
        acc = 0
        for level, count in enumerate(self.level_grouping):
            acc += count
            if stage < acc:
                return level
        raise IndexError(f"stage {stage} out of range")

    def stages_of_level(self, level: int) -> list[int]:
        start = sum(self.level_grouping[:level])
        return list(range(start, start + self.level_grouping[level]))

    def to_json_dict(self) -> dict:
        return {
            "num_stages": self.num_stages,
            "level_grouping": list(self.level_grouping),
            "stage_lengths": list(self.stage_lengths),
            "length_ratio": self.length_ratio,
            "coarsest_fraction": self.coarsest_fraction,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PyramidConfig":
        return cls(
            num_stages=int(d["num_stages"]),
            level_grouping=tuple(int(x) for x in d["level_grouping"]),
            stage_lengths=tuple(int(x) for x in d["stage_lengths"]),
            length_ratio=float(d["length_ratio"]),
            coarsest_fraction=float(d["coarsest_fraction"]),
        )


def forward_kinematics(m: SkeletonMotion) -> np.ndarray:
    """Global joint positions (T, J, 3). The root position is the root
    translation; every other joint is its parent transform applied to its
    rest offset."""
    topo = m.topology
    t, j = m.frames, topo.joint_count
    rot = quat_to_matrix(m.local_rotations)  # (T, J, 3, 3)
    global_rot = np.empty_like(rot)
    pos = np.empty((t, j, 3), dtype=np.float64)
    for idx in topo.traversal_order():
        parent = topo.parent_index[idx]
        if parent < 0:
            global_rot[:, idx] = rot[:, idx]
            pos[:, idx] = m.root_translation
        else:
            global_rot[:, idx] = global_rot[:, parent] @ rot[:, idx]
            pos[:, idx] = pos[:, parent] + np.einsum(
                "tab,b->ta", global_rot[:, parent], topo.offsets[idx]
            )
    return pos


def central_difference_velocity(positions: np.ndarray) -> np.ndarray:
    """Per-frame velocity via central differences, one-sided at both ends."""
    v = np.empty_like(positions)
    v[1:-1] = (positions[2:] - positions[:-2]) / 2.0
    v[0] = positions[1] - positions[0]
    v[-1] = positions[-1] - positions[-2]
    return v


def detect_foot_contacts(
    positions: np.ndarray,
    contact_joints,
    velocity_threshold: float,
    height_threshold: float,
) -> np.ndarray:
    """(T, C) binary labels: 1 where a contact joint is slow AND low.

    Speed is the norm of the central-difference velocity (units/frame);
    height is the raw y coordinate.
    """
    if velocity_threshold <= 0 or height_threshold <= 0:
        raise ValueError("thresholds must be positive")
    contact_joints = list(contact_joints)
    p = positions[:, contact_joints, :]
    speed = np.linalg.norm(central_difference_velocity(p), axis=-1)
    low = p[..., 1] < height_threshold
    return ((speed < velocity_threshold) & low).astype(np.float64)


def _heading_angle(root_matrix: np.ndarray) -> np.ndarray:
    """Yaw of the root's forward (local z) axis, atan2(f_x, f_z); falls back
    to the local x axis when forward points straight up/down."""
    fwd = root_matrix[..., :, 2]
    flat = np.hypot(fwd[..., 0], fwd[..., 2])
    side = root_matrix[..., :, 0]
    theta_fwd = np.arctan2(fwd[..., 0], fwd[..., 2])
    theta_side = np.arctan2(side[..., 0], side[..., 2]) - np.pi / 2.0
    return np.where(flat > 1e-6, theta_fwd, theta_side)


def _rotate_xz(vx: np.ndarray, vz: np.ndarray, theta: np.ndarray):
    c, s = np.cos(theta), np.sin(theta)
    # rotation by theta about +y: x' = c*x + s*z ; z' = -s*x + c*z
    return c * vx + s * vz, -s * vx + c * vz


def to_feature_tensor(
    m: SkeletonMotion,
    velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD,
    height_fraction: float = DEFAULT_HEIGHT_FRACTION,
) -> MotionTensor:
    """Pack a motion into the T x (6J + C + 3) feature layout.

    Contacts are always re-detected from forward kinematics. The contact
    height threshold is `height_fraction * leg_length` above the floor
    estimate (the minimum contact-joint height in the clip).
    """
    topo = m.topology
    t = m.frames
    sixd = rotation_to_6d(m.local_rotations).reshape(t, -1)

    positions = forward_kinematics(m)
    floor = float(positions[:, list(topo.contact_joints), 1].min())
    height_threshold = floor + height_fraction * topo.leg_length()
    contacts = detect_foot_contacts(
        positions, topo.contact_joints, velocity_threshold, height_threshold
    )

    root_mat = quat_to_matrix(m.local_rotations[:, topo.root_index])
    theta = _heading_angle(root_mat)
    root = m.root_translation
    vx = np.empty(t)
    vz = np.empty(t)
    dvx = root[1:, 0] - root[:-1, 0]
    dvz = root[1:, 2] - root[:-1, 2]
    # velocity at frame t is the step t-1 -> t in the heading frame of t-1
    vx[1:], vz[1:] = _rotate_xz(dvx, dvz, -theta[:-1])
    vx[0], vz[0] = vx[1], vz[1]

    feats = np.concatenate(
        [sixd, contacts, np.stack([vx, vz, root[:, 1]], axis=1)], axis=1
    )
    return MotionTensor(feats, topo, m.frame_rate)


def decode_rotations(t: MotionTensor) -> tuple[np.ndarray, np.ndarray]:
    """(T, J, 4) quaternions and a (T, J) validity mask from the 6D blocks."""
    mats, valid = sixd_to_matrix_flagged(t.rotation_block())
    return matrix_to_quat(mats), valid


def contact_labels(t: MotionTensor, threshold: float = 0.5) -> np.ndarray:
    """Binary (T, C) contact labels thresholded from the contact block."""
    return (t.contact_block() > threshold).astype(np.float64)


def from_feature_tensor(t: MotionTensor) -> SkeletonMotion:
    """Invert `to_feature_tensor`. Root x/z positions are recovered by
    integrating heading-frame velocities, anchored at the origin."""
    topo = t.topology
    quats, _ = decode_rotations(t)
    root_mat = quat_to_matrix(quats[:, topo.root_index])
    theta = _heading_angle(root_mat)

    rb = t.root_block()
    vx, vz, y = rb[:, 0], rb[:, 1], rb[:, 2]
    n = t.frames
    pos = np.zeros((n, 3), dtype=np.float64)
    pos[:, 1] = y
    wx, wz = _rotate_xz(vx[1:], vz[1:], theta[:-1])
    pos[1:, 0] = np.cumsum(wx)
    pos[1:, 2] = np.cumsum(wz)
    return SkeletonMotion(topo, quats, pos, t.frame_rate)


def resample_temporal(t: MotionTensor, target_frames: int) -> MotionTensor:
    """Linear per-feature interpolation onto a uniform grid of the target
    length. Equal lengths return a bit-identical copy."""
    if target_frames < 2:
        raise ValueError("target_frames must be >= 2")
    if target_frames == t.frames:
        return t.copy()
    return MotionTensor(
        resample_array(t.features, target_frames), t.topology, t.frame_rate
    )


def resample_array(values: np.ndarray, target: int) -> np.ndarray:
    """Linear interpolation of (T, F) onto `target` uniform samples of [0, 1]."""
    n = values.shape[0]
    if target == n:
        return values.copy()
    x = np.linspace(0.0, 1.0, target) * (n - 1)
    lo = np.floor(x).astype(np.int64)
    lo = np.minimum(lo, n - 2)
    frac = (x - lo)[:, None]
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac


def build_pyramid_targets(t: MotionTensor, p: PyramidConfig) -> list[MotionTensor]:
    """One resampled copy of the clip per stage, at that stage's length."""
    if t.frames != p.stage_lengths[-1]:
        raise StructuralError(
            f"clip length {t.frames} != final stage length {p.stage_lengths[-1]}"
        )
    return [resample_temporal(t, n) for n in p.stage_lengths]


# --- MotionJSON wire format -------------------------------------------------

def motion_to_json_dict(m: SkeletonMotion) -> dict:
    """MotionJSON: topology + per-frame flattened wxyz quaternions + root."""
    return {
        "topology": m.topology.to_json_dict(),
        "frame_rate": float(m.frame_rate),
        "frames": m.local_rotations.reshape(m.frames, -1).tolist(),
        "root": m.root_translation.tolist(),
    }


def motion_from_json_dict(d: dict) -> SkeletonMotion:
    topo = SkeletonTopology.from_json_dict(d["topology"])
    frames = np.asarray(d["frames"], dtype=np.float64)
    quats = frames.reshape(frames.shape[0], topo.joint_count, 4)
    return SkeletonMotion(
        topology=topo,
        local_rotations=quats,
        root_translation=np.asarray(d["root"], dtype=np.float64),
        frame_rate=float(d["frame_rate"]),
    )


def motion_to_json(m: SkeletonMotion) -> str:
    return json.dumps(motion_to_json_dict(m))


def motion_from_json(text: str) -> SkeletonMotion:
    return motion_from_json_dict(json.loads(text))
