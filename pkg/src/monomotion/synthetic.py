"""Procedural skeletal clips for benchmarks and tests.

The scripted gait is quasi-periodic on purpose: amplitude and heading drift
slowly, so no two stride cycles are identical and window self-distances stay
bounded away from zero.
"""
from __future__ import annotations

import numpy as np

from .motion_io import SkeletonMotion, SkeletonTopology
from .rotations import quat_from_axis_angle, quat_multiply

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


def biped_topology() -> SkeletonTopology:
    """8-joint biped: hips, spine, head, one arm, two legs with feet."""
    return SkeletonTopology(
        joint_names=(
            "hips",
            "spine",
            "head",
            "arm",
            "left_leg",
            "left_foot",
            "right_leg",
            "right_foot",
        ),
        parent_index=(-1, 0, 1, 1, 0, 4, 0, 6),
        offsets=np.array(
            [
                [0.0, 0.0, 0.0],
                [0.0, 0.35, 0.0],
                [0.0, 0.35, 0.0],
                [0.3, 0.0, 0.0],
                [0.15, -0.45, 0.0],
                [0.0, -0.45, 0.0],
                [-0.15, -0.45, 0.0],
                [0.0, -0.45, 0.0],
            ]
        ),
        contact_joints=(5, 7),
    )


def scripted_gait(
    frames: int = 96,
    frame_rate: float = 30.0,
    period: int = 24,
    seed: int = 0,
) -> SkeletonMotion:
    """A walking clip with swinging legs/arm, torso sway, bobbing root height,
    drifting heading and a slow amplitude envelope."""
    topo = biped_topology()
    t = np.arange(frames, dtype=np.float64)
    phase = 2.0 * np.pi * t / period
    rng = np.random.default_rng(seed)
    # kept tiny: per-frame noise is irreducible for a deterministic
    # reconstruction path, so it directly floors the trainable L1
    jitter = rng.normal(0.0, 0.002, size=(frames, topo.joint_count))

    # slow modulation so cycles never repeat exactly
    envelope = 1.0 + 0.3 * np.sin(2.0 * np.pi * t / frames + 0.7)
    detail = 0.12 * np.sin(3.0 * phase + 0.5) + 0.08 * np.sin(5.0 * phase + 1.3)

    swing = (0.55 * np.sin(phase) + detail) * envelope
    counter = (0.35 * np.sin(phase + np.pi / 3.0) + 0.5 * detail) * envelope
    sway = 0.12 * np.sin(phase / 2.0) * envelope
    nod = 0.08 * np.sin(phase + 1.1)

    quats = np.zeros((frames, topo.joint_count, 4))
    quats[..., 0] = 1.0

    heading = 0.6 * np.sin(2.0 * np.pi * t / frames)
    quats[:, 0] = quat_multiply(
        quat_from_axis_angle(Y, heading),
        quat_from_axis_angle(Z, 0.05 * np.sin(phase / 2.0)),
    )
    quats[:, 1] = quat_from_axis_angle(Z, sway + jitter[:, 1])
    quats[:, 2] = quat_from_axis_angle(X, nod + jitter[:, 2])
    quats[:, 3] = quat_from_axis_angle(X, -swing + jitter[:, 3])
    quats[:, 4] = quat_from_axis_angle(X, swing + jitter[:, 4])
    quats[:, 5] = quat_from_axis_angle(X, counter + jitter[:, 5])
    quats[:, 6] = quat_from_axis_angle(X, -swing + jitter[:, 6])
    quats[:, 7] = quat_from_axis_angle(X, -counter + jitter[:, 7])

    speed = 0.02 * (1.0 + 0.35 * np.sin(2.0 * np.pi * t / (2 * period)))
    root = np.zeros((frames, 3))
    root[:, 1] = 0.93 + 0.04 * np.sin(2.0 * phase)
    for k in range(1, frames):
        step = speed[k - 1]
        root[k, 0] = root[k - 1, 0] + step * np.sin(heading[k - 1])
        root[k, 2] = root[k - 1, 2] + step * np.cos(heading[k - 1])

    return SkeletonMotion(topo, quats, root, frame_rate)


def planted_contact_positions(
    frames: int = 80,
    plant_every: int = 20,
    plant_length: int = 10,
) -> tuple[np.ndarray, np.ndarray]:
    """(T, 1, 3) positions for one joint plus the (T,) scripted plant labels.

    During a plant the joint sits exactly on the floor; between plants it
    arcs forward and upward.
    """
    pos = np.zeros((frames, 1, 3))
    labels = np.zeros(frames)
    x = 0.0
    k = 0
    while k < frames:
        plant_end = min(k + plant_length, frames)
        pos[k:plant_end, 0, 0] = x
        labels[k:plant_end] = 1.0
        k = plant_end
        swing_end = min(k + (plant_every - plant_length), frames)
        n = swing_end - k
        if n > 0:
            s = np.linspace(0.0, 1.0, n + 1)[1:]
            pos[k:swing_end, 0, 0] = x + 0.8 * s
            pos[k:swing_end, 0, 1] = 0.25 * np.sin(np.pi * s)
            x += 0.8
        k = swing_end
    return pos, labels
