"""Rotation conversions: quaternions (wxyz), matrices, and the continuous 6D encoding.

The 6D encoding of a rotation is the concatenation of the first two columns
of its matrix; decoding re-orthonormalizes them with Gram-Schmidt and takes
the cross product for the third column.
"""
from __future__ import annotations

import numpy as np

# below this, a 6D column is treated as degenerate and identity-completed
_DEGENERATE_EPS = 1e-8


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) (..., 4) in wxyz order to rotation matrix (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix (..., 3, 3) to unit quaternion (..., 4) wxyz, w >= 0."""
    m = np.asarray(m, dtype=np.float64)
    # Shepperd's method, branch chosen per-element on the largest diagonal term
    t = np.einsum("...ii->...", m)
    q = np.empty(m.shape[:-2] + (4,), dtype=np.float64)

    c0 = t > 0
    c1 = (~c0) & (m[..., 0, 0] >= m[..., 1, 1]) & (m[..., 0, 0] >= m[..., 2, 2])
    c2 = (~c0) & (~c1) & (m[..., 1, 1] >= m[..., 2, 2])
    c3 = ~(c0 | c1 | c2)

    s = np.sqrt(np.where(c0, t + 1.0, 1.0)) * 2.0
    q[..., 0] = np.where(c0, 0.25 * s, 0.0)
    q[..., 1] = np.where(c0, (m[..., 2, 1] - m[..., 1, 2]) / s, 0.0)
    q[..., 2] = np.where(c0, (m[..., 0, 2] - m[..., 2, 0]) / s, 0.0)
    q[..., 3] = np.where(c0, (m[..., 1, 0] - m[..., 0, 1]) / s, 0.0)

    s = np.sqrt(np.where(c1, 1.0 + m[..., 0, 0] - m[..., 1, 1] - m[..., 2, 2], 1.0)) * 2.0
    q[..., 0] = np.where(c1, (m[..., 2, 1] - m[..., 1, 2]) / s, q[..., 0])
    q[..., 1] = np.where(c1, 0.25 * s, q[..., 1])
    q[..., 2] = np.where(c1, (m[..., 0, 1] + m[..., 1, 0]) / s, q[..., 2])
    q[..., 3] = np.where(c1, (m[..., 0, 2] + m[..., 2, 0]) / s, q[..., 3])

    s = np.sqrt(np.where(c2, 1.0 + m[..., 1, 1] - m[..., 0, 0] - m[..., 2, 2], 1.0)) * 2.0
    q[..., 0] = np.where(c2, (m[..., 0, 2] - m[..., 2, 0]) / s, q[..., 0])
    q[..., 1] = np.where(c2, (m[..., 0, 1] + m[..., 1, 0]) / s, q[..., 1])
    q[..., 2] = np.where(c2, 0.25 * s, q[..., 2])
    q[..., 3] = np.where(c2, (m[..., 1, 2] + m[..., 2, 1]) / s, q[..., 3])

    s = np.sqrt(np.where(c3, 1.0 + m[..., 2, 2] - m[..., 0, 0] - m[..., 1, 1], 1.0)) * 2.0
    q[..., 0] = np.where(c3, (m[..., 1, 0] - m[..., 0, 1]) / s, q[..., 0])
    q[..., 1] = np.where(c3, (m[..., 0, 2] + m[..., 2, 0]) / s, q[..., 1])
    q[..., 2] = np.where(c3, (m[..., 1, 2] + m[..., 2, 1]) / s, q[..., 2])
    q[..., 3] = np.where(c3, 0.25 * s, q[..., 3])

    sign = np.where(q[..., 0:1] < 0, -1.0, 1.0)
    return quat_normalize(q * sign)


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)
    half = angle / 2.0
    return np.concatenate(
        [np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1
    )


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Geodesic distance (radians) between rotation matrices."""
    m = np.swapaxes(r1, -1, -2) @ r2
    tr = np.einsum("...ii->...", m)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def rotation_to_6d(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) (..., 4) to the 6D encoding (..., 6).

    The 6 values are the first and second matrix columns, concatenated.
    """
    m = quat_to_matrix(q)
    return matrix_to_6d(m)


def matrix_to_6d(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def sixd_to_matrix(v: np.ndarray) -> np.ndarray:
    """6D encoding(s) (..., 6) to rotation matrix (..., 3, 3) via Gram-Schmidt."""
    m, _ = sixd_to_matrix_flagged(v)
    return m


def sixd_to_matrix_flagged(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Like `sixd_to_matrix` but also returns a validity mask.

    Degenerate inputs (near-zero or near-parallel columns) are completed to a
    valid rotation using identity-axis fallbacks and flagged False.
    """
    v = np.asarray(v, dtype=np.float64)
    a = v[..., :3]
    b = v[..., 3:]
    valid = np.ones(v.shape[:-1], dtype=bool)

    na = np.linalg.norm(a, axis=-1, keepdims=True)
    bad_a = na[..., 0] < _DEGENERATE_EPS
    valid &= ~bad_a
    c0 = np.where(bad_a[..., None], np.array([1.0, 0.0, 0.0]), a / np.maximum(na, _DEGENERATE_EPS))

    proj = np.sum(c0 * b, axis=-1, keepdims=True)
    c1 = b - proj * c0
    n1 = np.linalg.norm(c1, axis=-1, keepdims=True)
    bad_b = n1[..., 0] < _DEGENERATE_EPS
    valid &= ~bad_b
    # fallback second axis: whichever of y/z is less aligned with c0
    fb_y = np.array([0.0, 1.0, 0.0]) - c0[..., 1:2] * c0
    fb_z = np.array([0.0, 0.0, 1.0]) - c0[..., 2:3] * c0
    use_y = np.linalg.norm(fb_y, axis=-1) >= np.linalg.norm(fb_z, axis=-1)
    fallback = np.where(use_y[..., None], fb_y, fb_z)
    fallback = fallback / np.linalg.norm(fallback, axis=-1, keepdims=True)
    c1 = np.where(bad_b[..., None], fallback, c1 / np.maximum(n1, _DEGENERATE_EPS))

    c2 = np.cross(c0, c1)
    return np.stack([c0, c1, c2], axis=-1), valid
