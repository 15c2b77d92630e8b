"""BVH parsing and writing.

Supports HIERARCHY/MOTION documents with Euler rotation orders ZYX, ZXY and
XYZ. End Site blocks are consumed but not kept as joints; the writer emits a
zero-offset End Site under each leaf. Contact joints are guessed from joint
names (foot/toe/heel/ankle substrings) and fall back to the tree leaves.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .motion_io import SkeletonMotion, SkeletonTopology, StructuralError

_SUPPORTED_ORDERS = ("ZYX", "ZXY", "XYZ")
_CONTACT_NAME_HINTS = ("foot", "toe", "heel", "ankle")


class BvhParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class _Cursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def peek(self) -> str | None:
        while self.pos < len(self.lines):
            stripped = self.lines[self.pos].strip()
            if stripped:
                return stripped
            self.pos += 1
        return None

    def take(self) -> str:
        line = self.peek()
        if line is None:
            raise BvhParseError("unexpected end of file", len(self.lines))
        self.pos += 1
        return line

    @property
    def line_no(self) -> int:
        return self.pos  # 1-based line of the token just taken


def _expect(cursor: _Cursor, keyword: str):
    line = cursor.take()
    if not line.upper().startswith(keyword.upper()):
        raise BvhParseError(f"expected {keyword!r}, got {line!r}", cursor.line_no)
    return line


def _rotation_order(channels: list[str], line_no: int) -> str:
    rot = [c for c in channels if c.lower().endswith("rotation")]
    if len(rot) != 3:
        raise BvhParseError(f"expected 3 rotation channels, got {len(rot)}", line_no)
    order = "".join(c[0].upper() for c in rot)
    if order not in _SUPPORTED_ORDERS:
        raise BvhParseError(
            f"unsupported rotation order {order} (supported: {_SUPPORTED_ORDERS})",
            line_no,
        )
    return order


def parse_bvh(text: str, contact_joint_names=None) -> SkeletonMotion:
    """Parse a BVH document into a `SkeletonMotion`.

    contact_joint_names optionally overrides the name-based contact guess.
    """
    cursor = _Cursor(text)
    _expect(cursor, "HIERARCHY")

    names: list[str] = []
    parents: list[int] = []
    offsets: list[list[float]] = []
    channels: list[list[str]] = []  # per joint
    rot_orders: list[str | None] = []  # per joint, None when no rotations

    def parse_joint(parent: int):
        header = cursor.take()
        parts = header.split()
        if parts[0].upper() not in ("ROOT", "JOINT"):
            raise BvhParseError(f"expected ROOT/JOINT, got {header!r}", cursor.line_no)
        if len(parts) < 2:
            raise BvhParseError("joint is missing a name", cursor.line_no)
        _expect(cursor, "{")
        index = len(names)
        names.append(parts[1])
        parents.append(parent)
        offsets.append([0.0, 0.0, 0.0])
        channels.append([])
        rot_orders.append(None)
        while True:
            line = cursor.peek()
            if line is None:
                raise BvhParseError("unterminated joint block", cursor.line_no)
            upper = line.upper()
            if upper.startswith("OFFSET"):
                cursor.take()
                vals = line.split()[1:]
                if len(vals) != 3:
                    raise BvhParseError("OFFSET needs 3 values", cursor.line_no)
                offsets[index] = [float(v) for v in vals]
            elif upper.startswith("CHANNELS"):
                cursor.take()
                parts = line.split()
                declared = int(parts[1])
                listed = parts[2:]
                if declared != len(listed):
                    raise BvhParseError(
                        f"CHANNELS declares {declared} but lists {len(listed)}",
                        cursor.line_no,
                    )
                channels[index] = listed
                if any(c.lower().endswith("rotation") for c in listed):
                    rot_orders[index] = _rotation_order(listed, cursor.line_no)
            elif upper.startswith("END SITE"):
                cursor.take()
                _expect(cursor, "{")
                while not cursor.take().startswith("}"):
                    pass
            elif upper.startswith("JOINT"):
                parse_joint(index)
            elif line.startswith("}"):
                cursor.take()
                return
            else:
                raise BvhParseError(f"unexpected token {line!r}", cursor.line_no)

    parse_joint(-1)

    motion_line = cursor.take()
    if not motion_line.upper().startswith("MOTION"):
        raise BvhParseError(f"expected MOTION, got {motion_line!r}", cursor.line_no)
    frames_line = _expect(cursor, "Frames:")
    try:
        frame_count = int(frames_line.split(":")[1])
    except (IndexError, ValueError):
        raise BvhParseError("cannot parse frame count", cursor.line_no) from None
    time_line = _expect(cursor, "Frame Time:")
    try:
        frame_time = float(time_line.split(":")[1])
    except (IndexError, ValueError):
        raise BvhParseError("cannot parse frame time", cursor.line_no) from None
    if frame_time <= 0:
        raise BvhParseError("frame time must be positive", cursor.line_no)

    total_channels = sum(len(c) for c in channels)
    rows = []
    for _ in range(frame_count):
        line = cursor.peek()
        if line is None:
            raise BvhParseError(
                f"expected {frame_count} frames, got {len(rows)}", cursor.line_no
            )
        cursor.take()
        values = line.split()
        if len(values) != total_channels:
            raise StructuralError(
                f"frame row has {len(values)} values, hierarchy declares "
                f"{total_channels} channels"
            )
        rows.append([float(v) for v in values])
    data = np.asarray(rows, dtype=np.float64)

    j = len(names)
    quats = np.zeros((frame_count, j, 4), dtype=np.float64)
    root_translation = np.zeros((frame_count, 3), dtype=np.float64)
    col = 0
    for idx in range(j):
        for ch in channels[idx]:
            low = ch.lower()
            if low.endswith("position"):
                if idx == 0:  # non-root position channels are ignored
                    axis = "xyz".index(low[0])
                    root_translation[:, axis] = data[:, col]
                col += 1
            elif low.endswith("rotation"):
                col += 1  # handled as a group below
            else:
                raise StructuralError(f"unknown channel {ch!r}")
        rot_cols = [
            c
            for c, ch in zip(range(col - len(channels[idx]), col), channels[idx])
            if ch.lower().endswith("rotation")
        ]
        if rot_cols:
            order = rot_orders[idx]
            angles = data[:, rot_cols]
            xyzw = Rotation.from_euler(order, angles, degrees=True).as_quat()
            quats[:, idx] = np.concatenate([xyzw[:, 3:4], xyzw[:, :3]], axis=1)
        else:
            quats[:, idx, 0] = 1.0

    if contact_joint_names is not None:
        contact = tuple(names.index(n) for n in contact_joint_names)
    else:
        contact = tuple(
            i
            for i, n in enumerate(names)
            if any(h in n.lower() for h in _CONTACT_NAME_HINTS)
        )
        if not contact:  # fall back to the tree leaves
            contact = tuple(i for i in range(j) if i not in set(parents))

    topo = SkeletonTopology(
        joint_names=tuple(names),
        parent_index=tuple(parents),
        offsets=np.asarray(offsets, dtype=np.float64),
        contact_joints=contact,
    )
    return SkeletonMotion(
        topology=topo,
        local_rotations=quats,
        root_translation=root_translation,
        frame_rate=1.0 / frame_time,
    )


def write_bvh(m: SkeletonMotion, euler_order: str = "ZYX") -> str:
    """Serialize a motion as BVH text using one rotation order for all joints."""
    if euler_order not in _SUPPORTED_ORDERS:
        raise ValueError(f"unsupported euler order {euler_order}")
    topo = m.topology
    children: dict[int, list[int]] = {i: [] for i in range(topo.joint_count)}
    for i, p in enumerate(topo.parent_index):
        if p >= 0:
            children[p].append(i)

    rot_channels = " ".join(f"{axis}rotation" for axis in euler_order)
    lines: list[str] = ["HIERARCHY"]

    def emit(idx: int, depth: int):
        pad = "  " * depth
        kind = "ROOT" if topo.parent_index[idx] < 0 else "JOINT"
        ox, oy, oz = topo.offsets[idx]
        lines.append(f"{pad}{kind} {topo.joint_names[idx]}")
        lines.append(f"{pad}{{")
        lines.append(f"{pad}  OFFSET {ox:.6f} {oy:.6f} {oz:.6f}")
        if kind == "ROOT":
            lines.append(
                f"{pad}  CHANNELS 6 Xposition Yposition Zposition {rot_channels}"
            )
        else:
            lines.append(f"{pad}  CHANNELS 3 {rot_channels}")
        if children[idx]:
            for c in children[idx]:
                emit(c, depth + 1)
        else:
            lines.append(f"{pad}  End Site")
            lines.append(f"{pad}  {{")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 0.000000")
            lines.append(f"{pad}  }}")
        lines.append(f"{pad}}}")

    emit(topo.root_index, 0)

    lines.append("MOTION")
    lines.append(f"Frames: {m.frames}")
    lines.append(f"Frame Time: {1.0 / m.frame_rate:.8f}")

    q = m.local_rotations
    xyzw = np.concatenate([q[..., 1:], q[..., :1]], axis=-1)
    angles = np.empty((m.frames, topo.joint_count, 3), dtype=np.float64)
    for idx in range(topo.joint_count):
        angles[:, idx] = Rotation.from_quat(xyzw[:, idx]).as_euler(
            euler_order, degrees=True
        )

    for t in range(m.frames):
        row = [f"{v:.6f}" for v in m.root_translation[t]]
        for idx in range(topo.joint_count):
            row.extend(f"{v:.6f}" for v in angles[t, idx])
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"
