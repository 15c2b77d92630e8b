"""Single-forward-pass applications over a trained pyramid: body-part
composition, frame inpainting, ROI placement, crowd generation, temporal
expansion and re-styling.

Every operation resolves its noise codes exactly like `generate_full` does
for the same seed, so an empty mask reduces bit-exactly to plain generation.
No operation mutates model weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .motion_io import MotionTensor, StructuralError
from .network import PyramidModel, derive_seed


class MaskError(ValueError):
    """Invalid mask specification."""


class DegenerateMaskError(MaskError):
    """Mask keeps everything or nothing; the operation would be a no-op."""


class PlacementError(ValueError):
    """ROI placements overlap or fall outside the timeline."""


@dataclass(frozen=True)
class JointMask:
    """Feature mask derived from a set of kept joints.

    Kept entries are overwritten with the reference motion during
    composition; the root velocity/height triplet toggles atomically.
    """

    kept_joints: tuple[int, ...] = ()
    include_root: bool = False
    include_contacts: bool = False

    def feature_vector(self, topology) -> np.ndarray:
        j = topology.joint_count
        for idx in self.kept_joints:
            if not 0 <= idx < j:
                raise MaskError(f"joint index {idx} out of range")
        if len(set(self.kept_joints)) != len(self.kept_joints):
            raise MaskError("kept_joints contains duplicates")
        vec = np.zeros(topology.feature_dim)
        for idx in self.kept_joints:
            vec[6 * idx : 6 * (idx + 1)] = 1.0
        c = len(topology.contact_joints)
        if self.include_contacts:
            vec[6 * j : 6 * j + c] = 1.0
        if self.include_root:
            vec[6 * j + c :] = 1.0
        return vec

    def is_empty(self) -> bool:
        return not self.kept_joints and not self.include_root and not self.include_contacts

    def to_json_dict(self) -> dict:
        return {
            "kept_joints": list(self.kept_joints),
            "include_root": self.include_root,
            "include_contacts": self.include_contacts,
        }


def lower_body_mask(topology) -> JointMask:
    """Joints on a root-to-contact chain, plus the root triplet and contacts.

    The root belongs to the lower body, so composing with this mask preserves
    the reference's global trajectory.
    """
    keep: set[int] = set()
    for c in topology.contact_joints:
        k = c
        while k >= 0:
            keep.add(k)
            k = topology.parent_index[k]
    return JointMask(tuple(sorted(keep)), include_root=True, include_contacts=True)


def upper_body_mask(topology) -> JointMask:
    lower = set(lower_body_mask(topology).kept_joints)
    keep = tuple(sorted(set(range(topology.joint_count)) - lower))
    return JointMask(keep, include_root=False, include_contacts=False)


@dataclass(frozen=True)
class FrameMask:
    """Half-open frame ranges to regenerate, at the splice resolution.

    Frames outside the ranges keep the (downsampled) reference content.
    """

    regenerate: tuple[tuple[int, int], ...]
    length: int

    def vector(self) -> np.ndarray:
        vec = np.zeros(self.length)
        for start, end in self.regenerate:
            if not 0 <= start < end <= self.length:
                raise MaskError(f"range [{start}, {end}) outside 0..{self.length}")
            vec[start:end] = 1.0
        if vec.min() == vec.max():
            raise DegenerateMaskError(
                "frame mask must keep at least one frame and regenerate at least one"
            )
        return vec

    def to_json_dict(self) -> dict:
        return {"frames": [list(r) for r in self.regenerate], "length": self.length}


def mask_from_json(d: dict) -> tuple[JointMask, list[tuple[int, int]]]:
    """Parse the shared mask JSON: {"kept_joints": [...], "include_root": b,
    "include_contacts": b, "frames": [[start, end], ...]}. Returns the joint
    mask and the raw frame ranges (empty when absent)."""
    if not isinstance(d, dict):
        raise MaskError("mask must be a JSON object")
    unknown = set(d) - {"kept_joints", "include_root", "include_contacts", "frames"}
    if unknown:
        raise MaskError(f"unknown mask fields: {sorted(unknown)}")
    kept = d.get("kept_joints", [])
    if not isinstance(kept, list) or not all(isinstance(k, int) for k in kept):
        raise MaskError("kept_joints must be a list of joint indices")
    frames = d.get("frames", [])
    if not isinstance(frames, list):
        raise MaskError("frames must be a list of [start, end] pairs")
    ranges = []
    for r in frames:
        if (
            not isinstance(r, list)
            or len(r) != 2
            or not all(isinstance(v, int) for v in r)
        ):
            raise MaskError("each frame range must be [start, end]")
        ranges.append((r[0], r[1]))
    jm = JointMask(
        kept_joints=tuple(kept),
        include_root=bool(d.get("include_root", False)),
        include_contacts=bool(d.get("include_contacts", False)),
    )
    return jm, ranges


@dataclass(frozen=True)
class RoiPlacement:
    """A source mini-clip range placed at a target position.

    source_start/source_end are frames of the source clip; target_start is
    expressed at the level-2 input resolution of the composed timeline.
    """

    source: MotionTensor
    source_start: int
    source_end: int
    target_start: int

    def __post_init__(self):
        if not 0 <= self.source_start < self.source_end <= self.source.frames:
            raise PlacementError("source range outside the source clip")
        if self.target_start < 0:
            raise PlacementError("target_start must be >= 0")


# --- chain helpers ------------------------------------------------------------

def _entry_stage(model: PyramidModel, level: int) -> int:
    if not 1 <= level < model.pyramid.num_levels:
        raise ValueError(
            f"composition level must be in 1..{model.pyramid.num_levels - 1}"
        )
    return model.pyramid.stages_of_level(level)[0]


def continue_from(
    model: PyramidModel,
    coarse: MotionTensor,
    start_stage: int,
    seed: int | None = 0,
) -> MotionTensor:
    """Feed a real-unit coarse tensor into stages [start_stage, S).

    `seed` of None zeroes all noise. The coarse tensor must be at the length
    the previous stage would have produced.
    """
    model.require_trained()
    if coarse.feature_dim != model.topology.feature_dim:
        raise StructuralError("coarse tensor feature width does not match model")
    expected = model.pyramid.stage_lengths[start_stage - 1]
    if coarse.frames != expected:
        raise StructuralError(
            f"coarse tensor must have {expected} frames for stage {start_stage}"
        )
    codes = _codes(model, seed)
    x = model.normalize(coarse)
    with torch.no_grad():
        out = model.run_stages(x, codes, start_stage, None)
    return model.denormalize(out)


def _codes(model, seed, lengths=None, batch: int = 1):
    if seed is None:
        return model.resolve_noise(
            [None] * model.pyramid.num_stages, lengths, batch=batch
        )
    return model.resolve_noise(int(seed), lengths)


def body_part_compose(
    model: PyramidModel,
    reference: MotionTensor,
    mask: JointMask,
    level: int = 1,
    seed: int = 0,
) -> MotionTensor:
    """Overwrite masked features with the downsampled reference at the input
    of the first stage of `level`; stages below and above run unmodified."""
    model.require_trained()
    entry = _entry_stage(model, level)
    vec = mask.feature_vector(model.topology)
    codes = _codes(model, seed)
    with torch.no_grad():
        x = model.run_stages(None, codes, 0, entry)
        m = torch.as_tensor(vec, dtype=torch.float32)[None, :, None]
        ref = model._resample(
            model.normalize(reference), model.pyramid.stage_lengths[entry - 1]
        )
        x = m * ref + (1.0 - m) * x
        out = model.run_stages(x, codes, entry, None)
    return model.denormalize(out)


def inpaint(
    model: PyramidModel,
    reference: MotionTensor,
    frame_mask: FrameMask,
    seed: int = 0,
) -> MotionTensor:
    """Keep reference content outside the masked ranges, fill the ranges with
    first-level generated features, then refine through the upper stages.

    The splice happens at the first level's output resolution (the input of
    stage 3 of the pyramid).
    """
    model.require_trained()
    splice_stage = model.pyramid.stages_of_level(1)[0]  # first stage above L1
    splice_len = model.pyramid.stage_lengths[splice_stage - 1]
    if frame_mask.length != splice_len:
        raise MaskError(
            f"frame mask length {frame_mask.length} != splice resolution {splice_len}"
        )
    vec = frame_mask.vector()  # raises on degenerate masks
    codes = _codes(model, seed)
    with torch.no_grad():
        generated = model.run_stages(None, codes, 0, splice_stage)
        ref = model._resample(model.normalize(reference), splice_len)
        m = torch.as_tensor(vec, dtype=torch.float32)[None, None, :]
        spliced = m * generated + (1.0 - m) * ref
        out = model.run_stages(spliced, codes, splice_stage, None)
    return model.denormalize(out)


def place_rois(
    model: PyramidModel,
    placements: list[RoiPlacement],
    total_frames: int,
    seed: int = 0,
) -> MotionTensor:
    """Compose a timeline of `total_frames`: downsampled ROI mini-clips at
    their target spots, generated features elsewhere."""
    model.require_trained()
    lengths = model.scaled_lengths(total_frames)
    splice_stage = model.pyramid.stages_of_level(1)[0]
    splice_len = lengths[splice_stage - 1]
    codes = _codes(model, seed, lengths)

    spans = []
    for p in placements:
        n_l2 = max(2, round((p.source_end - p.source_start) * splice_len / total_frames))
        end = p.target_start + n_l2
        if end > splice_len:
            raise PlacementError(
                f"placement [{p.target_start}, {end}) exceeds timeline {splice_len}"
            )
        spans.append((p.target_start, end, p))
    spans.sort()
    for (s1, e1, _), (s2, _, _) in zip(spans, spans[1:]):
        if s2 < e1:
            raise PlacementError("placements overlap after length accounting")
    if sum(e - s for s, e, _ in spans) >= splice_len:
        raise PlacementError(
            "placements cover the whole timeline; nothing left to generate"
        )

    with torch.no_grad():
        base = model.run_stages(None, codes, 0, splice_stage)
        for start, end, p in spans:
            clip = MotionTensor(
                p.source.features[p.source_start : p.source_end],
                p.source.topology,
                p.source.frame_rate,
            )
            down = model._resample(model.normalize(clip), end - start)
            base[:, :, start:end] = down
        out = model.run_stages(base, codes, splice_stage, None)
    return model.denormalize(out)


def crowd(model: PyramidModel, n: int, seed: int = 0) -> list[MotionTensor]:
    """n independent full generations with seeds derived from the master."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [model.generate_full(derive_seed(seed, 33, k)) for k in range(n)]


def expand(
    model: PyramidModel,
    reference: MotionTensor,
    extra_frames: int,
    seed: int = 0,
) -> MotionTensor:
    """Append generated content after the reference: concatenate generated
    coarse features to the downsampled reference at the second level's output
    and refine through the remaining stages at the expanded length."""
    if extra_frames <= 0:
        raise ValueError("extra_frames must be positive")
    model.require_trained()
    pyramid = model.pyramid
    # concat at the second level's output (or the last boundary on shallow
    # pyramids) and refine through the stages above it
    concat_level = min(2, pyramid.num_levels - 1)
    concat_stage = pyramid.stages_of_level(concat_level)[0]
    total = reference.frames + extra_frames
    out_lengths = model.scaled_lengths(total)

    k = model.net_config.temporal_kernel
    ext_lengths = [
        max(k, round(n * extra_frames / reference.frames))
        for n in pyramid.stage_lengths
    ]
    ext_codes = _codes(model, derive_seed(seed, 44), ext_lengths)
    codes = _codes(model, seed, out_lengths)

    with torch.no_grad():
        ref_down = model._resample(
            model.normalize(reference), pyramid.stage_lengths[concat_stage - 1]
        )
        ext = model.run_stages(None, ext_codes, 0, concat_stage)
        joined = torch.cat([ref_down, ext], dim=-1)
        out = model.run_stages(joined, codes, concat_stage, None)
    return model.denormalize(out)


def restyle(
    style_model: PyramidModel,
    content: MotionTensor,
    seed: int | None = 0,
) -> MotionTensor:
    """Drive the style model's upper stages with the content clip's coarse
    (low-pass) features: skip stage 1, feed the downsampled content instead.

    `seed` of None zeroes the noise, which collapses to the reconstruction
    chain when the content matches the model's own coarse training target.
    """
    style_model.require_trained()
    if content.feature_dim != style_model.topology.feature_dim:
        raise StructuralError("content features incompatible with style model")
    coarse_len = style_model.pyramid.stage_lengths[0]
    with torch.no_grad():
        coarse = style_model._resample(style_model.normalize(content), coarse_len)
        codes = _codes(style_model, seed)
        out = style_model.run_stages(coarse, codes, 1, None)
    return style_model.denormalize(out)
