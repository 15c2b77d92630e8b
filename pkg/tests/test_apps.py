import numpy as np
import pytest
import torch

from monomotion import apps
from monomotion.apps import (
    DegenerateMaskError,
    FrameMask,
    JointMask,
    MaskError,
    PlacementError,
    RoiPlacement,
    body_part_compose,
    crowd,
    expand,
    inpaint,
    lower_body_mask,
    mask_from_json,
    place_rois,
    restyle,
    upper_body_mask,
)
from monomotion.motion_io import MotionTensor, SkeletonTopology, StructuralError
from monomotion.network import derive_seed
from monomotion.synthetic import biped_topology


@pytest.fixture(scope="module")
def trained(tiny_run):
    model, report, clip, cfg = tiny_run
    return model, clip


class TestJointMask:
    def test_feature_vector_layout(self):
        topo = biped_topology()
        vec = JointMask((1,), include_root=True).feature_vector(topo)
        assert vec[6:12].all() and vec[:6].sum() == 0
        assert vec[-3:].all()
        assert vec[6 * 8 : 6 * 8 + 2].sum() == 0

    def test_root_triplet_toggles_atomically(self):
        topo = biped_topology()
        vec = JointMask((0,)).feature_vector(topo)
        assert vec[-3:].sum() == 0
        vec = JointMask((0,), include_root=True).feature_vector(topo)
        assert vec[-3:].sum() == 3

    def test_out_of_range_joint_rejected(self):
        with pytest.raises(MaskError):
            JointMask((99,)).feature_vector(biped_topology())

    def test_lower_body_preset_includes_root_and_legs(self):
        topo = biped_topology()
        mask = lower_body_mask(topo)
        assert mask.include_root and mask.include_contacts
        assert set(mask.kept_joints) == {0, 4, 5, 6, 7}

    def test_upper_body_preset_is_complement(self):
        topo = biped_topology()
        assert set(upper_body_mask(topo).kept_joints) == {1, 2, 3}
        assert not upper_body_mask(topo).include_root

    def test_overwrite_idempotent(self):
        topo = biped_topology()
        m = JointMask((2, 4), include_root=True).feature_vector(topo)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(12, topo.feature_dim))
        ref = rng.normal(size=(12, topo.feature_dim))
        once = m * ref + (1 - m) * x
        twice = m * ref + (1 - m) * once
        assert np.array_equal(once, twice)


class TestFrameMask:
    def test_vector_semantics(self):
        fm = FrameMask(((2, 5),), 8)
        assert fm.vector().tolist() == [0, 0, 1, 1, 1, 0, 0, 0]

    def test_all_ones_rejected(self):
        with pytest.raises(DegenerateMaskError):
            FrameMask(((0, 8),), 8).vector()

    def test_all_zeros_rejected(self):
        with pytest.raises(DegenerateMaskError):
            FrameMask((), 8).vector()

    def test_out_of_range_rejected(self):
        with pytest.raises(MaskError):
            FrameMask(((4, 12),), 8).vector()

    def test_splice_formula_keeps_reference_frames(self):
        fm = FrameMask(((3, 6),), 10)
        m = fm.vector()[None, None, :]
        ref = np.arange(10, dtype=float)[None, None, :]
        gen = np.full((1, 1, 10), -1.0)
        spliced = m * gen + (1 - m) * ref
        kept = np.flatnonzero(fm.vector() == 0)
        assert np.array_equal(spliced[0, 0, kept], ref[0, 0, kept])


class TestMaskJson:
    def test_round_trip(self):
        jm, ranges = mask_from_json(
            {"kept_joints": [0, 3], "include_root": True, "frames": [[2, 5]]}
        )
        assert jm.kept_joints == (0, 3)
        assert jm.include_root and not jm.include_contacts
        assert ranges == [(2, 5)]

    def test_unknown_field_rejected(self):
        with pytest.raises(MaskError):
            mask_from_json({"keep": [1]})

    def test_bad_range_rejected(self):
        with pytest.raises(MaskError):
            mask_from_json({"frames": [[1, 2, 3]]})

    def test_bad_joint_list_rejected(self):
        with pytest.raises(MaskError):
            mask_from_json({"kept_joints": ["hip"]})


class TestBodyPartCompose:
    def test_empty_mask_reduces_to_generate_full(self, trained):
        model, clip = trained
        out = body_part_compose(model, clip, JointMask(), level=1, seed=21)
        plain = model.generate_full(21)
        assert np.array_equal(out.features, plain.features)

    def test_full_mask_is_reference_passthrough(self, trained):
        model, clip = trained
        topo = model.topology
        full = JointMask(
            tuple(range(topo.joint_count)), include_root=True, include_contacts=True
        )
        out = body_part_compose(model, clip, full, level=1, seed=4)

        # oracle: downsampled reference pushed through the upper stages
        entry = model.pyramid.stages_of_level(1)[0]
        codes = model.resolve_noise(4)
        with torch.no_grad():
            ref = model._resample(
                model.normalize(clip), model.pyramid.stage_lengths[entry - 1]
            )
            expected = model.denormalize(model.run_stages(ref, codes, entry, None))
        assert np.array_equal(out.features, expected.features)

    def test_weights_untouched(self, trained):
        model, clip = trained
        digest = model.weights_digest()
        body_part_compose(model, clip, lower_body_mask(model.topology), seed=3)
        assert model.weights_digest() == digest

    def test_invalid_level_rejected(self, trained):
        model, clip = trained
        with pytest.raises(ValueError):
            body_part_compose(model, clip, JointMask(), level=0, seed=1)

    def test_wrong_mask_width_rejected(self, trained):
        model, clip = trained
        other = SkeletonTopology(("a", "b"), (-1, 0), np.zeros((2, 3)), (1,))
        with pytest.raises(MaskError):
            body_part_compose(model, clip, JointMask((15,)), seed=1)
        with pytest.raises(StructuralError):
            restyle(model, MotionTensor(np.zeros((8, other.feature_dim)), other))


class TestInpaint:
    def test_degenerate_masks_rejected(self, trained):
        model, clip = trained
        splice = model.pyramid.stage_lengths[model.pyramid.stages_of_level(1)[0] - 1]
        with pytest.raises(DegenerateMaskError):
            inpaint(model, clip, FrameMask(((0, splice),), splice), seed=1)
        with pytest.raises(DegenerateMaskError):
            inpaint(model, clip, FrameMask((), splice), seed=1)

    def test_wrong_mask_length_rejected(self, trained):
        model, clip = trained
        with pytest.raises(MaskError):
            inpaint(model, clip, FrameMask(((0, 2),), 999), seed=1)

    def test_output_full_length_and_pure(self, trained):
        model, clip = trained
        splice = model.pyramid.stage_lengths[model.pyramid.stages_of_level(1)[0] - 1]
        digest = model.weights_digest()
        third = splice // 3
        out = inpaint(
            model, clip, FrameMask(((third, 2 * third),), splice), seed=8
        )
        assert out.frames == clip.frames
        assert model.weights_digest() == digest


class TestPlaceRois:
    def test_zero_placements_equals_generate_full(self, trained):
        model, clip = trained
        total = clip.frames
        out = place_rois(model, [], total, seed=13)
        plain = model.generate_full(13, length_override=total)
        assert np.array_equal(out.features, plain.features)

    def test_full_cover_placement_rejected(self, trained):
        model, clip = trained
        with pytest.raises(PlacementError):
            place_rois(
                model,
                [RoiPlacement(clip, 0, clip.frames, 0)],
                clip.frames,
                seed=1,
            )

    def test_overlapping_placements_rejected(self, trained):
        model, clip = trained
        roi = RoiPlacement(clip, 0, 24, 0)
        roi2 = RoiPlacement(clip, 0, 24, 2)
        with pytest.raises(PlacementError):
            place_rois(model, [roi, roi2], clip.frames * 2, seed=1)

    def test_out_of_timeline_rejected(self, trained):
        model, clip = trained
        with pytest.raises(PlacementError):
            place_rois(
                model, [RoiPlacement(clip, 0, 24, 10_000)], clip.frames, seed=1
            )

    def test_bad_source_range_rejected(self, trained):
        model, clip = trained
        with pytest.raises(PlacementError):
            RoiPlacement(clip, 50, 20, 0)


class TestCrowdExpand:
    def test_crowd_singleton_matches_derived_seed(self, trained):
        model, clip = trained
        out = crowd(model, 1, seed=5)
        expected = model.generate_full(derive_seed(5, 33, 0))
        assert np.array_equal(out[0].features, expected.features)

    def test_crowd_deterministic(self, trained):
        model, _ = trained
        a = crowd(model, 4, seed=2)
        b = crowd(model, 4, seed=2)
        for x, y in zip(a, b):
            assert np.array_equal(x.features, y.features)

    def test_crowd_members_distinct(self, trained):
        model, _ = trained
        outs = crowd(model, 3, seed=2)
        assert not np.allclose(outs[0].features, outs[1].features)

    def test_crowd_needs_positive_n(self, trained):
        model, _ = trained
        with pytest.raises(ValueError):
            crowd(model, 0, seed=1)

    def test_expand_length_contract(self, trained):
        model, clip = trained
        out = expand(model, clip, extra_frames=32, seed=6)
        assert out.frames == clip.frames + 32

    def test_expand_rejects_nonpositive(self, trained):
        model, clip = trained
        with pytest.raises(ValueError):
            expand(model, clip, extra_frames=0, seed=6)


class TestRestyle:
    def test_content_defines_length(self, trained):
        model, clip = trained
        out = restyle(model, clip, seed=3)
        assert out.frames == clip.frames

    def test_zero_noise_mode(self, trained):
        model, clip = trained
        a = restyle(model, clip, seed=None)
        b = restyle(model, clip, seed=None)
        assert np.array_equal(a.features, b.features)

    def test_incompatible_topology_rejected(self, trained):
        model, _ = trained
        other = SkeletonTopology(("a", "b"), (-1, 0), np.zeros((2, 3)), (1,))
        bad = MotionTensor(np.zeros((16, other.feature_dim)), other)
        with pytest.raises(StructuralError):
            restyle(model, bad)
