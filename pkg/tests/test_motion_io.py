import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monomotion.motion_io import (
    MotionTensor,
    PyramidConfig,
    SkeletonMotion,
    SkeletonTopology,
    StructuralError,
    build_pyramid_targets,
    contact_labels,
    detect_foot_contacts,
    forward_kinematics,
    from_feature_tensor,
    motion_from_json,
    motion_to_json,
    resample_temporal,
    to_feature_tensor,
)
from monomotion.rotations import quat_from_axis_angle, quat_normalize, quat_to_matrix
from monomotion.synthetic import biped_topology, planted_contact_positions, scripted_gait


def fk_matrix_stack_oracle(motion: SkeletonMotion) -> np.ndarray:
    """Naive per-frame 4x4 homogeneous-transform chain, written independently
    of the production implementation."""
    topo = motion.topology
    out = np.zeros((motion.frames, topo.joint_count, 3))
    for t in range(motion.frames):
        transforms = {}
        remaining = set(range(topo.joint_count))
        while remaining:
            for j in sorted(remaining):
                parent = topo.parent_index[j]
                if parent >= 0 and parent in remaining:
                    continue
                local = np.eye(4)
                local[:3, :3] = quat_to_matrix(motion.local_rotations[t, j])
                if parent < 0:
                    local[:3, 3] = motion.root_translation[t]
                    transforms[j] = local
                else:
                    step = np.eye(4)
                    step[:3, 3] = topo.offsets[j]
                    step[:3, :3] = local[:3, :3]
                    transforms[j] = transforms[parent] @ np.block(
                        [[local[:3, :3], topo.offsets[j][:, None]], [np.zeros((1, 3)), 1]]
                    )
                remaining.discard(j)
        for j in range(topo.joint_count):
            out[t, j] = transforms[j][:3, 3]
    return out


def random_tree_motion(joints=5, frames=6, seed=0) -> SkeletonMotion:
    rng = np.random.default_rng(seed)
    parents = [-1] + [int(rng.integers(0, j)) for j in range(1, joints)]
    topo = SkeletonTopology(
        joint_names=tuple(f"j{i}" for i in range(joints)),
        parent_index=tuple(parents),
        offsets=rng.normal(size=(joints, 3)),
        contact_joints=(joints - 1,),
    )
    quats = quat_normalize(rng.normal(size=(frames, joints, 4)))
    return SkeletonMotion(topo, quats, rng.normal(size=(frames, 3)))


class TestTopology:
    def test_two_roots_rejected(self):
        with pytest.raises(StructuralError):
            SkeletonTopology(("a", "b"), (-1, -1), np.zeros((2, 3)), (0,))

    def test_cycle_rejected(self):
        with pytest.raises(StructuralError):
            SkeletonTopology(
                ("a", "b", "c"), (-1, 2, 1), np.zeros((3, 3)), (0,)
            )

    def test_empty_contacts_rejected(self):
        with pytest.raises(StructuralError):
            SkeletonTopology(("a",), (-1,), np.zeros((1, 3)), ())

    def test_duplicate_contacts_rejected(self):
        with pytest.raises(StructuralError):
            SkeletonTopology(("a", "b"), (-1, 0), np.zeros((2, 3)), (1, 1))

    @given(st.integers(0, 1000))
    def test_random_trees_are_valid_after_parse(self, seed):
        m = random_tree_motion(seed=seed)
        order = m.topology.traversal_order()
        assert sorted(order) == list(range(m.topology.joint_count))
        for idx, j in enumerate(order):
            p = m.topology.parent_index[j]
            assert p < 0 or p in order[:idx]


class TestForwardKinematics:
    def test_identity_rotations_accumulate_offsets(self):
        topo = biped_topology()
        frames = 3
        quats = np.zeros((frames, topo.joint_count, 4))
        quats[..., 0] = 1.0
        root = np.tile(np.array([1.0, 2.0, 3.0]), (frames, 1))
        pos = forward_kinematics(SkeletonMotion(topo, quats, root))
        # head = hips + spine + head offsets
        expected = root[0] + topo.offsets[1] + topo.offsets[2]
        assert np.allclose(pos[:, 2], expected)

    def test_two_link_chain_rotated_90_about_z(self):
        topo = SkeletonTopology(
            ("root", "child"), (-1, 0), np.array([[0.0, 0, 0], [1.0, 0, 0]]), (1,)
        )
        frames = 2
        quats = np.zeros((frames, 2, 4))
        quats[:, 0] = quat_from_axis_angle([0, 0, 1], np.pi / 2)
        quats[:, 1, 0] = 1.0
        root = np.tile(np.array([5.0, 0.0, 0.0]), (frames, 1))
        pos = forward_kinematics(SkeletonMotion(topo, quats, root))
        assert np.allclose(pos[:, 1], [5.0, 1.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_matrix_stack_oracle(self, seed):
        m = random_tree_motion(joints=5, frames=4, seed=seed)
        assert np.abs(forward_kinematics(m) - fk_matrix_stack_oracle(m)).max() < 1e-6


class TestContacts:
    def test_stationary_joint_on_floor_all_ones(self):
        pos = np.zeros((10, 1, 3))
        labels = detect_foot_contacts(pos, [0], 0.2, 0.05)
        assert labels.shape == (10, 1)
        assert labels.all()

    def test_fast_joint_all_zeros(self):
        pos = np.zeros((10, 1, 3))
        pos[:, 0, 0] = np.arange(10) * 2.0  # 10x the threshold per frame
        labels = detect_foot_contacts(pos, [0], 0.2, 0.05)
        assert not labels.any()

    def test_scripted_plant_phases_recovered(self):
        pos, expected = planted_contact_positions()
        labels = detect_foot_contacts(pos, [0], 0.05, 0.02)[:, 0]
        agreement = np.mean(labels == expected)
        assert agreement >= 0.95

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            detect_foot_contacts(np.zeros((4, 1, 3)), [0], -1.0, 0.1)


class TestFeatureTensor:
    def test_feature_dimension_arithmetic(self):
        topo = biped_topology()
        assert topo.feature_dim == 6 * 8 + 2 + 3
        # the documented J=22, C=4 case
        names = tuple(f"j{i}" for i in range(22))
        parents = (-1,) + tuple(range(21))
        topo22 = SkeletonTopology(names, parents, np.zeros((22, 3)), (18, 19, 20, 21))
        assert topo22.feature_dim == 22 * 6 + 4 + 3 == 139

    def test_static_pose_has_zero_velocities(self):
        topo = biped_topology()
        quats = np.zeros((8, topo.joint_count, 4))
        quats[..., 0] = 1.0
        root = np.tile(np.array([0.3, 0.9, -0.2]), (8, 1))
        t = to_feature_tensor(SkeletonMotion(topo, quats, root))
        rb = t.root_block()
        assert np.allclose(rb[:, :2], 0.0)
        assert np.allclose(rb[:, 2], 0.9)

    def test_round_trip_positional_rmse(self):
        m = scripted_gait()
        t = to_feature_tensor(m)
        back = from_feature_tensor(t)
        p1 = forward_kinematics(m)
        p2 = forward_kinematics(back)
        p2 = p2 + (p1[0, 0] - p2[0, 0])  # re-anchor the integrated root
        rmse = np.sqrt(np.mean((p1 - p2) ** 2))
        assert rmse < 1e-3

    def test_contact_labels_thresholded(self):
        t = to_feature_tensor(scripted_gait())
        labels = contact_labels(t)
        assert set(np.unique(labels)) <= {0.0, 1.0}

    def test_feature_width_mismatch_rejected(self):
        topo = biped_topology()
        with pytest.raises(StructuralError):
            MotionTensor(np.zeros((4, topo.feature_dim + 1)), topo)


class TestResample:
    def test_equal_length_bit_identical(self):
        t = to_feature_tensor(scripted_gait(frames=32))
        out = resample_temporal(t, 32)
        assert np.array_equal(out.features, t.features)
        assert out.features is not t.features

    def test_constant_sequence_stays_constant(self):
        topo = biped_topology()
        feats = np.tile(np.arange(topo.feature_dim, dtype=float), (9, 1))
        t = MotionTensor(feats, topo)
        for n in (2, 5, 23):
            out = resample_temporal(t, n)
            assert np.allclose(out.features, feats[0])
            assert out.frames == n

    def test_bandlimited_up_down_round_trip(self):
        # one cycle across the clip keeps linear-interp curvature error tiny
        topo = biped_topology()
        x = np.linspace(0, 1, 48)
        feats = np.stack(
            [np.sin(np.pi * x + 0.2 * f) for f in range(topo.feature_dim)],
            axis=1,
        )
        t = MotionTensor(feats, topo)
        back = resample_temporal(resample_temporal(t, 96), 48)
        rmse = np.sqrt(np.mean((back.features - feats) ** 2))
        assert rmse < 1e-3

    @given(
        st.floats(-2, 2), st.floats(-2, 2),
        st.integers(3, 40), st.integers(2, 40),
    )
    def test_linearity(self, a, b, source_len, target_len):
        rng = np.random.default_rng(17)
        topo = biped_topology()
        fx = rng.normal(size=(source_len, topo.feature_dim))
        fy = rng.normal(size=(source_len, topo.feature_dim))
        tx = MotionTensor(fx, topo)
        ty = MotionTensor(fy, topo)
        combined = MotionTensor(a * fx + b * fy, topo)
        lhs = resample_temporal(combined, target_len).features
        rhs = (
            a * resample_temporal(tx, target_len).features
            + b * resample_temporal(ty, target_len).features
        )
        assert np.allclose(lhs, rhs, atol=1e-9)


class TestPyramid:
    def test_documented_lengths_for_128(self):
        cfg = PyramidConfig.for_length(128)
        assert cfg.stage_lengths == (32, 43, 57, 76, 101, 128, 128)

    def test_single_stage_passthrough(self):
        t = to_feature_tensor(scripted_gait(frames=48))
        cfg = PyramidConfig.for_length(48, num_stages=1, level_grouping=(1,))
        targets = build_pyramid_targets(t, cfg)
        assert len(targets) == 1
        assert np.array_equal(targets[0].features, t.features)

    def test_every_target_matches_stage_length(self):
        t = to_feature_tensor(scripted_gait())
        cfg = PyramidConfig.for_length(96)
        for target, n in zip(build_pyramid_targets(t, cfg), cfg.stage_lengths):
            assert target.frames == n

    def test_grouping_must_sum_to_stages(self):
        with pytest.raises(ValueError):
            PyramidConfig(7, (2, 2, 2, 2), (1, 2, 3, 4, 5, 6, 7))

    def test_lengths_strictly_increase_below_cap(self):
        with pytest.raises(ValueError):
            PyramidConfig(3, (2, 1), (10, 10, 20))

    def test_level_lookup(self):
        cfg = PyramidConfig.for_length(128)
        assert [cfg.level_of_stage(i) for i in range(7)] == [0, 0, 1, 1, 2, 2, 3]
        assert cfg.stages_of_level(3) == [6]


def test_motion_json_round_trip():
    m = scripted_gait(frames=16)
    back = motion_from_json(motion_to_json(m))
    assert back.topology == m.topology
    assert np.allclose(back.local_rotations, m.local_rotations)
    assert np.allclose(back.root_translation, m.root_translation)
    assert back.frame_rate == m.frame_rate
