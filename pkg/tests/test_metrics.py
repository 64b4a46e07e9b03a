import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camray.cameras import CameraModel
from camray.errors import GeometryError, InputError
from camray.geometry import Pose, Rotation3, Trajectory, compose
from camray.metrics import (
    CalibEstimate,
    align_yaw_umeyama,
    calib_errors,
    erode_mask,
    pitch_roll_from_rotation,
    pose_metrics,
    prep_rectified,
    psnr,
    relative_trajectory,
    rotation_score,
    subsample_indices,
    wrap_angle_deg,
)
from camray.synthesis import make_rng
from conftest import random_pose

# Frozen oracle lists: floor(i * (N - 1) / 15 + 0.5) for i = 0..15.
FROZEN_SUBSAMPLE = {
    16: list(range(16)),
    17: [0, 1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15, 16],
    48: [0, 3, 6, 9, 13, 16, 19, 22, 25, 28, 31, 34, 38, 41, 44, 47],
    81: [0, 5, 11, 16, 21, 27, 32, 37, 43, 48, 53, 59, 64, 69, 75, 80],
}


def make_traj(poses, start=0):
    return Trajectory(tuple((start + i, p) for i, p in enumerate(poses)))


def identity_traj(n):
    return make_traj([Pose.identity() for _ in range(n)])


class TestSubsampleIndices:
    @pytest.mark.parametrize("n,want", sorted(FROZEN_SUBSAMPLE.items()))
    def test_frozen_oracles(self, n, want):
        assert subsample_indices(n, 16) == want

    def test_endpoints_always_included(self):
        for n in range(16, 400, 7):
            idx = subsample_indices(n, 16)
            assert idx[0] == 0 and idx[-1] == n - 1
            assert len(idx) == 16
            assert idx == sorted(idx)

    def test_short_trajectories_repeat_indices(self):
        # The formula keeps the sample count fixed, so short clips repeat.
        assert subsample_indices(5, 16) == [
            0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4,
        ]
        assert subsample_indices(1, 16) == [0] * 16

    def test_rejects_bad_counts(self):
        with pytest.raises(InputError):
            subsample_indices(0, 16)
        with pytest.raises(InputError):
            subsample_indices(10, 0)


class TestRelativeTrajectory:
    def test_first_pose_becomes_identity(self, rng):
        traj = make_traj([random_pose(rng) for _ in range(4)])
        rel = relative_trajectory(traj)
        np.testing.assert_allclose(rel.poses()[0].matrix(), np.eye(4), atol=1e-12)

    def test_relative_poses_are_first_inverse_times_pose(self, rng):
        traj = make_traj([random_pose(rng) for _ in range(4)])
        rel = relative_trajectory(traj)
        want = compose(traj.poses()[0].inverse(), traj.poses()[2])
        np.testing.assert_allclose(rel.poses()[2].matrix(), want.matrix(), atol=1e-12)


class TestPoseMetrics:
    def test_identical_trajectories_score_zero(self, rng):
        traj = make_traj([random_pose(rng) for _ in range(20)])
        m = pose_metrics(traj, traj)
        assert m.rot_err_deg == pytest.approx(0.0, abs=1e-9)
        assert m.trans_err == pytest.approx(0.0, abs=1e-9)
        assert m.cam_mc == pytest.approx(0.0, abs=1e-9)

    def test_translation_offset_after_first_frame(self):
        # Identity rotations; prediction offset by +0.1 x on frames 1..15.
        gt = identity_traj(16)
        poses = [Pose.identity()]
        poses += [
            Pose(Rotation3.identity(), np.array([0.1, 0.0, 0.0])) for _ in range(15)
        ]
        m = pose_metrics(gt, make_traj(poses))
        assert m.trans_err == pytest.approx(1.5, abs=1e-9)
        assert m.rot_err_deg == pytest.approx(0.0, abs=1e-9)
        # CamMC sums |delta| over the top 3x4 of the relative matrices.
        assert m.cam_mc == pytest.approx(1.5, abs=1e-9)

    def test_uniform_offset_cancels(self):
        gt = identity_traj(16)
        poses = [
            Pose(Rotation3.identity(), np.array([0.7, -0.3, 2.0])) for _ in range(16)
        ]
        m = pose_metrics(gt, make_traj(poses))
        assert m.trans_err == pytest.approx(0.0, abs=1e-12)

    def test_rotation_error_in_degrees(self):
        gt = identity_traj(16)
        poses = [Pose.identity()]
        poses += [
            Pose(Rotation3.rot_y(np.radians(10.0)), np.zeros(3)) for _ in range(15)
        ]
        m = pose_metrics(gt, make_traj(poses))
        assert m.rot_err_deg == pytest.approx(150.0, abs=1e-6)

    def test_invariant_to_global_motion_of_both(self, rng):
        gt = make_traj([random_pose(rng) for _ in range(24)])
        pred = make_traj([random_pose(rng) for _ in range(24)])
        base = pose_metrics(gt, pred)
        g = random_pose(rng)
        gt2 = make_traj([compose(g, p) for p in gt.poses()])
        pred2 = make_traj([compose(g, p) for p in pred.poses()])
        moved = pose_metrics(gt2, pred2)
        assert moved.rot_err_deg == pytest.approx(base.rot_err_deg, abs=1e-9)
        assert moved.trans_err == pytest.approx(base.trans_err, abs=1e-9)
        assert moved.cam_mc == pytest.approx(base.cam_mc, abs=1e-9)

    def test_each_trajectory_subsampled_by_its_own_length(self, rng):
        # 17 gt frames vs 16 predicted: both reduce to 16 samples.
        poses = [random_pose(rng) for _ in range(17)]
        gt = make_traj(poses)
        pred = make_traj([poses[i] for i in FROZEN_SUBSAMPLE[17]])
        m = pose_metrics(gt, pred)
        assert m.trans_err == pytest.approx(0.0, abs=1e-9)

    def test_rejects_single_sample(self):
        with pytest.raises(InputError):
            pose_metrics(identity_traj(3), identity_traj(3), n_samples=1)

    def test_cam_mc_zero_iff_rot_and_trans_zero(self, rng):
        # Zero side: identical trajectories zero out all three components.
        traj = make_traj([random_pose(rng) for _ in range(16)])
        m = pose_metrics(traj, traj)
        assert m.cam_mc == pytest.approx(0.0, abs=1e-12)
        # Nonzero rotation alone must surface in CamMC.
        rot_only = [Pose.identity()]
        rot_only += [
            Pose(Rotation3.rot_y(0.2), np.zeros(3)) for _ in range(15)
        ]
        m_rot = pose_metrics(identity_traj(16), make_traj(rot_only))
        assert m_rot.rot_err_deg > 1.0 and m_rot.trans_err == pytest.approx(0.0)
        assert m_rot.cam_mc > 0.0
        # And nonzero translation alone as well.
        t_only = [Pose.identity()]
        t_only += [
            Pose(Rotation3.identity(), np.array([0.0, 0.3, 0.0]))
            for _ in range(15)
        ]
        m_t = pose_metrics(identity_traj(16), make_traj(t_only))
        assert m_t.trans_err > 1.0 and m_t.rot_err_deg == pytest.approx(0.0)
        assert m_t.cam_mc > 0.0


class TestRotationScore:
    def test_max_angle_from_first(self):
        poses = [
            Pose(Rotation3.rot_y(np.radians(a)), np.zeros(3)) for a in (0, 4, 12, 7)
        ]
        assert rotation_score(make_traj(poses)) == pytest.approx(12.0, abs=1e-9)

    def test_invariant_to_global_rotation(self, rng):
        poses = [random_pose(rng) for _ in range(6)]
        base = rotation_score(make_traj(poses))
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        g = Pose(Rotation3.from_axis_angle(axis, 1.1), np.zeros(3))
        moved = rotation_score(make_traj([compose(g, p) for p in poses]))
        assert moved == pytest.approx(base, abs=1e-9)

    def test_needs_two_frames(self):
        with pytest.raises(InputError):
            rotation_score(identity_traj(1))


class TestYawAlignment:
    def test_recovers_synthetic_similarity(self):
        rng = make_rng(31)
        src = rng.normal(size=(40, 3))
        rot = Rotation3.from_axis_angle([0.0, 1.0, 0.0], np.radians(30.0))
        dst = 2.0 * rot.apply(src) + np.array([1.0, 0.0, 2.0])
        a = align_yaw_umeyama(src, dst)
        assert a.scale == pytest.approx(2.0, abs=1e-12)
        assert np.degrees(a.yaw_rad) == pytest.approx(30.0, abs=1e-9) or (
            np.degrees(a.yaw_rad) == pytest.approx(-330.0, abs=1e-9)
        )
        np.testing.assert_allclose(a.translation, [1.0, 0.0, 2.0], atol=1e-12)
        assert a.rmse < 1e-12

    def test_apply_matches_parameters(self, rng):
        src = rng.normal(size=(10, 3))
        dst = rng.normal(size=(10, 3))
        a = align_yaw_umeyama(src, dst)
        want = a.scale * a.rotation().apply(src) + a.translation
        np.testing.assert_allclose(a.apply(src), want, atol=1e-12)

    def test_beats_fine_yaw_grid(self):
        # Noisy similarity pairs; the closed form must never lose to a
        # 0.1 degree yaw sweep with per-yaw optimal scale/translation.
        rng = make_rng(77)
        for _ in range(5):
            src = rng.normal(size=(25, 3))
            rot = Rotation3.rot_y(rng.uniform(-np.pi, np.pi))
            dst = (
                np.exp(rng.uniform(-0.5, 0.5)) * rot.apply(src)
                + rng.normal(size=3)
                + 0.1 * rng.normal(size=(25, 3))
            )
            best = align_yaw_umeyama(src, dst).rmse
            for yaw in np.radians(np.arange(-180.0, 180.0, 0.1)):
                cand = Rotation3.rot_y(yaw)
                rotated = cand.apply(src)
                # Closed-form scale/translation given the yaw.
                mu_s, mu_d = rotated.mean(0), dst.mean(0)
                var = ((rotated - mu_s) ** 2).sum()
                cov = ((dst - mu_d) * (rotated - mu_s)).sum()
                s = max(cov / var, 1e-12)
                res = dst - (s * rotated + (mu_d - s * mu_s))
                grid_rmse = np.sqrt((res ** 2).sum(axis=1).mean())
                assert best <= grid_rmse + 1e-9

    def test_beats_random_similarity_candidates(self):
        rng = make_rng(15)
        src = rng.normal(size=(30, 3))
        rot = Rotation3.rot_y(0.7)
        dst = 1.3 * rot.apply(src) + np.array([0.2, -0.5, 1.0])
        dst += 0.05 * rng.normal(size=(30, 3))
        best = align_yaw_umeyama(src, dst)
        for _ in range(1000):
            s = np.exp(rng.uniform(-1.0, 1.0))
            cand = Rotation3.rot_y(rng.uniform(-np.pi, np.pi))
            t = rng.normal(size=3)
            res = dst - (s * cand.apply(src) + t)
            rmse = np.sqrt((res ** 2).sum(axis=1).mean())
            assert rmse >= best.rmse - 1e-12

    def test_shape_errors_are_input_errors(self):
        with pytest.raises(InputError):
            align_yaw_umeyama(np.zeros((3, 3)), np.zeros((4, 3)))
        with pytest.raises(InputError):
            align_yaw_umeyama(np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(InputError):
            align_yaw_umeyama(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_degenerate_geometry_errors(self):
        # Coincident sources leave the scale undefined.
        with pytest.raises(GeometryError):
            align_yaw_umeyama(np.ones((5, 3)), np.ones((5, 3)) * 2)
        # Vertical anti-correlation drives the optimal scale negative;
        # no yaw can fix a flip about the horizontal plane.
        src = np.array([[0.0, -1.0, 0.0], [0.0, 1.0, 0.0]])
        with pytest.raises(GeometryError):
            align_yaw_umeyama(src, -src)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_exact_recovery_property(self, seed):
        r = make_rng(seed)
        src = r.normal(size=(12, 3))
        yaw = r.uniform(-np.pi, np.pi)
        s = np.exp(r.uniform(-1.5, 1.5))
        t = r.normal(size=3)
        rot = Rotation3.from_axis_angle([0.0, 1.0, 0.0], yaw)
        dst = s * rot.apply(src) + t
        a = align_yaw_umeyama(src, dst)
        assert a.rmse < 1e-9


class TestWrapAngle:
    def test_wraps_into_half_open_interval(self):
        np.testing.assert_allclose(wrap_angle_deg(190.0), -170.0)
        np.testing.assert_allclose(wrap_angle_deg(-190.0), 170.0)
        np.testing.assert_allclose(wrap_angle_deg(180.0), -180.0)
        np.testing.assert_allclose(wrap_angle_deg(360.0 * 3), 0.0)


class TestPitchRoll:
    def test_level_camera(self):
        pitch, roll = pitch_roll_from_rotation(Rotation3.identity())
        assert pitch == pytest.approx(0.0) and roll == pytest.approx(0.0)

    def test_pitched_camera(self):
        pitch, roll = pitch_roll_from_rotation(Rotation3.rot_x(np.radians(25.0)))
        assert pitch == pytest.approx(25.0, abs=1e-9)
        assert roll == pytest.approx(0.0, abs=1e-9)

    def test_rolled_camera(self):
        pitch, roll = pitch_roll_from_rotation(Rotation3.rot_z(np.radians(40.0)))
        assert roll == pytest.approx(40.0, abs=1e-9)
        assert pitch == pytest.approx(0.0, abs=1e-9)

    def test_yaw_does_not_leak(self):
        pitch, roll = pitch_roll_from_rotation(Rotation3.rot_y(1.0))
        assert pitch == pytest.approx(0.0, abs=1e-9)
        assert roll == pytest.approx(0.0, abs=1e-9)


class TestCalibErrors:
    def test_componentwise_absolute_differences(self):
        gt = CalibEstimate(5.0, -3.0, 120.0, 0.1, 0.01)
        pred = CalibEstimate(7.0, -1.0, 110.0, 0.15, 0.03)
        e = calib_errors(gt, pred)
        assert e.pitch_deg == pytest.approx(2.0)
        assert e.roll_deg == pytest.approx(2.0)
        assert e.fov_deg == pytest.approx(10.0)
        assert e.k1 == pytest.approx(0.05)
        assert e.k2 == pytest.approx(0.02)

    def test_angle_wrap_in_differences(self):
        gt = CalibEstimate(0.0, 170.0, 120.0, 0.0, 0.0)
        pred = CalibEstimate(0.0, -170.0, 120.0, 0.0, 0.0)
        assert calib_errors(gt, pred).roll_deg == pytest.approx(20.0)

    def test_reduce_modes_apply_to_per_frame_angles(self):
        gt = CalibEstimate([0.0, 0.0], [0.0, 0.0], 120.0)
        pred = CalibEstimate([3.0, 5.0], [4.0, 4.0], 120.0)
        mean = calib_errors(gt, pred, reduce="mean")
        total = calib_errors(gt, pred, reduce="sum")
        assert mean.pitch_deg == pytest.approx(4.0)
        assert mean.roll_deg == pytest.approx(4.0)
        assert total.pitch_deg == pytest.approx(8.0)
        assert total.roll_deg == pytest.approx(8.0)
        # Scalar fields never get reduced.
        assert mean.fov_deg == total.fov_deg == 0.0
        with pytest.raises(InputError):
            calib_errors(gt, pred, reduce="max")

    def test_frame_count_mismatch(self):
        gt = CalibEstimate([0.0, 0.0], [0.0, 0.0], 120.0)
        pred = CalibEstimate([1.0], [1.0], 120.0)
        with pytest.raises(InputError):
            calib_errors(gt, pred)

    def test_mismatched_pitch_roll_lengths(self):
        with pytest.raises(InputError):
            CalibEstimate([1.0, 2.0], [1.0], 120.0)

    def test_from_trajectory_extracts_per_frame_angles(self):
        poses = [
            Pose(Rotation3.rot_x(np.radians(10.0)), np.zeros(3)),
            Pose(Rotation3.rot_x(np.radians(20.0)), np.zeros(3)),
        ]
        est = CalibEstimate.from_trajectory(make_traj(poses), fov_deg=120.0)
        np.testing.assert_allclose(est.pitch_deg, [10.0, 20.0], atol=1e-9)
        np.testing.assert_allclose(est.roll_deg, [0.0, 0.0], atol=1e-9)
        assert est.fov_deg == 120.0


class TestPrepRectified:
    def test_pinhole_passthrough(self):
        cam = CameraModel("pinhole", 32, 24, xfov_deg=90.0)
        rng = make_rng(4)
        frames = [rng.uniform(size=(24, 32, 3)) for _ in range(2)]
        rect, rmap = prep_rectified(frames, cam, cap_deg=90.0)
        assert rmap.valid.all()
        for orig, r in zip(frames, rect):
            assert r.dtype == np.float32
            np.testing.assert_allclose(r, orig, atol=1e-5)

    def test_wide_camera_capped(self):
        cam = CameraModel("ucm", 64, 48, xfov_deg=170.0, xi=1.8)
        frames = [np.ones((48, 64, 1))]
        rect, rmap = prep_rectified(frames, cam)
        assert rmap.dst_cam.xfov_deg == 100.0
        np.testing.assert_allclose(rect[0][rmap.valid], 1.0, atol=1e-6)

    def test_frame_shape_mismatch(self):
        cam = CameraModel("pinhole", 32, 24, xfov_deg=90.0)
        with pytest.raises(InputError):
            prep_rectified([np.ones((10, 10, 1))], cam)


class TestPsnr:
    def test_identical_images_are_infinite(self):
        img = np.random.default_rng(0).uniform(size=(8, 8, 3))
        assert psnr(img, img) == np.inf

    def test_known_mse(self):
        a = np.zeros((4, 4, 1))
        b = np.full((4, 4, 1), 0.5)
        assert psnr(a, b) == pytest.approx(10 * np.log10(1.0 / 0.25))

    def test_mask_restricts_comparison(self):
        a = np.zeros((4, 4, 1))
        b = np.zeros((4, 4, 1))
        b[0, 0, 0] = 1.0
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        assert psnr(a, b, mask=mask) == np.inf
        assert psnr(a, b) < np.inf

    def test_peak_parameter(self):
        a = np.zeros((2, 2, 1))
        b = np.full((2, 2, 1), 127.5)
        assert psnr(a, b, peak=255.0) == pytest.approx(10 * np.log10(4.0))


class TestErodeMask:
    def test_shrinks_by_given_radius(self):
        mask = np.zeros((9, 9), dtype=bool)
        mask[1:8, 1:8] = True
        got = erode_mask(mask, 2)
        want = np.zeros((9, 9), dtype=bool)
        want[3:6, 3:6] = True
        np.testing.assert_array_equal(got, want)

    def test_zero_pixels_is_identity(self):
        mask = np.random.default_rng(1).uniform(size=(6, 6)) > 0.5
        np.testing.assert_array_equal(erode_mask(mask, 0), mask)

    def test_false_survives_everything(self):
        mask = np.zeros((5, 5), dtype=bool)
        assert not erode_mask(mask, 1).any()
