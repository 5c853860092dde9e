import numpy as np
import pytest

from rotcloud.errors import DegenerateRotationError, InvalidInputError
from rotcloud.pcdata import PointCloud
from rotcloud.so3 import (
    AxisAngle,
    Rotation,
    SixD,
    apply_rotation,
    axis_angle_to_rotation,
    geodesic_baseline,
    geodesic_distance,
    rotation_from_up_to,
    rotation_to_axis_angle,
    sample_axis_angle,
    sample_rotation,
    sample_uniform_axis,
    sixd_to_rotation,
)


def test_random_axis_angles_give_proper_rotations():
    rng = np.random.default_rng(0)
    for _ in range(10000):
        m = axis_angle_to_rotation(sample_axis_angle(rng)).m
        assert np.abs(m.T @ m - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(m) - 1.0) < 1e-9


def test_axis_angle_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        aa = sample_axis_angle(rng)
        if aa.angle < 1e-3 or aa.angle > np.pi - 1e-3:
            continue
        back = rotation_to_axis_angle(axis_angle_to_rotation(aa))
        assert back.angle == pytest.approx(aa.angle, abs=1e-6)
        np.testing.assert_allclose(back.axis, aa.axis, atol=1e-6)


def test_round_trip_near_half_turn_keeps_matrix():
    rng = np.random.default_rng(2)
    for _ in range(200):
        aa = AxisAngle(sample_uniform_axis(rng), np.pi - rng.uniform(0.0, 1e-4))
        r = axis_angle_to_rotation(aa)
        again = axis_angle_to_rotation(rotation_to_axis_angle(r))
        np.testing.assert_allclose(again.m, r.m, atol=1e-6)


def test_identity_maps_to_canonical_axis():
    aa = rotation_to_axis_angle(Rotation.identity())
    assert aa.angle == 0.0
    np.testing.assert_array_equal(aa.axis, [0.0, 0.0, 1.0])


def test_quarter_turn_about_z():
    r = axis_angle_to_rotation(AxisAngle([0.0, 0.0, 1.0], np.pi / 2))
    np.testing.assert_allclose(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_axis_angle_validation():
    with pytest.raises(InvalidInputError):
        AxisAngle([1.0, 1.0, 0.0], 0.5)
    with pytest.raises(InvalidInputError):
        AxisAngle([1.0, 0.0, 0.0], -0.1)
    with pytest.raises(InvalidInputError):
        AxisAngle([1.0, 0.0, 0.0], 3.5)


def test_rotation_rejects_reflections_and_non_orthonormal():
    with pytest.raises(InvalidInputError):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidInputError):
        Rotation(np.eye(3) * 1.01)


def test_sixd_lands_in_so3_and_is_scale_invariant():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a1, a2 = rng.normal(size=3), rng.normal(size=3)
        r = sixd_to_rotation(SixD(a1, a2))
        assert np.abs(r.m.T @ r.m - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(r.m) - 1.0) < 1e-9
        scaled = sixd_to_rotation(SixD(a1 * 7.5, a2 * 0.01))
        assert np.abs(scaled.m - r.m).max() < 1e-12


def test_sixd_of_rotation_recovers_it():
    r = sample_rotation(np.random.default_rng(4))
    np.testing.assert_allclose(sixd_to_rotation(SixD.from_rotation(r)).m, r.m, atol=1e-12)


def test_sixd_degenerate_inputs():
    with pytest.raises(DegenerateRotationError):
        sixd_to_rotation(SixD([0.0, 0.0, 0.0], [0.0, 1.0, 0.0]))
    with pytest.raises(DegenerateRotationError):
        sixd_to_rotation(SixD([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]))


def test_rotation_from_up_to_targets():
    rng = np.random.default_rng(5)
    up = np.array([0.0, 1.0, 0.0])
    for _ in range(100):
        target = sample_uniform_axis(rng)
        np.testing.assert_allclose(rotation_from_up_to(target).apply(up), target, atol=1e-9)


def test_rotation_from_up_to_special_cases():
    np.testing.assert_array_equal(rotation_from_up_to([0.0, 1.0, 0.0]).m, np.eye(3))
    flip = rotation_from_up_to([0.0, -1.0, 0.0])
    np.testing.assert_allclose(flip.apply([0.0, 1.0, 0.0]), [0.0, -1.0, 0.0], atol=1e-12)
    # half turn about +x
    np.testing.assert_allclose(flip.m, np.diag([1.0, -1.0, -1.0]), atol=1e-12)


@pytest.mark.parametrize(
    "up, axis",
    [
        ([0.0, -1.0, 0.0], [1.0, 0.0, 0.0]),
        ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        ([-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
        ([0.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
        ([0.0, 0.0, -1.0], [0.0, -1.0, 0.0]),
    ],
)
def test_antipodal_half_turn_axis(up, axis):
    up = np.array(up)
    r = rotation_from_up_to(-up, up=up)
    np.testing.assert_allclose(r.apply(up), -up, atol=1e-12)
    aa = rotation_to_axis_angle(r)
    assert aa.angle == pytest.approx(np.pi, abs=1e-9)
    # a half turn about -a equals one about a; compare the matrix
    np.testing.assert_allclose(r.m, axis_angle_to_rotation(AxisAngle(axis, np.pi)).m, atol=1e-12)
    np.testing.assert_allclose(r.apply(axis), axis, atol=1e-12)


def test_uniform_axis_statistics():
    rng = np.random.default_rng(11)
    axes = np.array([sample_uniform_axis(rng) for _ in range(10000)])
    np.testing.assert_allclose(np.linalg.norm(axes, axis=1), 1.0, atol=1e-12)
    assert np.all(np.abs(axes.mean(axis=0)) < 0.05)
    assert 0.47 <= np.mean(axes[:, 2] > 0.0) <= 0.53


def test_apply_rotation_is_an_isometry():
    rng = np.random.default_rng(12)
    points = rng.normal(size=(200, 3))
    pc = PointCloud(points, category=0)
    before = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    for _ in range(5):
        moved = apply_rotation(sample_rotation(rng), pc).points
        after = np.linalg.norm(moved[:, None, :] - moved[None, :, :], axis=-1)
        assert np.abs(after - before).max() < 1e-9


def test_geodesic_distance_properties():
    rng = np.random.default_rng(6)
    a, b = sample_rotation(rng), sample_rotation(rng)
    assert geodesic_distance(a, a) == pytest.approx(0.0, abs=1e-7)
    assert geodesic_distance(a, b) == pytest.approx(geodesic_distance(b, a), abs=1e-12)
    r = axis_angle_to_rotation(AxisAngle([0.0, 1.0, 0.0], 1.25))
    assert geodesic_distance(Rotation.identity(), r) == pytest.approx(1.25, abs=1e-9)


def test_composition_and_transpose():
    rng = np.random.default_rng(7)
    a, b = sample_rotation(rng), sample_rotation(rng)
    np.testing.assert_allclose((a @ b).m, a.m @ b.m)
    np.testing.assert_allclose((a @ a.T).m, np.eye(3), atol=1e-12)


def test_haar_mean_geodesic_matches_closed_form():
    # mean angle of a Haar rotation is π/2 + 2/π
    assert geodesic_baseline(np.random.default_rng(8), samples=4000) == pytest.approx(np.pi / 2 + 2 / np.pi, abs=0.05)


def test_apply_rotation_moves_keypoints_and_keeps_order():
    pc = PointCloud(np.eye(3), category=2, keypoints=[[1.0, 0.0, 0.0]])
    r = axis_angle_to_rotation(AxisAngle([0.0, 0.0, 1.0], np.pi / 2))
    out = apply_rotation(r, pc)
    np.testing.assert_allclose(out.points[0], [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(out.keypoints[0], [0.0, 1.0, 0.0], atol=1e-12)
    assert out.category == 2
