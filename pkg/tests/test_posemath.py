import math

import numpy as np
import pytest

from scenegen.posemath import (Pose, Rotation, compose, geodesic_distance,
                               interpolate, inverse, pose_allclose,
                               random_pose, random_rotation, slerp)

ATOL = 1e-9


def quat_to_matrix_oracle(q):
    """Outer-product quaternion-to-matrix formula, independent of Rotation."""
    w, x, y, z = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


def homogeneous(pose):
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix_oracle(pose.rotation.quat)
    m[:3, 3] = pose.translation
    return m


def matrices_equal(pose, m):
    return np.max(np.abs(homogeneous(pose) - m)) <= ATOL


def rz(deg, t=(0.0, 0.0, 0.0)):
    return Pose(Rotation.from_axis_angle([0, 0, math.radians(deg)]), np.array(t))


def test_compose_identity_neutral():
    rng = np.random.default_rng(0)
    t = random_pose(rng)
    assert pose_allclose(compose(Pose.identity(), t), t)
    assert pose_allclose(compose(t, Pose.identity()), t)


def test_compose_inverse_gives_identity():
    rng = np.random.default_rng(1)
    t = random_pose(rng)
    assert pose_allclose(compose(t, inverse(t)), Pose.identity())
    assert pose_allclose(compose(inverse(t), t), Pose.identity())


def test_compose_matches_matrix_product():
    a = rz(90, (1, 0, 0))
    b = rz(90, (0, 1, 0))
    got = compose(a, b)
    assert matrices_equal(got, homogeneous(a) @ homogeneous(b))
    # By hand: Rz(90) @ (0,1,0) + (1,0,0) = (-1,0,0) + (1,0,0) = origin.
    assert geodesic_distance(got.rotation, rz(180).rotation) <= ATOL
    assert np.allclose(got.translation, [0.0, 0.0, 0.0], atol=ATOL)


def test_compose_random_vs_matrix_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a, b = random_pose(rng), random_pose(rng)
        assert matrices_equal(compose(a, b), homogeneous(a) @ homogeneous(b))


def test_inverse_identity():
    assert pose_allclose(inverse(Pose.identity()), Pose.identity())


def test_inverse_pure_translation():
    p = Pose(Rotation.identity(), np.array([1.0, 2.0, 3.0]))
    assert np.allclose(inverse(p).translation, [-1.0, -2.0, -3.0], atol=ATOL)
    assert geodesic_distance(inverse(p).rotation, Rotation.identity()) <= ATOL


def test_inverse_matches_matrix_inverse():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = random_pose(rng)
        assert matrices_equal(inverse(p), np.linalg.inv(homogeneous(p)))


def test_interpolate_endpoints_exact():
    rng = np.random.default_rng(4)
    a, b = random_pose(rng), random_pose(rng)
    assert interpolate(a, b, 0.0) is a
    assert interpolate(a, b, 1.0) is b


def test_interpolate_translation_midpoint():
    a = Pose(Rotation.identity(), np.zeros(3))
    b = Pose(Rotation.identity(), np.array([2.0, 0.0, 0.0]))
    mid = interpolate(a, b, 0.5)
    assert np.allclose(mid.translation, [1.0, 0.0, 0.0], atol=ATOL)


def test_interpolate_rotation_halving():
    mid = interpolate(rz(0), rz(90), 0.5)
    assert geodesic_distance(mid.rotation, rz(45).rotation) <= ATOL


def test_interpolate_rejects_out_of_range():
    a, b = Pose.identity(), Pose.identity()
    with pytest.raises(ValueError):
        interpolate(a, b, -0.1)
    with pytest.raises(ValueError):
        interpolate(a, b, 1.1)


def test_geodesic_distance_basic():
    rng = np.random.default_rng(5)
    r = random_rotation(rng)
    assert geodesic_distance(r, r) <= ATOL
    assert abs(geodesic_distance(rz(0).rotation, rz(90).rotation) - math.pi / 2) <= ATOL


def test_geodesic_distance_double_cover():
    rng = np.random.default_rng(6)
    q = random_rotation(rng)
    neg = Rotation(-q.quat)
    assert geodesic_distance(q, neg) <= ATOL


def test_group_laws_bulk():
    # Associativity and inverse round-trip over a large random sample.
    rng = np.random.default_rng(7)
    for _ in range(2000):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert pose_allclose(left, right)
        assert pose_allclose(compose(a, inverse(a)), Pose.identity())


def test_norm_preserved_over_long_chain():
    rng = np.random.default_rng(8)
    acc = Pose.identity()
    for _ in range(100):
        acc = compose(acc, random_pose(rng))
    assert abs(np.linalg.norm(acc.rotation.quat) - 1.0) <= ATOL


def test_canonical_sign():
    r = Rotation(np.array([-0.5, 0.5, 0.5, 0.5]))
    assert r.quat[0] >= 0.0
    # w == 0: first nonzero vector component made positive
    r0 = Rotation(np.array([0.0, -1.0, 0.0, 0.0]))
    assert r0.quat[1] > 0.0


def test_geodesic_symmetry_and_triangle():
    rng = np.random.default_rng(9)
    for _ in range(300):
        a, b, c = (random_rotation(rng) for _ in range(3))
        assert abs(geodesic_distance(a, b) - geodesic_distance(b, a)) <= ATOL
        assert geodesic_distance(a, c) <= (geodesic_distance(a, b)
                                           + geodesic_distance(b, c) + ATOL)


def test_slerp_shortest_arc():
    # 350 degrees should be reached by going -10, not +350.
    a = Rotation.from_axis_angle([0, 0, 0.0])
    b = Rotation.from_axis_angle([0, 0, math.radians(350)])
    mid = slerp(a, b, 0.5)
    # shortest arc midpoint is at -5 degrees
    expect = Rotation.from_axis_angle([0, 0, math.radians(-5)])
    assert geodesic_distance(mid, expect) <= ATOL


def test_rotate_matches_matrix():
    rng = np.random.default_rng(10)
    for _ in range(100):
        r = random_rotation(rng)
        v = rng.standard_normal(3)
        assert np.allclose(r.rotate(v), quat_to_matrix_oracle(r.quat) @ v, atol=ATOL)
