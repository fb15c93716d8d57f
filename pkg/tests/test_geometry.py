import numpy as np
import pytest

from dyn4d.errors import DegenerateConfiguration, DegenerateRotation
from dyn4d.geometry import (
    CameraModel,
    RigidTransform,
    apply,
    compose,
    identity_transform,
    inverse,
    kabsch,
    pose9_from_rigid,
    project,
    rigid_from_pose9,
    rot6_to_rotation,
    rotation_to_rot6,
)
from oracles import apply_homogeneous, homogeneous, random_rotation


def random_transform(rng):
    return RigidTransform(random_rotation(rng), rng.normal(size=3))


# --- rot6 ------------------------------------------------------------------

def test_rot6_identity():
    r = rot6_to_rotation(np.array([1.0, 0, 0, 0, 1.0, 0]))
    assert np.allclose(r, np.eye(3))


def test_rot6_scale_removed():
    r = rot6_to_rotation(np.array([2.0, 0, 0, 0, 3.0, 0]))
    assert np.allclose(r, np.eye(3))


def test_rot6_roundtrip_1000_random():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        r = random_rotation(rng)
        back = rot6_to_rotation(rotation_to_rot6(r))
        worst = max(worst, np.abs(back - r).max())
    assert worst < 1e-9


def test_rot6_batched():
    rng = np.random.default_rng(4)
    rs = np.stack([random_rotation(rng) for _ in range(7)])
    back = rot6_to_rotation(rotation_to_rot6(rs))
    assert back.shape == (7, 3, 3)
    assert np.allclose(back, rs)


def test_rot6_degenerate_cases():
    with pytest.raises(DegenerateRotation):
        rot6_to_rotation(np.zeros(6))
    with pytest.raises(DegenerateRotation):
        rot6_to_rotation(np.array([1.0, 0, 0, 2.0, 0, 0]))  # parallel


def test_rot6_result_is_rotation():
    rng = np.random.default_rng(5)
    for _ in range(50):
        r = rot6_to_rotation(rng.normal(size=6))
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(r) - 1.0) < 1e-9


# --- compose / apply / pose9 -------------------------------------------------

def test_compose_identity_and_inverse():
    rng = np.random.default_rng(6)
    t = random_transform(rng)
    ti = compose(t, identity_transform())
    assert np.allclose(ti.rotation, t.rotation) and np.allclose(ti.translation, t.translation)
    ident = compose(t, inverse(t))
    assert np.allclose(ident.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(ident.translation, 0.0, atol=1e-9)


def test_compose_matches_homogeneous_oracle():
    rng = np.random.default_rng(7)
    a, b = random_transform(rng), random_transform(rng)
    ab = compose(a, b)
    m = homogeneous(a.rotation, a.translation) @ homogeneous(b.rotation, b.translation)
    assert np.allclose(homogeneous(ab.rotation, ab.translation), m, atol=1e-12)


def test_compose_associative():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert np.allclose(left.rotation, right.rotation, atol=1e-12)
        assert np.allclose(left.translation, right.translation, atol=1e-12)


def test_apply_examples():
    assert np.allclose(apply(identity_transform(), [1.0, 2.0, 3.0]), [1, 2, 3])
    rot90 = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    assert np.allclose(apply(RigidTransform(rot90, np.zeros(3)), [1.0, 0, 0]), [0, 1, 0])


def test_apply_matches_homogeneous_oracle():
    rng = np.random.default_rng(9)
    t = random_transform(rng)
    p = rng.normal(size=3)
    expected = apply_homogeneous(homogeneous(t.rotation, t.translation), p)
    assert np.allclose(apply(t, p), expected, atol=1e-12)


def test_pose9_roundtrip():
    rng = np.random.default_rng(10)
    t = random_transform(rng)
    back = rigid_from_pose9(pose9_from_rigid(t))
    assert np.allclose(back.rotation, t.rotation, atol=1e-9)
    assert np.allclose(back.translation, t.translation, atol=1e-9)


# --- kabsch ------------------------------------------------------------------

def test_kabsch_identity_on_equal_sets():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(8, 3))
    t = kabsch(pts, pts)
    assert np.allclose(t.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(t.translation, 0.0, atol=1e-9)


def test_kabsch_recovers_known_transform():
    rng = np.random.default_rng(13)
    pts = rng.normal(size=(12, 3))
    truth = random_transform(rng)
    t = kabsch(pts, apply(truth, pts))
    assert np.abs(t.rotation - truth.rotation).max() < 1e-9
    assert np.abs(t.translation - truth.translation).max() < 1e-9


def test_kabsch_noise_rms_bounded():
    # residual RMS stays below 3 sigma over 100 seeded trials
    sigma = 1e-3
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(20, 3))
        truth = random_transform(rng)
        noisy = apply(truth, pts) + rng.normal(0, sigma, size=pts.shape)
        t = kabsch(pts, noisy)
        rms = np.sqrt(np.mean(np.sum((apply(t, pts) - noisy) ** 2, axis=1)))
        assert rms <= 3 * sigma


def test_kabsch_weighted_ignores_zero_weight_outlier():
    rng = np.random.default_rng(14)
    pts = rng.normal(size=(10, 3))
    truth = random_transform(rng)
    dst = apply(truth, pts)
    dst[0] += 100.0  # poisoned point
    w = np.ones(10)
    w[0] = 0.0
    t = kabsch(pts, dst, weights=w)
    assert np.abs(t.rotation - truth.rotation).max() < 1e-9


def test_kabsch_degenerate_collinear():
    line = np.outer(np.arange(5, dtype=float), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateConfiguration):
        kabsch(line, line + 1.0)


def test_kabsch_never_returns_reflection():
    # mirrored targets would tempt det = -1 without the correction
    rng = np.random.default_rng(15)
    pts = rng.normal(size=(10, 3))
    mirrored = pts * np.array([1.0, 1.0, -1.0])
    t = kabsch(pts, mirrored)
    assert np.linalg.det(t.rotation) > 0


# --- projection ---------------------------------------------------------------

def make_camera(pose=None, s=1.0):
    return CameraModel(
        fx=100.0 * s, fy=100.0 * s, cx=320.0 * s, cy=240.0 * s,
        width=int(640 * s), height=int(480 * s),
        pose=pose or identity_transform(),
    )


def test_project_center():
    pix, depth, valid = project(make_camera(), np.array([0.0, 0, 1.0]))
    assert valid and abs(depth - 1.0) < 1e-12
    assert np.allclose(pix, [320.0, 240.0])


def test_project_inverse_construction():
    cam = make_camera()
    px, py, z = 411.0, 133.0, 2.5
    p = np.array([z * (px - cam.cx) / cam.fx, z * (py - cam.cy) / cam.fy, z])
    pix, depth, valid = project(cam, p)
    assert valid and np.allclose(pix, [px, py]) and abs(depth - z) < 1e-12


def test_project_matches_projection_matrix_oracle():
    rng = np.random.default_rng(16)
    pose = random_transform(rng)
    cam = make_camera(pose)
    k = cam.intrinsic_matrix()
    p = rng.normal(size=3) + np.array([0, 0, 5.0])
    h = k @ (pose.rotation @ p + pose.translation)
    pix, depth, valid = project(cam, p)
    if valid:
        assert np.allclose(pix, h[:2] / h[2], atol=1e-9)


def test_project_scale_consistency():
    rng = np.random.default_rng(17)
    pts = rng.normal(size=(50, 3)) + np.array([0, 0, 5.0])
    pix1, _, v1 = project(make_camera(), pts)
    pix2, _, v2 = project(make_camera(s=2.0), pts)
    assert np.array_equal(v1, v2)
    assert np.allclose(pix2[v1], 2.0 * pix1[v1])


def test_project_behind_camera_flagged():
    _, _, valid = project(make_camera(), np.array([0.0, 0, -1.0]))
    assert not valid
