import numpy as np
import pytest

from dyn4d.errors import InvalidSpec
from dyn4d.geometry import apply, project
from dyn4d.synthetic import (
    AnalyticSceneSpec,
    CircularOrbit,
    ConstantVelocity,
    Dolly,
    Pan,
    Projectile,
    RigidTumble,
    StaticCamera,
    apply_camera_move,
    generate_scene,
    sample_discrete,
    spec_from_dict,
    spec_to_dict,
)


def test_constant_velocity_closed_form():
    spec = AnalyticSceneSpec(motion=ConstantVelocity((1.0, 0, 0)), time_span=(0.0, 1.0), seed=1)
    world = generate_scene(spec)
    t = world.transform_at(0.0)  # t_norm=0 -> 0.5 s
    assert np.allclose(apply(t, [0.0, 0, 0]), [0.5, 0, 0])


def test_projectile_height():
    spec = AnalyticSceneSpec(motion=Projectile((1.0, 5.0, 0.0), 9.8), time_span=(0.0, 1.0), seed=1)
    world = generate_scene(spec)
    t = world.transform_at(1.0)  # 1 second
    pos = apply(t, [0.0, 0, 0])
    assert abs(pos[1] - (5.0 * 1.0 - 4.9 * 1.0**2)) < 1e-12


def test_rigid_tumble_half_turn():
    spec = AnalyticSceneSpec(
        motion=RigidTumble((0, 0, 1.0), np.pi, (0, 0, 0)), time_span=(0.0, 1.0), seed=1
    )
    world = generate_scene(spec)
    t = world.transform_at(1.0)
    assert np.allclose(t.rotation, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)


def test_circular_orbit_quarter_period_past_end():
    omega = np.pi / 2  # quarter turn per second
    spec = AnalyticSceneSpec(
        motion=CircularOrbit(radius=1.0, angular_velocity=omega), time_span=(0.0, 2.0), seed=2
    )
    world = generate_scene(spec)
    # one quarter period (1 s) past t_norm=1 equals t_norm=2 under this span
    fg_end, _ = world.ground_truth_at(1.0)
    fg_past, _ = world.ground_truth_at(2.0)
    rot90_y = np.array([[0.0, 0, 1], [0, 1, 0], [-1.0, 0, 0]])
    assert np.abs(fg_past - fg_end @ rot90_y.T).max() < 1e-9


def test_sampling_noise_free_matches_ground_truth():
    spec = AnalyticSceneSpec(motion=ConstantVelocity((0.5, 0.2, 0)), seed=3)
    world = generate_scene(spec)
    obs = sample_discrete(world, 7, 0.0, seed=0, with_depth_maps=False)
    for ti, t in enumerate(obs.timestamps):
        gt, _ = world.ground_truth_at(t)
        assert np.abs(obs.tracks3d[:, ti, :] - gt).max() < 1e-12


def test_sampling_two_frames_endpoints():
    world = generate_scene(AnalyticSceneSpec(seed=4))
    obs = sample_discrete(world, 2, with_depth_maps=False)
    assert np.allclose(obs.timestamps, [-1.0, 1.0])


def test_sampling_noise_std_monte_carlo():
    spec = AnalyticSceneSpec(num_foreground=1000, seed=5)
    world = generate_scene(spec)
    sigma = 1e-3
    obs = sample_discrete(world, 3, sigma, seed=9, with_depth_maps=False)
    clean = sample_discrete(world, 3, 0.0, seed=9, with_depth_maps=False)
    noise = obs.tracks3d - clean.tracks3d
    std = noise.std()
    assert 0.8 * sigma <= std <= 1.2 * sigma


def test_sampling_requires_two_frames():
    world = generate_scene(AnalyticSceneSpec(seed=6))
    with pytest.raises(InvalidSpec):
        sample_discrete(world, 1)


def test_determinism_same_spec_same_bits():
    spec = AnalyticSceneSpec(motion=RigidTumble(), num_foreground=30, seed=7)
    w1, w2 = generate_scene(spec), generate_scene(spec)
    assert np.array_equal(w1.fg_canonical, w2.fg_canonical)
    assert np.array_equal(w1.bg_points, w2.bg_points)
    o1 = sample_discrete(w1, 6, 1e-3, seed=3, with_depth_maps=False)
    o2 = sample_discrete(w2, 6, 1e-3, seed=3, with_depth_maps=False)
    assert np.array_equal(o1.tracks3d, o2.tracks3d)
    assert np.array_equal(o1.camera_pose9, o2.camera_pose9)


def test_projectile_finite_difference_acceleration():
    g = 9.8
    spec = AnalyticSceneSpec(
        motion=Projectile((1.0, 5.0, 0.0), g), num_foreground=5, time_span=(0.0, 1.0), seed=8
    )
    world = generate_scene(spec)
    obs = sample_discrete(world, 41, 0.0, with_depth_maps=False)
    dt_sec = 1.0 / 40.0
    acc = (obs.tracks3d[:, 2:, :] - 2 * obs.tracks3d[:, 1:-1, :] + obs.tracks3d[:, :-2, :]) / dt_sec**2
    expected = np.array([0.0, -g, 0.0])
    assert np.abs(acc - expected).max() < 1e-6  # exact up to rounding: motion is quadratic


def test_foreground_rigidity_over_time():
    spec = AnalyticSceneSpec(motion=RigidTumble((0.3, 1.0, 0.2), 2.0, (0.1, 0, 0)), seed=9)
    world = generate_scene(spec)
    obs = sample_discrete(world, 5, 0.0, with_depth_maps=False)
    d0 = None
    for ti in range(5):
        pts = obs.tracks3d[:, ti, :]
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        if d0 is None:
            d0 = d
        else:
            assert np.abs(d - d0).max() < 1e-9


def test_ground_truth_linear_continuation_beyond_span():
    spec = AnalyticSceneSpec(motion=ConstantVelocity((1.0, 0, 0)), time_span=(0.0, 2.0), seed=10)
    world = generate_scene(spec)
    fg1, _ = world.ground_truth_at(1.0)
    fg11, _ = world.ground_truth_at(1.1)
    # 0.1 t_norm = 0.1 s at this span; velocity 1 along x
    assert np.abs((fg11 - fg1) - np.array([0.1, 0, 0])).max() < 1e-12


def test_depth_maps_cover_projected_points():
    spec = AnalyticSceneSpec(num_foreground=20, num_background=5, seed=11)
    world = generate_scene(spec)
    obs = sample_discrete(world, 2, 0.0, with_depth_maps=True)
    finite = np.isfinite(obs.depth_maps[0])
    assert finite.any()
    pix, _, valid = project(obs.camera_models[0], obs.tracks3d[:, 0, :])
    inside = valid & (pix[:, 0] >= 0) & (pix[:, 0] < 160) & (pix[:, 1] >= 0) & (pix[:, 1] < 120)
    assert inside.any()
    iy = np.rint(pix[inside, 1]).astype(int)
    ix = np.rint(pix[inside, 0]).astype(int)
    assert np.isfinite(obs.depth_maps[0][iy, ix]).all()


def test_spec_dict_roundtrip():
    spec = AnalyticSceneSpec(
        motion=RigidTumble((0.0, 1.0, 0.0), 1.5, (0.2, 0, 0)),
        camera_path=Dolly((0, 0, -1.0), 0.25),
        num_foreground=12,
        num_background=7,
        time_span=(0.5, 2.5),
        seed=13,
    )
    back = spec_from_dict(spec_to_dict(spec))
    assert back == spec
    w1, w2 = generate_scene(spec), generate_scene(back)
    assert np.array_equal(w1.fg_canonical, w2.fg_canonical)


def test_camera_paths_move_as_described():
    spec_d = AnalyticSceneSpec(camera_path=Dolly((0, 0, -1.0), 1.0), time_span=(0.0, 1.0), seed=14)
    world = generate_scene(spec_d)
    c0 = -world.camera_pose_at(-1.0).rotation.T @ world.camera_pose_at(-1.0).translation
    c1 = -world.camera_pose_at(1.0).rotation.T @ world.camera_pose_at(1.0).translation
    assert np.allclose(c1 - c0, [0, 0, -1.0])

    spec_p = AnalyticSceneSpec(camera_path=Pan(0.2), time_span=(0.0, 1.0), seed=15)
    world_p = generate_scene(spec_p)
    p0 = world_p.camera_pose_at(-1.0)
    p1 = world_p.camera_pose_at(1.0)
    assert not np.allclose(p0.rotation, p1.rotation)
    # pure pan keeps the camera center fixed
    assert np.allclose(-p0.rotation.T @ p0.translation, -p1.rotation.T @ p1.translation)


def test_apply_camera_move_semantics():
    spec = AnalyticSceneSpec(camera_path=StaticCamera(), seed=16)
    world = generate_scene(spec)
    pose = world.camera_pose_at(0.0)
    center = -pose.rotation.T @ pose.translation
    out = apply_camera_move(pose, "dolly-out", 0.7)
    c_out = -out.rotation.T @ out.translation
    assert np.allclose(c_out - center, -0.7 * pose.rotation[2, :])
    pan = apply_camera_move(pose, "pan-right", 0.3)
    assert np.allclose(-pan.rotation.T @ pan.translation, center, atol=1e-12)
    ident = apply_camera_move(pose, "identity", 0.5)
    assert np.allclose(ident.rotation, pose.rotation)
    with pytest.raises(InvalidSpec):
        apply_camera_move(pose, "zoom", 1.0)


def test_invalid_spec_rejected():
    with pytest.raises(InvalidSpec):
        AnalyticSceneSpec(time_span=(1.0, 1.0))
    with pytest.raises(InvalidSpec):
        AnalyticSceneSpec(num_foreground=0)
