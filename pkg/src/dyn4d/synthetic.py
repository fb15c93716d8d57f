"""Analytic ground-truth worlds: closed-form rigid foreground trajectories
and camera paths, sampled into discrete noisy observations, with an exact
oracle at any continuous time. These stand in for a reconstruction front-end
so every downstream stage can be verified against known truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .geometry import (
    CameraModel,
    RigidTransform,
    axis_angle_rotation,
    identity_transform,
    pose9_from_rigid,
)
from .motion import DiscreteMotionBases, DynamicScene, GaussianPrimitive
from .scaffold import splat

_Y_UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class ConstantVelocity:
    velocity: tuple = (1.0, 0.0, 0.0)
    kind: str = field(default="constant_velocity", init=False)


@dataclass(frozen=True)
class Projectile:
    v0: tuple = (1.0, 5.0, 0.0)
    gravity: float = 9.8
    kind: str = field(default="projectile", init=False)


@dataclass(frozen=True)
class CircularOrbit:
    """Rigid rotation about the +y axis through the origin; foreground points
    are seeded near (radius, 0, 0)."""

    radius: float = 1.0
    angular_velocity: float = 1.0
    kind: str = field(default="circular_orbit", init=False)


@dataclass(frozen=True)
class RigidTumble:
    axis: tuple = (0.0, 0.0, 1.0)
    angular_velocity: float = 1.0
    linear_velocity: tuple = (0.0, 0.0, 0.0)
    kind: str = field(default="rigid_tumble", init=False)


@dataclass(frozen=True)
class StaticCamera:
    kind: str = field(default="static", init=False)


@dataclass(frozen=True)
class Dolly:
    direction: tuple = (0.0, 0.0, -1.0)
    speed: float = 0.5
    kind: str = field(default="dolly", init=False)


@dataclass(frozen=True)
class Pan:
    rate: float = 0.1  # rad/s about the camera's vertical axis
    kind: str = field(default="pan", init=False)


@dataclass(frozen=True)
class Tilt:
    rate: float = 0.1  # rad/s about the camera's horizontal axis
    kind: str = field(default="tilt", init=False)


@dataclass(frozen=True)
class AnalyticSceneSpec:
    motion: object = ConstantVelocity()
    camera_path: object = StaticCamera()
    num_foreground: int = 80
    num_background: int = 40
    time_span: tuple = (0.0, 1.0)
    seed: int = 0
    # practical defaults not fixed by the data model
    image_width: int = 160
    image_height: int = 120
    focal: float = 120.0
    camera_distance: float = 5.0

    def __post_init__(self):
        if self.time_span[1] <= self.time_span[0]:
            raise InvalidSpec(f"time_span must increase, got {self.time_span}")
        if self.num_foreground < 1 or self.num_background < 1:
            raise InvalidSpec("num_foreground and num_background must be >= 1")


@dataclass
class SampledObservation:
    """Discrete sampling of an analytic scene at uniform normalized times."""

    timestamps: np.ndarray  # (T,), first -1, last +1
    tracks3d: np.ndarray  # (N_fg, T, 3), noisy
    camera_models: list  # per-frame CameraModel, exact
    camera_pose9: np.ndarray  # (T, 9), exact
    depth_maps: np.ndarray  # (T, H, W)
    noise_sigma: float


class AnalyticScene:
    """Generated world plus its exact transform/camera closures."""

    def __init__(self, spec, scene, fg_canonical, bg_points):
        self.spec = spec
        self.scene = scene
        self.fg_canonical = fg_canonical  # (N_fg, 3) at t_start
        self.bg_points = bg_points

    # -- time conventions -------------------------------------------------
    def seconds(self, t_norm: float) -> float:
        t0, t1 = self.spec.time_span
        return t0 + (float(t_norm) + 1.0) * 0.5 * (t1 - t0)

    # -- closed-form closures ---------------------------------------------
    def transform_at(self, t_norm: float) -> RigidTransform:
        """Exact body transform from the canonical frame to time t_norm."""
        dt = self.seconds(t_norm) - self.spec.time_span[0]
        m = self.spec.motion
        if isinstance(m, ConstantVelocity):
            return RigidTransform(np.eye(3), np.asarray(m.velocity, float) * dt)
        if isinstance(m, Projectile):
            tr = np.asarray(m.v0, float) * dt + 0.5 * dt * dt * np.array([0.0, -m.gravity, 0.0])
            return RigidTransform(np.eye(3), tr)
        if isinstance(m, CircularOrbit):
            return RigidTransform(axis_angle_rotation(_Y_UP, m.angular_velocity * dt), np.zeros(3))
        if isinstance(m, RigidTumble):
            rot = axis_angle_rotation(np.asarray(m.axis, float), m.angular_velocity * dt)
            return RigidTransform(rot, np.asarray(m.linear_velocity, float) * dt)
        raise InvalidSpec(f"unknown motion kind {m!r}")

    def camera_pose_at(self, t_norm: float) -> RigidTransform:
        """Exact world->camera pose at time t_norm."""
        dt = self.seconds(t_norm) - self.spec.time_span[0]
        center0 = np.array([0.0, 0.0, -self.spec.camera_distance])
        path = self.spec.camera_path
        if isinstance(path, StaticCamera):
            return RigidTransform(np.eye(3), -center0)
        if isinstance(path, Dolly):
            center = center0 + np.asarray(path.direction, float) * path.speed * dt
            return RigidTransform(np.eye(3), -center)
        if isinstance(path, Pan):
            cam_to_world = axis_angle_rotation(_Y_UP, path.rate * dt)
        elif isinstance(path, Tilt):
            cam_to_world = axis_angle_rotation(np.array([1.0, 0.0, 0.0]), path.rate * dt)
        else:
            raise InvalidSpec(f"unknown camera path {path!r}")
        rot = cam_to_world.T
        return RigidTransform(rot, -rot @ center0)

    def ground_truth_at(self, t_norm: float):
        """Exact foreground positions and camera at any real t_norm."""
        t = self.transform_at(t_norm)
        fg = self.fg_canonical @ t.rotation.T + t.translation
        cam = self.scene.camera.with_pose(self.camera_pose_at(t_norm))
        return fg, cam

    def discrete_bases(self, timestamps: np.ndarray) -> DiscreteMotionBases:
        """Exact K=1 motion bases + camera states at the given times."""
        ts = np.asarray(timestamps, dtype=float)
        basis = np.stack([pose9_from_rigid(self.transform_at(t)) for t in ts])
        camera = np.stack([pose9_from_rigid(self.camera_pose_at(t)) for t in ts])
        return DiscreteMotionBases(ts, basis[None, :, :], camera)


def generate_scene(spec: AnalyticSceneSpec) -> AnalyticScene:
    """Deterministically build a world from its spec.

    Background points are uniform in a box around the origin; foreground
    points are rigidly attached to the analytic body (seeded in a half-unit
    box at the body's canonical location).
    """
    rng = np.random.default_rng(spec.seed)
    if isinstance(spec.motion, CircularOrbit):
        fg_center = np.array([spec.motion.radius, 0.0, 0.0])
    else:
        fg_center = np.zeros(3)
    fg = fg_center + rng.uniform(-0.5, 0.5, size=(spec.num_foreground, 3))
    bg = rng.uniform(-2.0, 2.0, size=(spec.num_background, 3))

    primitives = []
    fg_colors = rng.uniform(0.2, 1.0, size=(spec.num_foreground, 3))
    bg_colors = rng.uniform(0.2, 1.0, size=(spec.num_background, 3))
    for i in range(spec.num_foreground):
        primitives.append(
            GaussianPrimitive(fg[i], np.eye(3), np.full(3, 0.02), 1.0, fg_colors[i], True)
        )
    for i in range(spec.num_background):
        primitives.append(
            GaussianPrimitive(bg[i], np.eye(3), np.full(3, 0.02), 1.0, bg_colors[i], False)
        )

    cam = CameraModel(
        fx=spec.focal,
        fy=spec.focal,
        cx=spec.image_width / 2.0,
        cy=spec.image_height / 2.0,
        width=spec.image_width,
        height=spec.image_height,
        pose=identity_transform(),
    )
    world = AnalyticScene(spec, None, fg, bg)
    # exact two-frame bases just to make the container valid; callers sample
    # the density they need via sample_discrete / discrete_bases
    stamps = np.array([-1.0, 1.0])
    basis = np.stack([pose9_from_rigid(world.transform_at(t)) for t in stamps])
    camera_states = np.stack([pose9_from_rigid(world.camera_pose_at(t)) for t in stamps])
    bases = DiscreteMotionBases(stamps, basis[None], camera_states)
    scene = DynamicScene(primitives, np.ones((spec.num_foreground, 1)), bases, cam)
    world.scene = scene
    return world


MOTION_KINDS = {
    "constant_velocity": ConstantVelocity,
    "projectile": Projectile,
    "circular_orbit": CircularOrbit,
    "rigid_tumble": RigidTumble,
}
CAMERA_KINDS = {"static": StaticCamera, "dolly": Dolly, "pan": Pan, "tilt": Tilt}


def spec_to_dict(spec: AnalyticSceneSpec) -> dict:
    def enc(obj):
        d = {"kind": obj.kind}
        for name, val in vars(obj).items():
            if name != "kind":
                d[name] = list(val) if isinstance(val, (tuple, list)) else val
        return d

    return {
        "motion": enc(spec.motion),
        "camera_path": enc(spec.camera_path),
        "num_foreground": spec.num_foreground,
        "num_background": spec.num_background,
        "time_span": list(spec.time_span),
        "seed": spec.seed,
        "image_width": spec.image_width,
        "image_height": spec.image_height,
        "focal": spec.focal,
        "camera_distance": spec.camera_distance,
    }


def spec_from_dict(d: dict) -> AnalyticSceneSpec:
    def dec(entry, table):
        entry = dict(entry)
        kind = entry.pop("kind")
        if kind not in table:
            raise InvalidSpec(f"unknown kind {kind!r}")
        entry = {k: tuple(v) if isinstance(v, list) else v for k, v in entry.items()}
        return table[kind](**entry)

    return AnalyticSceneSpec(
        motion=dec(d["motion"], MOTION_KINDS),
        camera_path=dec(d["camera_path"], CAMERA_KINDS),
        num_foreground=int(d["num_foreground"]),
        num_background=int(d["num_background"]),
        time_span=tuple(d["time_span"]),
        seed=int(d["seed"]),
        image_width=int(d["image_width"]),
        image_height=int(d["image_height"]),
        focal=float(d["focal"]),
        camera_distance=float(d["camera_distance"]),
    )


CAMERA_MOVES = ("identity", "dolly-out", "dolly-right", "dolly-up", "tilt-up", "pan-right")


def apply_camera_move(pose: RigidTransform, move: str, amount: float) -> RigidTransform:
    """Displace a world->camera pose by one of the canonical moves.

    Dollies translate the camera center along its own axes (out = backward
    along the optical axis, up = against the image-down y axis); tilt/pan
    rotate the optical axis by `amount` radians about the camera x/y axis.
    """
    rot, tr = pose.rotation, pose.translation
    center = -rot.T @ tr
    if move == "identity":
        return RigidTransform(rot.copy(), tr.copy())
    if move == "dolly-out":
        center = center - amount * rot[2, :]
    elif move == "dolly-right":
        center = center + amount * rot[0, :]
    elif move == "dolly-up":
        center = center - amount * rot[1, :]
    elif move == "tilt-up":
        rot = axis_angle_rotation(np.array([1.0, 0.0, 0.0]), -amount) @ rot
    elif move == "pan-right":
        rot = axis_angle_rotation(_Y_UP, -amount) @ rot
    else:
        raise InvalidSpec(f"unknown camera move {move!r}")
    return RigidTransform(rot, -rot @ center)


def sample_discrete(
    world: AnalyticScene,
    num_frames: int,
    noise_sigma: float = 0.0,
    seed: int = 0,
    with_depth_maps: bool = True,
) -> SampledObservation:
    """Sample uniform normalized timestamps; Gaussian noise goes on the 3D
    tracks only, camera poses stay exact."""
    if num_frames < 2:
        raise InvalidSpec(f"num_frames must be >= 2, got {num_frames}")
    ts = np.linspace(-1.0, 1.0, num_frames)
    rng = np.random.default_rng(seed)

    n_fg = world.fg_canonical.shape[0]
    tracks = np.empty((n_fg, num_frames, 3))
    cams = []
    pose9 = np.empty((num_frames, 9))
    cam_t = world.scene.camera
    h, w = cam_t.height, cam_t.width
    depths = np.full((num_frames, h, w), np.inf, dtype=float)
    for ti, t in enumerate(ts):
        fg, cam = world.ground_truth_at(t)
        tracks[:, ti, :] = fg
        cams.append(cam)
        pose9[ti] = pose9_from_rigid(cam.pose)
        if with_depth_maps:
            pts = np.vstack([fg, world.bg_points])
            frame = splat(pts, np.ones((len(pts), 3)), np.ones(len(pts)), cam, 1)
            depths[ti] = frame.depth
    if noise_sigma > 0:
        tracks = tracks + rng.normal(0.0, noise_sigma, size=tracks.shape)
    return SampledObservation(ts, tracks, cams, pose9, depths, float(noise_sigma))
