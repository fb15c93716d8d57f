"""Rotation and rigid-transform algebra, the 9-dof pose encoding, weighted
Procrustes alignment and pinhole projection.

Conventions used throughout the package:

* rotations are 3x3 orthonormal matrices with det = +1
* a rigid transform maps points as ``R @ p + t``
* camera poses are world->camera; +z is the viewing direction
* the 9-vector pose layout is ``[rot6 | trans]`` where ``rot6`` stacks the
  first two columns of the rotation matrix and ``trans`` is the translation
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateConfiguration, DegenerateRotation, InvalidConfig

_EPS_PARALLEL = 1e-12


def rot6_to_rotation(rot6: np.ndarray) -> np.ndarray:
    """Map a 6D rotation encoding to a rotation matrix by Gram-Schmidt.

    Accepts a single ``(6,)`` vector or a batch ``(..., 6)``; returns
    ``(3, 3)`` or ``(..., 3, 3)``. The first embedded 3-vector is normalized,
    the second is orthogonalized against it, the third column is their cross
    product, so the result is orthonormal with det +1 regardless of the
    input scale.

    Raises DegenerateRotation when the first vector is near zero or the two
    vectors are parallel.
    """
    v = np.asarray(rot6, dtype=float)
    if v.shape[-1] != 6:
        raise InvalidConfig(f"rot6 must have trailing dimension 6, got {v.shape}")
    single = v.ndim == 1
    v = np.atleast_2d(v)
    a, b = v[..., 0:3], v[..., 3:6]
    na = np.linalg.norm(a, axis=-1)
    if np.any(na <= _EPS_PARALLEL):
        idx = int(np.argmax(na <= _EPS_PARALLEL))
        raise DegenerateRotation(f"rot6 first vector near zero (entry {idx})")
    u1 = a / na[..., None]
    b_perp = b - np.sum(u1 * b, axis=-1, keepdims=True) * u1
    nb = np.linalg.norm(b_perp, axis=-1)
    scale = np.maximum(np.linalg.norm(b, axis=-1), 1.0)
    if np.any(nb <= _EPS_PARALLEL * scale):
        idx = int(np.argmax(nb <= _EPS_PARALLEL * scale))
        raise DegenerateRotation(f"rot6 vectors parallel within 1e-12 (entry {idx})")
    u2 = b_perp / nb[..., None]
    u3 = np.cross(u1, u2)
    rot = np.stack([u1, u2, u3], axis=-1)
    return rot[0] if single else rot


def rotation_to_rot6(rotation: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rot6_to_rotation` on valid rotations (first two columns)."""
    r = np.asarray(rotation, dtype=float)
    return np.concatenate([r[..., :, 0], r[..., :, 1]], axis=-1)


def axis_angle_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix for a rotation of `angle` radians about `axis` (Rodrigues)."""
    u = np.asarray(axis, dtype=float)
    n = np.linalg.norm(u)
    if n <= _EPS_PARALLEL:
        raise DegenerateRotation("rotation axis near zero")
    u = u / n
    k = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_angle(rotation: np.ndarray) -> float:
    """Rotation angle in radians of a rotation matrix."""
    c = 0.5 * (np.trace(np.asarray(rotation, dtype=float)) - 1.0)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element; maps points as ``rotation @ p + translation``."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))


def identity_transform() -> RigidTransform:
    return RigidTransform(np.eye(3), np.zeros(3))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform that applies b first, then a: compose(a, b)(x) = a(b(x))."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def apply(t: RigidTransform, points: np.ndarray) -> np.ndarray:
    """Apply a rigid transform to one point ``(3,)`` or a batch ``(N, 3)``."""
    p = np.asarray(points, dtype=float)
    return p @ t.rotation.T + t.translation


def pose9_from_rigid(t: RigidTransform) -> np.ndarray:
    """Encode a rigid transform as the 9-vector ``[rot6 | trans]``."""
    return np.concatenate([rotation_to_rot6(t.rotation), t.translation])


def rigid_from_pose9(pose9: np.ndarray) -> RigidTransform:
    """Decode a 9-vector pose; the rot6 block is orthonormalized."""
    v = np.asarray(pose9, dtype=float).reshape(9)
    return RigidTransform(rot6_to_rotation(v[:6]), v[6:9])


def kabsch(src: np.ndarray, dst: np.ndarray, weights: np.ndarray | None = None) -> RigidTransform:
    """Weighted least-squares rigid alignment T minimizing sum w_i ||T(src_i) - dst_i||^2.

    Reflections are corrected by flipping the sign of the smallest singular
    vector, so the result is always a proper rotation. Needs at least 3
    non-collinear points; raises DegenerateConfiguration otherwise.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidConfig(f"src/dst shape mismatch: {src.shape} vs {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateConfiguration(f"kabsch needs >= 3 points, got {n}")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float).reshape(n)
        if np.any(w < 0):
            raise InvalidConfig("kabsch weights must be non-negative")
    wsum = w.sum()
    if wsum <= 0:
        raise InvalidConfig("kabsch weights must sum to > 0")
    c_src = (w @ src) / wsum
    c_dst = (w @ dst) / wsum
    h = (w[:, None] * (src - c_src)).T @ (dst - c_dst)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-9 * max(s[0], 1e-12):
        raise DegenerateConfiguration("points are collinear or coincident (covariance rank < 2)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, c_dst - rot @ c_src)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics in pixels plus a world->camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidConfig("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidConfig("principal point must lie inside the image")

    def with_pose(self, pose: RigidTransform) -> "CameraModel":
        return replace(self, pose=pose)

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.pose.rotation.T @ self.pose.translation


def project(cam: CameraModel, points: np.ndarray):
    """Project world points through a pinhole camera.

    Returns ``(pixels, depths, valid)`` where ``valid`` is False for points
    at or behind the camera plane (depth <= 1e-6); their pixel values are not
    meaningful and callers are expected to filter on the flag.
    """
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    p_cam = apply(cam.pose, p)
    depth = p_cam[:, 2]
    valid = depth > 1e-6
    z = np.where(valid, depth, 1.0)
    pix = np.stack([cam.fx * p_cam[:, 0] / z + cam.cx, cam.fy * p_cam[:, 1] / z + cam.cy], axis=-1)
    if single:
        return pix[0], float(depth[0]), bool(valid[0])
    return pix, depth, valid
