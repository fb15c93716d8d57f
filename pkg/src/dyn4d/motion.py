"""Canonical Gaussian scene representation and the low-rank motion blend:
every foreground primitive moves by a fixed linear combination of K shared
time-varying 9-dof basis states, orthonormalized back to a rigid transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRotation, InvalidConfig
from .geometry import (
    CameraModel,
    RigidTransform,
    apply,
    rigid_from_pose9,
    rot6_to_rotation,
)


@dataclass
class GaussianPrimitive:
    """Canonical 3D Gaussian: mean/orientation at the reference time plus
    time-invariant scale, opacity and color."""

    mean0: np.ndarray  # (3,)
    orient0: np.ndarray  # (3, 3) rotation
    scale: np.ndarray  # (3,), > 0
    opacity: float  # in [0, 1]
    color: np.ndarray  # (3,), in [0, 1]
    is_foreground: bool = True

    def __post_init__(self):
        self.mean0 = np.asarray(self.mean0, dtype=float).reshape(3)
        self.orient0 = np.asarray(self.orient0, dtype=float).reshape(3, 3)
        self.scale = np.asarray(self.scale, dtype=float).reshape(3)
        self.color = np.asarray(self.color, dtype=float).reshape(3)
        if np.any(self.scale <= 0):
            raise InvalidConfig(f"scale must be positive, got {self.scale}")
        if not 0.0 <= self.opacity <= 1.0:
            raise InvalidConfig(f"opacity must be in [0,1], got {self.opacity}")
        if np.any(self.color < 0) or np.any(self.color > 1):
            raise InvalidConfig(f"color must be in [0,1]^3, got {self.color}")


@dataclass
class PosedGaussian:
    """A primitive evolved to some time: pose changes, appearance does not."""

    mean: np.ndarray
    orient: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray


@dataclass
class DiscreteMotionBases:
    """Per-frame 9-dof states for K motion bases plus the camera.

    ``timestamps`` are normalized times in [-1, 1], strictly increasing;
    ``basis_states`` is (K, T, 9) and ``camera_states`` (T, 9).
    """

    timestamps: np.ndarray
    basis_states: np.ndarray
    camera_states: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        self.basis_states = np.asarray(self.basis_states, dtype=float)
        self.camera_states = np.asarray(self.camera_states, dtype=float)
        t = len(self.timestamps)
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidConfig("timestamps must be strictly increasing")
        if self.basis_states.ndim != 3 or self.basis_states.shape[1:] != (t, 9):
            raise InvalidConfig(
                f"basis_states shape {self.basis_states.shape} != (K, {t}, 9)"
            )
        if self.camera_states.shape != (t, 9):
            raise InvalidConfig(
                f"camera_states shape {self.camera_states.shape} != ({t}, 9)"
            )
        # every stored rot6 block must be orthonormalizable
        rot6_to_rotation(self.basis_states[..., :6])
        rot6_to_rotation(self.camera_states[..., :6])

    @property
    def num_bases(self) -> int:
        return self.basis_states.shape[0]

    @property
    def num_frames(self) -> int:
        return len(self.timestamps)


@dataclass
class DynamicScene:
    """Primitives + per-foreground blend coefficients + discrete bases +
    a camera intrinsics template (its pose is set per evaluation time)."""

    primitives: list[GaussianPrimitive]
    coefficients: np.ndarray  # (num_foreground, K), rows follow foreground order
    bases: DiscreteMotionBases
    camera: CameraModel

    def __post_init__(self):
        self.coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        n_fg = sum(1 for g in self.primitives if g.is_foreground)
        if self.coefficients.shape != (n_fg, self.bases.num_bases):
            raise InvalidConfig(
                f"coefficients shape {self.coefficients.shape} != ({n_fg}, {self.bases.num_bases})"
            )

    @property
    def foreground(self) -> list[GaussianPrimitive]:
        return [g for g in self.primitives if g.is_foreground]

    @property
    def background(self) -> list[GaussianPrimitive]:
        return [g for g in self.primitives if not g.is_foreground]


@dataclass
class PosedPoints:
    """Evolved scene as flat arrays, ready for projection/splatting."""

    positions: np.ndarray  # (N, 3)
    orientations: np.ndarray  # (N, 3, 3)
    scales: np.ndarray  # (N, 3)
    opacities: np.ndarray  # (N,)
    colors: np.ndarray  # (N, 3)
    is_foreground: np.ndarray  # (N,) bool


def blend_bases(basis_states_at_t: np.ndarray, w: np.ndarray) -> RigidTransform:
    """Blend K per-basis 9-dof states with coefficients w (used as-is, no
    normalization) and orthonormalize the rot6 block to a rigid transform."""
    states = np.asarray(basis_states_at_t, dtype=float).reshape(-1, 9)
    w = np.asarray(w, dtype=float).reshape(-1)
    if states.shape[0] != w.shape[0]:
        raise InvalidConfig(f"{states.shape[0]} bases but {w.shape[0]} coefficients")
    return rigid_from_pose9(w @ states)


def evolve_primitive(g: GaussianPrimitive, t_transform: RigidTransform) -> PosedGaussian:
    """Pose a primitive: mean mapped through the transform, orientation
    premultiplied, appearance unchanged."""
    return PosedGaussian(
        mean=apply(t_transform, g.mean0),
        orient=t_transform.rotation @ g.orient0,
        scale=g.scale,
        opacity=g.opacity,
        color=g.color,
    )


def scene_at(
    scene: DynamicScene,
    basis_states_at_t: np.ndarray,
    camera_state_at_t: np.ndarray,
) -> tuple[PosedPoints, CameraModel]:
    """Evolve the whole scene to one time given per-basis and camera states.

    Foreground primitives move by their blended transform, background stays
    canonical; the returned camera carries the template intrinsics with the
    decoded pose. DegenerateRotation is re-raised with the offending
    foreground index.
    """
    states = np.asarray(basis_states_at_t, dtype=float).reshape(-1, 9)
    if states.shape[0] != scene.bases.num_bases:
        raise InvalidConfig(
            f"expected {scene.bases.num_bases} basis states, got {states.shape[0]}"
        )
    prims = scene.primitives
    n = len(prims)
    positions = np.empty((n, 3))
    orientations = np.empty((n, 3, 3))
    scales = np.stack([g.scale for g in prims]) if n else np.empty((0, 3))
    opacities = np.array([g.opacity for g in prims])
    colors = np.stack([g.color for g in prims]) if n else np.empty((0, 3))
    fg_mask = np.array([g.is_foreground for g in prims], dtype=bool)

    fg_idx = np.flatnonzero(fg_mask)
    if fg_idx.size:
        blended = scene.coefficients @ states  # (F, 9)
        try:
            rot = rot6_to_rotation(blended[:, :6])
        except DegenerateRotation as exc:
            raise DegenerateRotation(f"blended state degenerate near foreground primitives: {exc}") from exc
        means0 = np.stack([prims[i].mean0 for i in fg_idx])
        orient0 = np.stack([prims[i].orient0 for i in fg_idx])
        positions[fg_idx] = np.einsum("fij,fj->fi", rot, means0) + blended[:, 6:9]
        orientations[fg_idx] = np.einsum("fij,fjk->fik", rot, orient0)
    for i in np.flatnonzero(~fg_mask):
        positions[i] = prims[i].mean0
        orientations[i] = prims[i].orient0

    cam = scene.camera.with_pose(rigid_from_pose9(camera_state_at_t))
    posed = PosedPoints(positions, orientations, scales, opacities, colors, fg_mask)
    return posed, cam


def _track_model_positions(
    w_grid: np.ndarray, bases: DiscreteMotionBases, means0: np.ndarray
) -> np.ndarray:
    """Predicted positions (N, T, 3) for per-point coefficients (N, K)."""
    n = w_grid.shape[0]
    t = bases.num_frames
    out = np.empty((n, t, 3))
    for ti in range(t):
        blended = w_grid @ bases.basis_states[:, ti, :]  # (N, 9)
        rot = rot6_to_rotation(blended[:, :6])
        out[:, ti, :] = np.einsum("nij,nj->ni", rot, means0) + blended[:, 6:9]
    return out


def solve_coefficients(
    tracks3d: np.ndarray,
    bases: DiscreteMotionBases,
    canonical_means: np.ndarray,
    visibility: np.ndarray | None = None,
):
    """Per-point blend coefficients by least squares on track reconstruction.

    Initializes from the linear surrogate (predicted position = w-weighted
    sum of each basis transform applied to the canonical mean; exact in the
    translation channels) and refines with up to 10 Gauss-Newton steps on the
    true orthonormalized objective. Rank-deficient design matrices are not an
    error: the minimum-norm solution is returned and flagged.

    Returns ``(coefficients (N, K), rank_deficient (N,) bool)``.
    """
    tracks = np.asarray(tracks3d, dtype=float)
    means0 = np.asarray(canonical_means, dtype=float).reshape(-1, 3)
    n, t = tracks.shape[0], tracks.shape[1]
    k = bases.num_bases
    if t != bases.num_frames:
        raise InvalidConfig(f"tracks have {t} frames, bases {bases.num_frames}")
    if k > 9 * t:
        raise InvalidConfig(f"K={k} exceeds 9*T_obs={9 * t}")
    vis = (
        np.ones((n, t), dtype=bool)
        if visibility is None
        else np.asarray(visibility, dtype=bool).reshape(n, t)
    )
    if np.any(vis.sum(axis=1) < 1):
        raise InvalidConfig("every point needs at least one observed frame")

    # linear surrogate design: column k = basis k's transform applied to mean0
    per_basis = np.empty((n, t, k, 3))
    for ki in range(k):
        rot = rot6_to_rotation(bases.basis_states[ki, :, :6])  # (T, 3, 3)
        per_basis[:, :, ki, :] = (
            np.einsum("tij,nj->nti", rot, means0) + bases.basis_states[ki, :, 6:9]
        )

    w_grid = np.zeros((n, k))
    rank_flags = np.zeros(n, dtype=bool)
    for i in range(n):
        rows = np.flatnonzero(vis[i])
        a = per_basis[i, rows].transpose(0, 2, 1).reshape(-1, k)
        y = tracks[i, rows].reshape(-1)
        sol, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
        w_grid[i] = sol
        rank_flags[i] = rank < k

    # Gauss-Newton on the true objective (orthonormalized rotation blend)
    h = 1e-6
    resid = _track_model_positions(w_grid, bases, means0) - tracks
    resid[~vis] = 0.0
    cost = np.einsum("ntc,ntc->n", resid, resid)
    for _ in range(10):
        jac = np.empty((n, t, 3, k))
        for ki in range(k):
            dw = np.zeros((n, k))
            dw[:, ki] = h
            p_plus = _track_model_positions(w_grid + dw, bases, means0)
            p_minus = _track_model_positions(w_grid - dw, bases, means0)
            jac[:, :, :, ki] = (p_plus - p_minus) / (2 * h)
        improved = False
        for i in range(n):
            if cost[i] < 1e-24:
                continue
            rows = np.flatnonzero(vis[i])
            j_i = jac[i, rows].reshape(-1, k)
            r_i = resid[i, rows].reshape(-1)
            step, _, _, _ = np.linalg.lstsq(j_i, r_i, rcond=None)
            w_new = w_grid[i] - step
            r_new = (
                _track_model_positions(w_new[None], bases, means0[i : i + 1])[0] - tracks[i]
            )
            r_new[~vis[i]] = 0.0
            c_new = float(np.sum(r_new * r_new))
            if c_new < cost[i] - 1e-16:
                w_grid[i] = w_new
                cost[i] = c_new
                resid[i] = r_new
                improved = True
        if not improved:
            break
    return w_grid, rank_flags
