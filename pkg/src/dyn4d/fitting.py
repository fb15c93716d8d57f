"""Fitting the continuous dynamics model: Procrustes initialization of
discrete motion bases from 3D tracks, the hybrid data+physics objective, and
two solvers for the spline control points.

The objective is exactly quadratic in the control points, so next to the
paper-style Adam loop there is a closed-form least-squares solver that acts
as a correctness oracle for the iterative one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCluster,
    InsufficientTracks,
    InvalidConfig,
    SingularNormalEquations,
)
from .geometry import kabsch, pose9_from_rigid
from .motion import DiscreteMotionBases, solve_coefficients
from .spline import (
    MotionSpline,
    SplineConfig,
    bspline_basis,
    greville_abscissae,
    map_time,
    open_uniform_knots,
    second_derivative_design,
)

# d t01 / d t_norm = 0.5, so curvature w.r.t. normalized time picks up 0.25
_CHAIN2 = 0.25

_TRANS = slice(6, 9)
_ROT = slice(0, 6)


@dataclass(frozen=True)
class FitConfig:
    lambda_phys: float = 1e-4
    learning_rate: float = 1e-5
    epochs: int = 1000
    batch_size: int = 64
    extrap_weight: float = 4.0
    boundary_fraction: float = 0.1
    rot_toggle: bool = True
    phys_grid_size: int = 256
    solver: str = "iterative"  # iterative | closed_form | both
    warm_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lambda_phys < 0:
            raise InvalidConfig("lambda_phys must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be >= 1")
        if not 1.0 <= self.extrap_weight:
            raise InvalidConfig("extrap_weight must be >= 1")
        if not 0.0 < self.boundary_fraction < 0.5:
            raise InvalidConfig("boundary_fraction must be in (0, 0.5)")
        if self.phys_grid_size < 8:
            raise InvalidConfig("phys_grid_size must be >= 8")
        if self.solver not in ("iterative", "closed_form", "both"):
            raise InvalidConfig(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class LossBreakdown:
    data: float
    phys: float
    total: float

    @classmethod
    def from_parts(cls, data: float, phys: float, lambda_phys: float) -> "LossBreakdown":
        return cls(float(data), float(phys), float(data) + lambda_phys * float(phys))


@dataclass
class InitReport:
    cluster_assignments: np.ndarray  # (N,)
    per_frame_residuals: np.ndarray  # (K, T) RMS alignment residual
    coefficient_rank_flags: np.ndarray  # (N,) bool


@dataclass
class FitResult:
    spline: MotionSpline
    history: list
    closed_form: MotionSpline | None = None
    iterative: MotionSpline | None = None
    control_gap: float | None = None


# ---------------------------------------------------------------------------
# initialization from tracks
# ---------------------------------------------------------------------------

def _kmeans(features: np.ndarray, k: int, seed: int, iters: int = 50, max_rescues: int = 5):
    """Deterministic k-means (k-means++ seeding, Lloyd iterations).

    Empty clusters are rescued by re-seeding from the track farthest from its
    assigned centroid; after `max_rescues` rescues the run errors out."""
    n = features.shape[0]
    rng = np.random.default_rng(seed)
    centroids = np.empty((k, features.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = features[first]
    d2 = np.sum((features - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = features[int(rng.integers(n))]
        else:
            centroids[j] = features[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((features - centroids[j]) ** 2, axis=1))

    rescues = 0
    assign = np.zeros(n, dtype=int)
    for _ in range(iters):
        dist = np.sum((features[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist, axis=1)
        for j in range(k):
            members = new_assign == j
            if not np.any(members):
                rescues += 1
                if rescues > max_rescues:
                    raise EmptyCluster(
                        f"cluster {j} stayed empty after {max_rescues} rescues"
                    )
                worst = int(np.argmax(dist[np.arange(n), new_assign]))
                centroids[j] = features[worst]
                new_assign[worst] = j
            else:
                centroids[j] = features[members].mean(axis=0)
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    return assign, centroids


def init_bases_from_tracks(
    tracks3d: np.ndarray,
    timestamps: np.ndarray,
    num_bases: int,
    seed: int = 0,
    camera_states: np.ndarray | None = None,
    visibility: np.ndarray | None = None,
):
    """Discrete motion bases from 3D point tracks by cluster-then-Procrustes.

    Tracks are clustered on their concatenated displacement features; each
    cluster contributes one basis whose per-frame state is the rigid
    alignment from the cluster's frame-0 positions to its frame-t positions.
    Blend coefficients for every track are then solved against all bases.

    Returns ``(DiscreteMotionBases, coefficients (N, K), InitReport)``.
    """
    tracks = np.asarray(tracks3d, dtype=float)
    ts = np.asarray(timestamps, dtype=float)
    n, t = tracks.shape[0], tracks.shape[1]
    if n < num_bases:
        raise InsufficientTracks(f"{n} tracks but K={num_bases}")
    vis = (
        np.ones((n, t), dtype=bool)
        if visibility is None
        else np.asarray(visibility, dtype=bool).reshape(n, t)
    )

    features = (tracks - tracks[:, :1, :]).reshape(n, -1)
    assign, _ = _kmeans(features, num_bases, seed)

    basis_states = np.empty((num_bases, t, 9))
    residuals = np.zeros((num_bases, t))
    for k in range(num_bases):
        members = np.flatnonzero(assign == k)
        for ti in range(t):
            obs = members[vis[members, ti]]
            tf = kabsch(tracks[obs, 0, :], tracks[obs, ti, :])
            basis_states[k, ti] = pose9_from_rigid(tf)
            aligned = tracks[obs, 0, :] @ tf.rotation.T + tf.translation
            residuals[k, ti] = np.sqrt(np.mean(np.sum((aligned - tracks[obs, ti, :]) ** 2, axis=1)))

    if camera_states is None:
        identity_pose9 = np.array([1.0, 0, 0, 0, 1.0, 0, 0, 0, 0])
        camera_states = np.tile(identity_pose9, (t, 1))
    bases = DiscreteMotionBases(ts, basis_states, np.asarray(camera_states, dtype=float))
    coeffs, rank_flags = solve_coefficients(tracks, bases, tracks[:, 0, :], vis)
    report = InitReport(assign, residuals, rank_flags)
    return bases, coeffs, report


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def physics_grid(config: FitConfig):
    """Uniform midpoint grid on (0,1) with boundary-span upweighting."""
    g = config.phys_grid_size
    t01 = (np.arange(g) + 0.5) / g
    w = np.where(
        (t01 < config.boundary_fraction) | (t01 > 1.0 - config.boundary_fraction),
        config.extrap_weight,
        1.0,
    )
    return t01, w


def data_loss(spline: MotionSpline, obs: DiscreteMotionBases) -> float:
    """Sum of squared 9-channel differences at the observed timestamps,
    motion bases and camera jointly."""
    if np.any(obs.timestamps < -1.0) or np.any(obs.timestamps > 1.0):
        raise InvalidConfig("observed timestamps must lie in [-1, 1]")
    motion, camera = spline.forward(obs.timestamps)
    d_mot = motion - obs.basis_states
    d_cam = camera - obs.camera_states
    return float(np.sum(d_mot * d_mot) + np.sum(d_cam * d_cam))


def physics_loss(spline: MotionSpline, config: FitConfig) -> float:
    """Mean over the physics grid of weighted squared second derivatives
    (w.r.t. normalized time) of the regularized channels: all motion-basis
    translations, the camera translation and, when toggled, the camera rot6
    channels."""
    t01, w = physics_grid(config)
    mot2, cam2 = spline.second_derivative(t01)
    mot2 = _CHAIN2 * mot2
    cam2 = _CHAIN2 * cam2
    sq = np.sum(mot2[:, :, _TRANS] ** 2, axis=(0, 2)) + np.sum(cam2[:, _TRANS] ** 2, axis=1)
    if config.rot_toggle:
        sq = sq + np.sum(cam2[:, _ROT] ** 2, axis=1)
    return float(np.mean(w * sq))


def total_loss(spline: MotionSpline, obs: DiscreteMotionBases, config: FitConfig) -> LossBreakdown:
    return LossBreakdown.from_parts(data_loss(spline, obs), physics_loss(spline, config), config.lambda_phys)


def _design_matrices(spline_config: SplineConfig, obs: DiscreteMotionBases, config: FitConfig):
    """Data design N (T,M) and weighted second-derivative design Sw (G,M)
    such that phys per channel = ||Sw @ c||^2."""
    knots = open_uniform_knots(spline_config.num_control, spline_config.degree)
    n = bspline_basis(map_time(obs.timestamps), knots, spline_config.degree)
    t01, w = physics_grid(config)
    s = second_derivative_design(knots, spline_config.degree, t01)
    sw = _CHAIN2 * np.sqrt(w / len(w))[:, None] * s
    return knots, np.atleast_2d(n), sw


def _regularized_channel(is_camera: bool, channel: int, config: FitConfig) -> bool:
    if channel >= 6:
        return True
    return is_camera and config.rot_toggle


def loss_gradients(spline: MotionSpline, obs: DiscreteMotionBases, config: FitConfig):
    """Analytic gradient of the total loss w.r.t. both control grids."""
    _, n_mat, sw = _design_matrices(spline.config, obs, config)
    motion, camera = spline.forward(obs.timestamps)
    r_mot = motion - obs.basis_states
    r_cam = camera - obs.camera_states
    g_mot = 2.0 * np.einsum("ktc,tm->kcm", r_mot, n_mat)
    g_cam = 2.0 * np.einsum("tc,tm->cm", r_cam, n_mat)[None]
    p_mat = 2.0 * (sw.T @ sw)
    lam = config.lambda_phys
    g_mot[:, _TRANS, :] += lam * np.einsum("kcm,mn->kcn", spline.motion_ctrl[:, _TRANS, :], p_mat.T)
    g_cam[:, _TRANS, :] += lam * spline.camera_ctrl[:, _TRANS, :] @ p_mat.T
    if config.rot_toggle:
        g_cam[:, _ROT, :] += lam * spline.camera_ctrl[:, _ROT, :] @ p_mat.T
    return g_mot, g_cam


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def fit_closed_form(
    obs: DiscreteMotionBases, config: FitConfig, spline_config: SplineConfig
) -> MotionSpline:
    """Exact minimizer of the quadratic objective, channel by channel.

    Raises SingularNormalEquations naming the first rank-deficient channel
    (motion rot6 channels carry no physics term, so they need T_obs >= M).
    """
    _, n_mat, sw = _design_matrices(spline_config, obs, config)
    m = spline_config.num_control
    k = spline_config.num_bases
    lam = config.lambda_phys
    reg_rows = np.sqrt(lam) * sw if lam > 0 else None

    def solve_channel(y, regularized, label):
        if regularized and reg_rows is not None:
            a = np.vstack([n_mat, reg_rows])
            b = np.concatenate([y, np.zeros(reg_rows.shape[0])])
        else:
            a, b = n_mat, y
        if np.linalg.matrix_rank(a) < m:
            raise SingularNormalEquations(
                f"channel {label}: {a.shape[0]} usable rows cannot determine {m} control points"
            )
        sol, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
        return sol

    motion_ctrl = np.empty((k, 9, m))
    for ki in range(k):
        for c in range(9):
            motion_ctrl[ki, c] = solve_channel(
                obs.basis_states[ki, :, c], _regularized_channel(False, c, config), f"motion[{ki},{c}]"
            )
    camera_ctrl = np.empty((1, 9, m))
    for c in range(9):
        camera_ctrl[0, c] = solve_channel(
            obs.camera_states[:, c], _regularized_channel(True, c, config), f"camera[{c}]"
        )
    return MotionSpline(spline_config, motion_ctrl, camera_ctrl, obs.num_frames)


def _interpolation_init(obs: DiscreteMotionBases, spline_config: SplineConfig):
    """Cold-start control grids: per channel, observed values interpolated at
    the Greville abscissae (deterministic, no RNG)."""
    knots = open_uniform_knots(spline_config.num_control, spline_config.degree)
    grev = greville_abscissae(knots, spline_config.degree)
    t01 = map_time(obs.timestamps)
    k = spline_config.num_bases
    m = spline_config.num_control
    motion_ctrl = np.empty((k, 9, m))
    camera_ctrl = np.empty((1, 9, m))
    for ki in range(k):
        for c in range(9):
            motion_ctrl[ki, c] = np.interp(grev, t01, obs.basis_states[ki, :, c])
    for c in range(9):
        camera_ctrl[0, c] = np.interp(grev, t01, obs.camera_states[:, c])
    return motion_ctrl, camera_ctrl


def fit_iterative(
    obs: DiscreteMotionBases,
    config: FitConfig,
    spline_config: SplineConfig,
    init: MotionSpline | None = None,
):
    """Adam on the control points (beta1=0.9, beta2=0.999, eps=1e-8),
    minibatching the observed timestamps.

    Every batch step optimizes batch-data + lambda*physics. An epoch whose
    end-of-epoch total loss got worse is rolled back (parameters and Adam
    state) and the step size halved, so the recorded per-epoch history is
    monotone non-increasing by construction. Bit-deterministic for a fixed
    seed and config.

    Returns ``(MotionSpline, [LossBreakdown per epoch])``.
    """
    if obs.num_frames < spline_config.degree + 1:
        raise InvalidConfig(
            f"need at least degree+1={spline_config.degree + 1} observed timestamps"
        )
    _, n_mat, sw = _design_matrices(spline_config, obs, config)
    p_mat = 2.0 * (sw.T @ sw)
    lam = config.lambda_phys

    if init is not None:
        mot = init.motion_ctrl.copy()
        cam = init.camera_ctrl.copy()
    else:
        mot, cam = _interpolation_init(obs, spline_config)

    spline = MotionSpline(spline_config, mot, cam, obs.num_frames)
    mot, cam = spline.motion_ctrl, spline.camera_ctrl

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_mot, v_mot = np.zeros_like(mot), np.zeros_like(mot)
    m_cam, v_cam = np.zeros_like(cam), np.zeros_like(cam)
    step_count = 0
    lr = config.learning_rate
    rng = np.random.default_rng(config.seed)
    t_obs = obs.num_frames

    history = []
    prev = total_loss(spline, obs, config)
    for _ in range(config.epochs):
        snapshot = (mot.copy(), cam.copy(), m_mot.copy(), v_mot.copy(), m_cam.copy(), v_cam.copy(), step_count)
        order = rng.permutation(t_obs)
        for start in range(0, t_obs, config.batch_size):
            idx = order[start : start + config.batch_size]
            nb = n_mat[idx]
            motion = np.einsum("kcm,tm->ktc", mot, nb)
            camera = np.einsum("cm,tm->tc", cam[0], nb)
            g_mot = 2.0 * np.einsum("ktc,tm->kcm", motion - obs.basis_states[:, idx, :], nb)
            g_cam = 2.0 * np.einsum("tc,tm->cm", camera - obs.camera_states[idx], nb)[None]
            if lam > 0:
                g_mot[:, _TRANS, :] += lam * mot[:, _TRANS, :] @ p_mat.T
                g_cam[:, _TRANS, :] += lam * cam[:, _TRANS, :] @ p_mat.T
                if config.rot_toggle:
                    g_cam[:, _ROT, :] += lam * cam[:, _ROT, :] @ p_mat.T
            step_count += 1
            bc1 = 1.0 - beta1**step_count
            bc2 = 1.0 - beta2**step_count
            for theta, g, m_st, v_st in ((mot, g_mot, m_mot, v_mot), (cam, g_cam, m_cam, v_cam)):
                m_st *= beta1
                m_st += (1.0 - beta1) * g
                v_st *= beta2
                v_st += (1.0 - beta2) * g * g
                theta -= lr * (m_st / bc1) / (np.sqrt(v_st / bc2) + eps)
        cur = total_loss(spline, obs, config)
        if cur.total > prev.total:
            mot[...], cam[...], m_mot[...], v_mot[...], m_cam[...], v_cam[...] = snapshot[:6]
            step_count = snapshot[6]
            lr *= 0.5
            cur = prev
        history.append(cur)
        prev = cur
    return spline, history


def fit(
    obs: DiscreteMotionBases,
    config: FitConfig,
    spline_config: SplineConfig | None = None,
) -> FitResult:
    """Fit the dynamics spline to discrete observations per config.solver.

    K always comes from the observations; `spline_config` supplies M and p
    (paper defaults M=8, p=3 when omitted). Solver "both" runs the
    closed form and the iterative path and reports their maximum
    control-point discrepancy.
    """
    if spline_config is None:
        spline_config = SplineConfig(num_bases=obs.num_bases)
    elif spline_config.num_bases != obs.num_bases:
        spline_config = SplineConfig(
            spline_config.num_control, spline_config.degree, obs.num_bases
        )
    if obs.num_frames < spline_config.degree + 1:
        raise InvalidConfig(
            f"need at least degree+1={spline_config.degree + 1} observed timestamps"
        )

    if config.solver == "closed_form":
        spline = fit_closed_form(obs, config, spline_config)
        return FitResult(spline, [total_loss(spline, obs, config)], closed_form=spline)

    init = None
    closed = None
    if config.warm_start or config.solver == "both":
        closed = fit_closed_form(obs, config, spline_config)
        if config.warm_start:
            init = closed
    spline, history = fit_iterative(obs, config, spline_config, init=init)
    gap = None
    if config.solver == "both" and closed is not None:
        gap = max(
            float(np.max(np.abs(spline.motion_ctrl - closed.motion_ctrl))),
            float(np.max(np.abs(spline.camera_ctrl - closed.camera_ctrl))),
        )
    return FitResult(spline, history, closed_form=closed, iterative=spline, control_gap=gap)
