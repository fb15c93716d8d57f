"""Clamped B-spline curves over normalized time for K motion bases plus the
camera, with linear extrapolation outside the observed span.

Time handling: callers work in normalized time t_norm, where the observed
span is [-1, 1]. Evaluation maps t_norm to the spline parameter via
``t01 = clip(0.5 * t_norm + 0.5, 1e-6, 1 - 1e-6)``; outside [-1, 1] the curve
is continued linearly using one-sided finite-difference endpoint slopes with
step 2/(T-1), T being the number of observed frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig

TIME_CLIP = 1e-6


@dataclass(frozen=True)
class SplineConfig:
    """Shape of the dynamics model: M control points, degree p, K motion bases."""

    num_control: int = 8
    degree: int = 3
    num_bases: int = 10

    def __post_init__(self):
        if self.degree < 1:
            raise InvalidConfig(f"degree must be >= 1, got {self.degree}")
        if self.num_control < self.degree + 1:
            raise InvalidConfig(
                f"need num_control >= degree+1, got M={self.num_control}, p={self.degree}"
            )
        if self.num_bases < 1:
            raise InvalidConfig(f"num_bases must be >= 1, got {self.num_bases}")


def open_uniform_knots(num_control: int, degree: int) -> np.ndarray:
    """Clamped knot vector of length M+p+1 on [0,1] with uniform interior knots."""
    if num_control < degree + 1:
        raise InvalidConfig(
            f"need num_control >= degree+1, got M={num_control}, p={degree}"
        )
    interior = np.arange(1, num_control - degree) / (num_control - degree)
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def map_time(t_norm) -> np.ndarray:
    """Affine map from normalized time to the spline parameter, clipped to (0,1)."""
    t = np.asarray(t_norm, dtype=float)
    return np.clip(0.5 * t + 0.5, TIME_CLIP, 1.0 - TIME_CLIP)


def bspline_basis(t01, knots: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate all M basis functions at the given parameters (Cox-de Boor).

    `t01` may be a scalar or a 1-D array strictly inside (0, 1); returns
    ``(M,)`` or ``(B, M)``. Repeated knots use the 0/0 := 0 convention.
    """
    knots = np.asarray(knots, dtype=float)
    t = np.asarray(t01, dtype=float)
    single = t.ndim == 0
    t = np.atleast_1d(t)[:, None]
    # degree 0: indicator of the containing half-open span
    n = ((knots[:-1] <= t) & (t < knots[1:])).astype(float)
    for p in range(1, degree + 1):
        cols = len(knots) - 1 - p
        out = np.zeros((t.shape[0], cols))
        for j in range(cols):
            d1 = knots[j + p] - knots[j]
            d2 = knots[j + p + 1] - knots[j + 1]
            if d1 > 0:
                out[:, j] += (t[:, 0] - knots[j]) / d1 * n[:, j]
            if d2 > 0:
                out[:, j] += (knots[j + p + 1] - t[:, 0]) / d2 * n[:, j + 1]
        n = out
    return n[0] if single else n


def greville_abscissae(knots: np.ndarray, degree: int) -> np.ndarray:
    """Knot averages; control points placed on a line over these reproduce the line."""
    m = len(knots) - degree - 1
    return np.array([knots[j + 1 : j + degree + 1].mean() for j in range(m)])


def derivative_operator(knots: np.ndarray, degree: int):
    """Linear map from control points to derivative control points.

    Returns ``(D, trimmed_knots)`` with D of shape (M-1, M); the derivative
    curve has degree p-1 on the trimmed knot vector.
    """
    m = len(knots) - degree - 1
    d = np.zeros((m - 1, m))
    for j in range(m - 1):
        denom = knots[j + degree + 1] - knots[j + 1]
        if denom > 0:
            c = degree / denom
            d[j, j] = -c
            d[j, j + 1] = c
    return d, knots[1:-1]


def second_derivative_design(knots: np.ndarray, degree: int, t01_grid: np.ndarray) -> np.ndarray:
    """Matrix S with S @ ctrl = d^2 curve / d t01^2 sampled on the grid; (G, M)."""
    if degree < 2:
        raise InvalidConfig("second derivative needs degree >= 2")
    d1, k1 = derivative_operator(knots, degree)
    d2, k2 = derivative_operator(k1, degree - 1)
    basis = bspline_basis(np.asarray(t01_grid, dtype=float), k2, degree - 2)
    return np.atleast_2d(basis) @ (d2 @ d1)


@dataclass
class MotionSpline:
    """B-spline trajectory model for K motion bases and the camera.

    ``motion_ctrl`` has shape (K, 9, M) and ``camera_ctrl`` (1, 9, M); each of
    the 9 channels is an independent scalar spline sharing the knot vector.
    ``obs_count`` is the number of observed frames the model was built from
    and sets the finite-difference step for extrapolation slopes.
    """

    config: SplineConfig
    motion_ctrl: np.ndarray
    camera_ctrl: np.ndarray
    obs_count: int
    knots: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.knots is None:
            self.knots = open_uniform_knots(self.config.num_control, self.config.degree)
        self.motion_ctrl = np.asarray(self.motion_ctrl, dtype=float)
        self.camera_ctrl = np.asarray(self.camera_ctrl, dtype=float)
        k, m = self.config.num_bases, self.config.num_control
        if self.motion_ctrl.shape != (k, 9, m):
            raise InvalidConfig(
                f"motion_ctrl shape {self.motion_ctrl.shape} != {(k, 9, m)}"
            )
        if self.camera_ctrl.shape != (1, 9, m):
            raise InvalidConfig(
                f"camera_ctrl shape {self.camera_ctrl.shape} != {(1, 9, m)}"
            )
        if not (np.isfinite(self.motion_ctrl).all() and np.isfinite(self.camera_ctrl).all()):
            raise InvalidConfig("control grids must be finite")
        if len(self.knots) != m + self.config.degree + 1:
            raise InvalidConfig("knot vector length inconsistent with config")

    @classmethod
    def zeros(cls, config: SplineConfig, obs_count: int) -> "MotionSpline":
        return cls(
            config=config,
            motion_ctrl=np.zeros((config.num_bases, 9, config.num_control)),
            camera_ctrl=np.zeros((1, 9, config.num_control)),
            obs_count=obs_count,
        )

    def eval01(self, t01):
        """Evaluate at raw spline parameters in (0,1); no time mapping."""
        basis = np.atleast_2d(bspline_basis(t01, self.knots, self.config.degree))
        motion = np.einsum("kcm,bm->kbc", self.motion_ctrl, basis)
        camera = np.einsum("cm,bm->bc", self.camera_ctrl[0], basis)
        return motion, camera

    def forward(self, t_norm):
        """Evaluate at normalized times; returns (motion (K,B,9), camera (B,9))."""
        t = np.atleast_1d(np.asarray(t_norm, dtype=float))
        return self.eval01(map_time(t))

    def endpoint_slopes(self):
        """Per-channel one-sided slopes at t_norm = -1 and +1.

        Returns ``((sl_mot, sl_cam), (sr_mot, sr_cam))`` with shapes (K, 9)
        and (9,), in normalized-time units.
        """
        if self.obs_count < 2:
            raise InvalidConfig("endpoint slopes need obs_count >= 2")
        dt = 2.0 / (self.obs_count - 1)
        motion, camera = self.forward(np.array([-1.0, -1.0 + dt, 1.0 - dt, 1.0]))
        sl_mot = (motion[:, 1] - motion[:, 0]) / dt
        sr_mot = (motion[:, 3] - motion[:, 2]) / dt
        sl_cam = (camera[1] - camera[0]) / dt
        sr_cam = (camera[3] - camera[2]) / dt
        return (sl_mot, sl_cam), (sr_mot, sr_cam)

    def forward_extrap(self, t_norm):
        """Like :meth:`forward` but linear beyond [-1, 1] using endpoint slopes."""
        t = np.atleast_1d(np.asarray(t_norm, dtype=float))
        t_clamp = np.clip(t, -1.0, 1.0)
        motion, camera = self.forward(t_clamp)
        outside = t != t_clamp
        if np.any(outside):
            (sl_mot, sl_cam), (sr_mot, sr_cam) = self.endpoint_slopes()
            dt = t - t_clamp  # negative on the left side, positive on the right
            left = t < -1.0
            slope_mot = np.where(left[None, :, None], sl_mot[:, None, :], sr_mot[:, None, :])
            slope_cam = np.where(left[:, None], sl_cam[None, :], sr_cam[None, :])
            motion = motion + dt[None, :, None] * slope_mot
            camera = camera + dt[:, None] * slope_cam
        return motion, camera

    def second_derivative(self, t01_grid):
        """Curvature d^2/dt01^2 on a grid in (0,1); ((K,G,9), (G,9))."""
        s = second_derivative_design(self.knots, self.config.degree, t01_grid)
        motion = np.einsum("kcm,gm->kgc", self.motion_ctrl, s)
        camera = np.einsum("cm,gm->gc", self.camera_ctrl[0], s)
        return motion, camera
