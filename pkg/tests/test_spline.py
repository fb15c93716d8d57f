import numpy as np
import pytest

from dyn4d.errors import InvalidConfig
from dyn4d.spline import (
    MotionSpline,
    SplineConfig,
    bspline_basis,
    greville_abscissae,
    map_time,
    open_uniform_knots,
    second_derivative_design,
)
from oracles import bernstein_basis, cubic_bezier_second_derivative, de_boor_point


def random_spline(rng, num_control=8, degree=3, num_bases=2, obs_count=10):
    cfg = SplineConfig(num_control, degree, num_bases)
    return MotionSpline(
        cfg,
        rng.normal(size=(num_bases, 9, num_control)),
        rng.normal(size=(1, 9, num_control)),
        obs_count,
    )


# --- knots --------------------------------------------------------------------

def test_open_uniform_knots_bezier_case():
    assert np.allclose(open_uniform_knots(4, 3), [0, 0, 0, 0, 1, 1, 1, 1])


def test_open_uniform_knots_default_case():
    assert np.allclose(
        open_uniform_knots(8, 3), [0, 0, 0, 0, 0.2, 0.4, 0.6, 0.8, 1, 1, 1, 1]
    )


def test_open_uniform_knots_quadratic():
    assert np.allclose(open_uniform_knots(5, 2), [0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1])


def test_open_uniform_knots_invalid():
    with pytest.raises(InvalidConfig):
        open_uniform_knots(3, 3)


# --- basis --------------------------------------------------------------------

def test_basis_degree0_one_hot():
    knots = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    for t, j in ((0.1, 0), (0.3, 1), (0.6, 2), (0.9, 3)):
        vals = bspline_basis(t, knots, 0)
        expected = np.zeros(4)
        expected[j] = 1.0
        assert np.allclose(vals, expected)


def test_basis_bernstein_midpoint():
    knots = open_uniform_knots(4, 3)
    assert np.allclose(bspline_basis(0.5, knots, 3), [0.125, 0.375, 0.375, 0.125])


def test_basis_matches_bernstein_everywhere():
    # clamped knots with no interior knots make the basis exactly Bernstein
    knots = open_uniform_knots(5, 4)
    for t in np.linspace(0.05, 0.95, 7):
        assert np.allclose(bspline_basis(t, knots, 4), bernstein_basis(4, t), atol=1e-12)


def test_basis_properties_random_configs():
    # partition of unity, non-negativity, local support over 1000 configs
    rng = np.random.default_rng(21)
    for _ in range(1000):
        p = int(rng.integers(1, 6))
        m = int(rng.integers(p + 1, 17))
        t = rng.uniform(1e-6, 1 - 1e-6)
        vals = bspline_basis(t, open_uniform_knots(m, p), p)
        assert vals.shape == (m,)
        assert abs(vals.sum() - 1.0) < 1e-12
        assert np.all(vals >= 0)
        assert np.count_nonzero(vals) <= p + 1


def test_map_time_paper_values():
    assert map_time(0.0) == 0.5
    assert map_time(-1.0) == 1e-6
    assert map_time(3.0) == 1.0 - 1e-6


# --- forward ------------------------------------------------------------------

def test_forward_constant_controls():
    rng = np.random.default_rng(22)
    cfg = SplineConfig(8, 3, 2)
    v_mot = rng.normal(size=(2, 9))
    v_cam = rng.normal(size=9)
    sp = MotionSpline(
        cfg,
        np.repeat(v_mot[:, :, None], 8, axis=2),
        np.repeat(v_cam[None, :, None], 8, axis=2),
        10,
    )
    mot, cam = sp.forward(np.linspace(-1, 1, 9))
    assert np.allclose(mot, v_mot[:, None, :], atol=1e-12)
    assert np.allclose(cam, v_cam[None, :], atol=1e-12)


def test_forward_linear_precision():
    # control points on a line over the Greville abscissae reproduce the line
    cfg = SplineConfig(8, 3, 1)
    knots = open_uniform_knots(8, 3)
    grev = greville_abscissae(knots, 3)
    slope, intercept = 2.5, -0.7
    ctrl = slope * grev + intercept
    sp = MotionSpline(cfg, np.tile(ctrl, (1, 9, 1)), np.tile(ctrl, (1, 9, 1)), 10)
    t01 = np.linspace(1e-6, 1 - 1e-6, 200)
    mot, _ = sp.eval01(t01)
    assert np.abs(mot[0, :, 0] - (slope * t01 + intercept)).max() < 1e-9


def test_forward_matches_de_boor_oracle():
    rng = np.random.default_rng(23)
    sp = random_spline(rng)
    knots = sp.knots
    t01 = 0.37
    mot, cam = sp.eval01(t01)
    for k in range(2):
        for c in range(9):
            expected = de_boor_point(t01, knots, 3, sp.motion_ctrl[k, c])
            assert abs(mot[k, 0, c] - expected) < 1e-12
    for c in range(9):
        assert abs(cam[0, c] - de_boor_point(t01, knots, 3, sp.camera_ctrl[0, c])) < 1e-12


def test_forward_convex_hull():
    rng = np.random.default_rng(24)
    sp = random_spline(rng)
    mot, cam = sp.forward(np.linspace(-1, 1, 101))
    for k in range(2):
        for c in range(9):
            lo, hi = sp.motion_ctrl[k, c].min(), sp.motion_ctrl[k, c].max()
            assert mot[k, :, c].min() >= lo - 1e-12
            assert mot[k, :, c].max() <= hi + 1e-12
    for c in range(9):
        lo, hi = sp.camera_ctrl[0, c].min(), sp.camera_ctrl[0, c].max()
        assert cam[:, c].min() >= lo - 1e-12 and cam[:, c].max() <= hi + 1e-12


def test_forward_endpoint_interpolation():
    rng = np.random.default_rng(25)
    sp = random_spline(rng)
    mot, cam = sp.forward(np.array([-1.0, 1.0]))
    assert np.abs(mot[:, 0, :] - sp.motion_ctrl[:, :, 0]).max() < 1e-4
    assert np.abs(mot[:, 1, :] - sp.motion_ctrl[:, :, -1]).max() < 1e-4
    assert np.abs(cam[0] - sp.camera_ctrl[0, :, 0]).max() < 1e-4
    assert np.abs(cam[1] - sp.camera_ctrl[0, :, -1]).max() < 1e-4


# --- endpoint slopes / extrapolation -------------------------------------------

def test_endpoint_slopes_constant_curve_zero():
    cfg = SplineConfig(6, 3, 1)
    sp = MotionSpline(cfg, np.full((1, 9, 6), 2.0), np.full((1, 9, 6), -1.0), 8)
    (sl_m, sl_c), (sr_m, sr_c) = sp.endpoint_slopes()
    for arr in (sl_m, sl_c, sr_m, sr_c):
        assert np.abs(arr).max() < 1e-12


def test_endpoint_slopes_linear_curve():
    # the 1e-6 time clip shifts the endpoint evaluations, so a linear curve's
    # one-sided slope is exact only up to slope * 1e-6 / dt
    cfg = SplineConfig(8, 3, 1)
    knots = open_uniform_knots(8, 3)
    grev = greville_abscissae(knots, 3)
    slope_t01 = 3.0  # slope in t_norm units is half of that
    ctrl = slope_t01 * grev
    sp = MotionSpline(cfg, np.tile(ctrl, (1, 9, 1)), np.tile(ctrl, (1, 9, 1)), 12)
    dt = 2.0 / (sp.obs_count - 1)
    tol = slope_t01 * 1e-6 / dt + 1e-9
    (sl_m, _), (sr_m, _) = sp.endpoint_slopes()
    assert np.abs(sl_m - slope_t01 / 2).max() < tol
    assert np.abs(sr_m - slope_t01 / 2).max() < tol


def test_endpoint_slopes_match_finite_difference_oracle():
    rng = np.random.default_rng(26)
    sp = random_spline(rng, obs_count=9)
    dt = 2.0 / (sp.obs_count - 1)
    (sl_m, sl_c), (sr_m, sr_c) = sp.endpoint_slopes()
    m0, c0 = sp.forward(np.array([-1.0]))
    m1, c1 = sp.forward(np.array([-1.0 + dt]))
    assert np.allclose(sl_m, (m1 - m0)[:, 0, :] / dt, atol=1e-12)
    assert np.allclose(sl_c, (c1 - c0)[0] / dt, atol=1e-12)
    m2, c2 = sp.forward(np.array([1.0 - dt]))
    m3, c3 = sp.forward(np.array([1.0]))
    assert np.allclose(sr_m, (m3 - m2)[:, 0, :] / dt, atol=1e-12)
    assert np.allclose(sr_c, (c3 - c2)[0] / dt, atol=1e-12)


def test_endpoint_slopes_require_two_frames():
    rng = np.random.default_rng(27)
    sp = random_spline(rng, obs_count=1)
    with pytest.raises(InvalidConfig):
        sp.endpoint_slopes()


def test_forward_extrap_interior_passthrough():
    rng = np.random.default_rng(28)
    sp = random_spline(rng)
    m1, c1 = sp.forward(np.array([0.5]))
    m2, c2 = sp.forward_extrap(np.array([0.5]))
    assert np.array_equal(m1, m2) and np.array_equal(c1, c2)


def test_forward_extrap_linear_curve_continues_the_line():
    cfg = SplineConfig(8, 3, 1)
    knots = open_uniform_knots(8, 3)
    grev = greville_abscissae(knots, 3)
    ctrl = 2.0 * grev + 0.3
    sp = MotionSpline(cfg, np.tile(ctrl, (1, 9, 1)), np.tile(ctrl, (1, 9, 1)), 10)
    mot, _ = sp.forward_extrap(np.array([1.5]))
    t01_virtual = 0.5 * 1.5 + 0.5  # what the line would give without clipping
    # exact up to the 1e-6 endpoint clip propagated through value and slope
    assert np.abs(mot[0, 0, :] - (2.0 * t01_virtual + 0.3)).max() < 1e-4


def test_forward_extrap_right_formula():
    rng = np.random.default_rng(29)
    sp = random_spline(rng, obs_count=7)
    mot2, cam2 = sp.forward_extrap(np.array([2.0]))
    m_end, c_end = sp.forward(np.array([1.0]))
    (_, _), (sr_m, sr_c) = sp.endpoint_slopes()
    assert np.allclose(mot2[:, 0, :], m_end[:, 0, :] + 1.0 * sr_m, atol=1e-12)
    assert np.allclose(cam2[0], c_end[0] + 1.0 * sr_c, atol=1e-12)


def test_forward_extrap_left_formula():
    rng = np.random.default_rng(30)
    sp = random_spline(rng, obs_count=7)
    mot, cam = sp.forward_extrap(np.array([-1.75]))
    m_end, c_end = sp.forward(np.array([-1.0]))
    (sl_m, sl_c), _ = sp.endpoint_slopes()
    assert np.allclose(mot[:, 0, :], m_end[:, 0, :] + (-0.75) * sl_m, atol=1e-12)
    assert np.allclose(cam[0], c_end[0] + (-0.75) * sl_c, atol=1e-12)


def test_forward_extrap_continuous_at_boundaries():
    rng = np.random.default_rng(31)
    sp = random_spline(rng)
    for sign in (-1.0, 1.0):
        m_in, c_in = sp.forward_extrap(np.array([sign * (1 - 1e-9)]))
        m_out, c_out = sp.forward_extrap(np.array([sign * (1 + 1e-9)]))
        assert np.abs(m_in - m_out).max() < 1e-6
        assert np.abs(c_in - c_out).max() < 1e-6


# --- second derivative ----------------------------------------------------------

def test_second_derivative_zero_for_collinear_controls():
    cfg = SplineConfig(8, 3, 1)
    knots = open_uniform_knots(8, 3)
    ctrl = 4.0 * greville_abscissae(knots, 3) - 1.0
    sp = MotionSpline(cfg, np.tile(ctrl, (1, 9, 1)), np.tile(ctrl, (1, 9, 1)), 10)
    mot2, cam2 = sp.second_derivative(np.linspace(0.01, 0.99, 37))
    assert np.abs(mot2).max() < 1e-9
    assert np.abs(cam2).max() < 1e-9


def test_second_derivative_bezier_oracle():
    rng = np.random.default_rng(32)
    cfg = SplineConfig(4, 3, 1)
    sp = random_spline(rng, num_control=4, degree=3, num_bases=1)
    for t in (0.2, 0.5, 0.8):
        mot2, _ = sp.second_derivative(np.array([t]))
        for c in range(9):
            expected = cubic_bezier_second_derivative(sp.motion_ctrl[0, c], t)
            assert abs(mot2[0, 0, c] - expected) < 1e-9


def test_second_derivative_matches_finite_differences_100_random():
    rng = np.random.default_rng(33)
    h = 1e-5
    for _ in range(100):
        p = int(rng.integers(2, 5))
        m = int(rng.integers(p + 1, 11))
        sp = random_spline(rng, num_control=m, degree=p, num_bases=1)
        t = rng.uniform(0.1, 0.9)
        mot2, _ = sp.second_derivative(np.array([t]))
        mp, _ = sp.eval01(np.array([t + h]))
        m0, _ = sp.eval01(np.array([t]))
        mm, _ = sp.eval01(np.array([t - h]))
        fd = (mp - 2 * m0 + mm)[0, 0, :] / h**2
        scale = np.maximum(np.abs(fd), 1.0)
        assert np.abs(mot2[0, 0, :] - fd).max() / scale.max() < 1e-4


def test_second_derivative_needs_degree_two():
    rng = np.random.default_rng(34)
    sp = random_spline(rng, num_control=4, degree=1)
    with pytest.raises(InvalidConfig):
        sp.second_derivative(np.array([0.5]))


def test_second_derivative_design_linear_in_controls():
    knots = open_uniform_knots(7, 3)
    s = second_derivative_design(knots, 3, np.linspace(0.05, 0.95, 11))
    assert s.shape == (11, 7)
