"""dyn4d: continuous scene-dynamics toolkit.

Fits physically regularized B-spline trajectory models to discrete low-rank
motion bases and camera poses extracted from 3D point tracks, evolves
canonical Gaussian scenes to arbitrary continuous timestamps, re-projects
them to 2D scaffolds with inpainting masks, and evaluates temporal/spatial
consistency with epipolar and image metrics — all verifiable against
analytic synthetic worlds.
"""

from . import errors
from .fitting import (
    FitConfig,
    FitResult,
    InitReport,
    LossBreakdown,
    data_loss,
    fit,
    fit_closed_form,
    fit_iterative,
    init_bases_from_tracks,
    loss_gradients,
    physics_loss,
    total_loss,
)
from .geometry import (
    CameraModel,
    RigidTransform,
    apply,
    axis_angle_rotation,
    compose,
    identity_transform,
    inverse,
    kabsch,
    pose9_from_rigid,
    project,
    rigid_from_pose9,
    rot6_to_rotation,
    rotation_angle,
    rotation_to_rot6,
)
from .metrics import (
    CorrespondenceSet,
    eight_point,
    epipolar_metrics,
    psnr,
    ransac_fundamental,
    sampson_error,
    ssim,
)
from .motion import (
    DiscreteMotionBases,
    DynamicScene,
    GaussianPrimitive,
    PosedPoints,
    blend_bases,
    evolve_primitive,
    scene_at,
    solve_coefficients,
)
from .scaffold import MaskConfig, ScaffoldFrame, build_mask, splat
from .spline import (
    MotionSpline,
    SplineConfig,
    bspline_basis,
    greville_abscissae,
    map_time,
    open_uniform_knots,
)
from .synthetic import (
    AnalyticScene,
    AnalyticSceneSpec,
    CircularOrbit,
    ConstantVelocity,
    Dolly,
    Pan,
    Projectile,
    RigidTumble,
    SampledObservation,
    StaticCamera,
    Tilt,
    apply_camera_move,
    generate_scene,
    sample_discrete,
)

__version__ = "0.1.0"
