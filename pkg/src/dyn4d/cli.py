"""Command-line pipeline: synth -> fit -> eval-time / eval-space / render,
plus standalone metric computation.

Exit codes: 0 success, 2 usage error, 3 fit/data error, 4 evaluation error.
All commands are deterministic under a fixed --seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import storage
from .errors import Dyn4dError, FileFormatError, InvalidSpec, NoConsensus
from .fitting import FitConfig, fit, init_bases_from_tracks
from .geometry import rotation_angle
from .metrics import (
    CorrespondenceSet,
    epipolar_design_rank,
    epipolar_metrics,
    psnr,
    ssim,
)
from .motion import DynamicScene, GaussianPrimitive, scene_at
from .scaffold import MaskConfig, build_mask, splat
from .spline import SplineConfig
from .synthetic import (
    CAMERA_MOVES,
    AnalyticSceneSpec,
    CircularOrbit,
    ConstantVelocity,
    Dolly,
    Pan,
    Projectile,
    RigidTumble,
    StaticCamera,
    Tilt,
    apply_camera_move,
    generate_scene,
    sample_discrete,
    spec_from_dict,
    spec_to_dict,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_EVAL = 4

# extrapolation offsets (percent of span) reported by eval-time; 6.67 mirrors
# the past/future windows used in the headline temporal comparison
EXTRAP_OFFSETS_PCT = (5.0, 6.67, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)


class EvalError(Dyn4dError):
    pass


def _parse_vec3(text: str, flag: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise InvalidSpec(f"{flag} expects 'x,y,z', got {text!r}")
    return tuple(float(v) for v in parts)


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="run-config JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")


def _load_configs(args):
    """Run-config file (if any) overridden by explicitly passed flags."""
    if args.config:
        fit_cfg, mask_cfg, spline_cfg, seed, out = storage.load_run_config(args.config)
    else:
        fit_cfg, mask_cfg, spline_cfg = FitConfig(), MaskConfig(), SplineConfig()
        seed, out = args.seed, args.out
    fit_over = {}
    for flag, name in (
        ("lambda_phys", "lambda_phys"),
        ("learning_rate", "learning_rate"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("extrap_weight", "extrap_weight"),
        ("boundary_fraction", "boundary_fraction"),
        ("phys_grid_size", "phys_grid_size"),
        ("solver", "solver"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            fit_over[name] = val
    if getattr(args, "no_rot_reg", False):
        fit_over["rot_toggle"] = False
    if getattr(args, "warm_start", False):
        fit_over["warm_start"] = True
    if args.seed is not None:
        seed = args.seed
    fit_cfg = FitConfig(**{**vars(fit_cfg), **fit_over, "seed": seed})

    spline_over = {}
    for flag in ("num_control", "degree", "num_bases"):
        val = getattr(args, flag, None)
        if val is not None:
            spline_over[flag] = val
    spline_cfg = SplineConfig(**{**vars(spline_cfg), **spline_over})

    mask_over = {}
    for flag, name in (
        ("opacity_threshold", "opacity_threshold"),
        ("depth_threshold", "rel_depth_threshold"),
        ("splat_radius", "splat_radius"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            mask_over[name] = val
    mask_cfg = MaskConfig(**{**vars(mask_cfg), **mask_over})

    out = args.out if args.out != "." or not args.config else out
    return fit_cfg, mask_cfg, spline_cfg, seed, out


def _outdir(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        motion = {
            "constant-velocity": lambda: ConstantVelocity(_parse_vec3(args.velocity, "--velocity")),
            "projectile": lambda: Projectile(_parse_vec3(args.v0, "--v0"), args.gravity),
            "circular-orbit": lambda: CircularOrbit(args.radius, args.omega),
            "rigid-tumble": lambda: RigidTumble(
                _parse_vec3(args.axis, "--axis"), args.omega, _parse_vec3(args.velocity, "--velocity")
            ),
        }[args.motion]()
        camera = {
            "static": lambda: StaticCamera(),
            "dolly": lambda: Dolly(_parse_vec3(args.cam_direction, "--cam-direction"), args.cam_speed),
            "pan": lambda: Pan(args.cam_rate),
            "tilt": lambda: Tilt(args.cam_rate),
        }[args.camera]()
        spec = AnalyticSceneSpec(
            motion=motion,
            camera_path=camera,
            num_foreground=args.num_foreground,
            num_background=args.num_background,
            time_span=(args.time_span[0], args.time_span[1]),
            seed=args.seed,
        )
        world = generate_scene(spec)
        obs = sample_discrete(world, args.frames, args.noise_sigma, seed=args.seed + 1)
    except (InvalidSpec, Dyn4dError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    out = _outdir(args.out)
    spec_dict = spec_to_dict(spec)
    scene = DynamicScene(
        world.scene.primitives,
        np.ones((spec.num_foreground, 1)),
        world.discrete_bases(obs.timestamps),
        world.scene.camera,
    )
    storage.save_scene(out / "scene.json", scene, analytic_spec=spec_dict)
    storage.save_tracks(
        out / "tracks.json",
        obs.timestamps,
        obs.tracks3d,
        obs.camera_pose9,
        world.scene.camera,
        analytic_spec=spec_dict,
        noise_sigma=args.noise_sigma,
    )
    print(f"wrote {out / 'scene.json'} and {out / 'tracks.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    try:
        fit_cfg, _, spline_cfg, seed, out = _load_configs(args)
        data = storage.load_tracks(args.tracks)
        bases, coeffs, report = init_bases_from_tracks(
            data["tracks3d"],
            data["timestamps"],
            spline_cfg.num_bases,
            seed=seed,
            camera_states=data["camera_pose9"],
            visibility=data["visibility"],
        )
        result = fit(bases, fit_cfg, spline_cfg)
    except (FileFormatError, Dyn4dError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA

    outp = _outdir(out)
    storage.save_checkpoint(outp / "checkpoint.json", result.spline)
    prims = [
        GaussianPrimitive(data["tracks3d"][i, 0], np.eye(3), np.full(3, 0.02), 1.0, np.full(3, 0.7), True)
        for i in range(data["tracks3d"].shape[0])
    ]
    fitted = DynamicScene(prims, coeffs, bases, data["intrinsics"])
    storage.save_scene(outp / "fitted_scene.json", fitted, analytic_spec=data["analytic_spec"])
    storage.write_csv(
        outp / "loss.csv",
        ["epoch", "data", "phys", "total"],
        [[e, lb.data, lb.phys, lb.total] for e, lb in enumerate(result.history)],
    )
    if result.control_gap is not None:
        closed = result.closed_form
        it_total = result.history[-1].total
        from .fitting import total_loss

        cl_total = total_loss(closed, bases, fit_cfg).total
        gap = abs(it_total - cl_total) / max(cl_total, 1e-300)
        storage.write_csv(
            outp / "fit_report.csv",
            ["closed_total", "iterative_total", "relative_loss_gap", "control_max_abs_diff"],
            [[cl_total, it_total, gap, result.control_gap]],
        )
    n_flagged = int(report.coefficient_rank_flags.sum())
    print(
        f"fit done: {bases.num_bases} bases, {bases.num_frames} frames, "
        f"final total loss {result.history[-1].total:.6g}, {n_flagged} rank-flagged tracks"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-time
# ---------------------------------------------------------------------------

def _time_grid():
    rows = [(float(t), 0.0) for t in np.linspace(-1.0, 1.0, 11)]
    for pct in EXTRAP_OFFSETS_PCT:
        dt = 2.0 * pct / 100.0
        rows.append((-1.0 - dt, -pct))
        rows.append((1.0 + dt, pct))
    rows.sort()
    return rows


def _model_state_at(spline, t_norm):
    motion, camera = spline.forward_extrap(np.array([t_norm]))
    return motion[:, 0, :], camera[0]


def cmd_eval_time(args) -> int:
    try:
        spline = storage.load_checkpoint(args.checkpoint)
        scene, spec_dict = storage.load_scene(args.scene)
        holdout = storage.load_tracks(args.holdout) if args.holdout else None
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    rows = []
    if spec_dict is not None:
        world = generate_scene(spec_from_dict(spec_dict))
        for t_norm, pct in _time_grid():
            mot, cam_state = _model_state_at(spline, t_norm)
            posed, cam = scene_at(scene, mot, cam_state)
            gt_fg, gt_cam = world.ground_truth_at(t_norm)
            pred_fg = posed.positions[posed.is_foreground]
            fg_err = float(np.mean(np.linalg.norm(pred_fg - gt_fg, axis=1)))
            cam_err = float(np.linalg.norm(cam.center() - gt_cam.center()))
            rot_err = rotation_angle(cam.pose.rotation @ gt_cam.pose.rotation.T)
            rows.append([t_norm, pct, fg_err, cam_err, rot_err])
    elif holdout is not None:
        ts = holdout["timestamps"]
        for ti, t_norm in enumerate(ts):
            mot, cam_state = _model_state_at(spline, float(t_norm))
            posed, cam = scene_at(scene, mot, cam_state)
            pred_fg = posed.positions[posed.is_foreground]
            ref = holdout["tracks3d"][:, ti, :]
            if pred_fg.shape[0] != ref.shape[0]:
                print("error: holdout tracks do not match the scene's foreground", file=sys.stderr)
                return EXIT_EVAL
            vis = holdout["visibility"][:, ti]
            fg_err = float(np.mean(np.linalg.norm(pred_fg[vis] - ref[vis], axis=1)))
            from .geometry import rigid_from_pose9

            ref_pose = rigid_from_pose9(holdout["camera_pose9"][ti])
            cam_err = float(np.linalg.norm(cam.center() - (-ref_pose.rotation.T @ ref_pose.translation)))
            rot_err = rotation_angle(cam.pose.rotation @ ref_pose.rotation.T)
            pct = 0.0
            if t_norm < -1.0:
                pct = (t_norm + 1.0) / 2.0 * 100.0
            elif t_norm > 1.0:
                pct = (t_norm - 1.0) / 2.0 * 100.0
            rows.append([float(t_norm), pct, fg_err, cam_err, rot_err])
    else:
        print("error: scene has no analytic oracle and no --holdout was given", file=sys.stderr)
        return EXIT_EVAL

    outp = _outdir(args.out)
    storage.write_csv(
        outp / "time_error.csv",
        ["t_norm", "offset_pct", "fg_pos_err", "cam_center_err", "cam_rot_err_rad"],
        rows,
    )
    arr = np.asarray([[r[0], r[2], r[3]] for r in rows], dtype=float)
    storage.write_svg_chart(
        outp / "time_error.svg",
        arr[:, 0],
        {"foreground position error": arr[:, 1], "camera center error": arr[:, 2]},
        "temporal prediction error vs normalized time",
        "t_norm (observed span = [-1, 1])",
        "mean error (scene units)",
    )
    print(f"wrote {outp / 'time_error.csv'} ({len(rows)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-space
# ---------------------------------------------------------------------------

def _covisible_pairs(posed, cam_a, cam_b):
    from .geometry import project

    pix_a, _, val_a = project(cam_a, posed.positions)
    pix_b, _, val_b = project(cam_b, posed.positions)

    def in_frame(pix, cam):
        return (
            (pix[:, 0] >= 0)
            & (pix[:, 0] <= cam.width - 1)
            & (pix[:, 1] >= 0)
            & (pix[:, 1] <= cam.height - 1)
        )

    keep = val_a & val_b & in_frame(pix_a, cam_a) & in_frame(pix_b, cam_b)
    return pix_a[keep], pix_b[keep]


def cmd_eval_space(args) -> int:
    try:
        spline = storage.load_checkpoint(args.checkpoint)
        scene, _ = storage.load_scene(args.scene)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    moves = list(CAMERA_MOVES) if args.move == "all" else [args.move]
    mot, cam_state = _model_state_at(spline, args.t_norm)
    posed, src_cam = scene_at(scene, mot, cam_state)

    mask_cfg = MaskConfig()
    rows = []
    outp = _outdir(args.out)
    for move in moves:
        amount = args.amount
        if amount is None:
            amount = 0.1 if move in ("tilt-up", "pan-right") else 0.5
        novel_cam = src_cam.with_pose(apply_camera_move(src_cam.pose, move, amount))
        x1, x2 = _covisible_pairs(posed, src_cam, novel_cam)
        if x1.shape[0] < 8:
            print(f"error: only {x1.shape[0]} covisible points for move {move}", file=sys.stderr)
            return EXIT_EVAL
        for cam, tag in ((src_cam, "src"), (novel_cam, "novel")):
            frame = splat(posed.positions, posed.colors, posed.opacities, cam, mask_cfg.splat_radius)
            build_mask(frame, cfg=mask_cfg)
            storage.write_png(outp / f"space_{move}_{tag}.png", frame.color)
        if epipolar_design_rank(CorrespondenceSet(x1, x2)) < 8:
            # zero parallax / pure rotation: no unique F, but some valid
            # rank-2 geometry explains every pair exactly
            ee, eir = 0.0, 1.0
        else:
            try:
                ee, eir = epipolar_metrics(
                    CorrespondenceSet(x1, x2),
                    inlier_threshold=args.threshold,
                    iterations=args.iterations,
                    seed=args.seed,
                )
            except NoConsensus as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_EVAL
        rows.append([move, x1.shape[0], ee, eir])
    storage.write_csv(outp / "space_metrics.csv", ["move", "n_pairs", "ee_median", "eir"], rows)
    print(f"wrote {outp / 'space_metrics.csv'} ({len(rows)} moves)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    try:
        spline = storage.load_checkpoint(args.checkpoint)
        scene, _ = storage.load_scene(args.scene)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    try:
        t_norms = [float(v) for v in args.t_norms.split(",") if v.strip() != ""]
        if not t_norms:
            raise ValueError("empty list")
        if args.move is not None and args.move not in CAMERA_MOVES:
            raise ValueError(f"unknown camera move {args.move!r}")
    except ValueError as exc:
        print(f"error: invalid pose/time flags: {exc}", file=sys.stderr)
        return EXIT_EVAL

    _, mask_cfg, _, _, _ = _load_configs(args)
    outp = _outdir(args.out)
    for i, t_norm in enumerate(t_norms):
        mot, cam_state = _model_state_at(spline, t_norm)
        posed, cam = scene_at(scene, mot, cam_state)
        if args.move is not None:
            cam = cam.with_pose(apply_camera_move(cam.pose, args.move, args.amount))
        frame = splat(posed.positions, posed.colors, posed.opacities, cam, mask_cfg.splat_radius)
        build_mask(frame, cfg=mask_cfg)
        storage.write_png(outp / f"frame_{i:05d}.png", frame.color)
        storage.write_pfm(outp / f"frame_{i:05d}.pfm", frame.depth)
        storage.write_png(outp / f"mask_{i:05d}.png", frame.mask)
    print(f"wrote {len(t_norms)} frames to {outp}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    outp = _outdir(args.out)
    try:
        if args.metrics_kind == "epipolar":
            x1, x2 = storage.load_correspondences_csv(args.pairs)
            ee, eir = epipolar_metrics(
                CorrespondenceSet(x1, x2, source="ingested"),
                inlier_threshold=args.threshold,
                iterations=args.iterations,
                seed=args.seed,
            )
            storage.write_csv(
                outp / "epipolar.csv", ["n_pairs", "ee_median", "eir"], [[x1.shape[0], ee, eir]]
            )
            print(f"EE_median={ee:.6g} EIR={eir:.6g}")
        else:
            a = storage.read_png(args.ref)
            b = storage.read_png(args.test)
            p = psnr(a, b)
            s = ssim(a, b)
            storage.write_csv(outp / "image_metrics.csv", ["psnr_db", "ssim"], [[p, s]])
            print(f"PSNR={p:.6g} SSIM={s:.6g}")
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NoConsensus, Dyn4dError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EVAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyn4d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene + track file")
    _common_flags(p)
    p.add_argument("--motion", required=True,
                   choices=["constant-velocity", "projectile", "circular-orbit", "rigid-tumble"])
    p.add_argument("--camera", default="static", choices=["static", "dolly", "pan", "tilt"])
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--num-foreground", type=int, default=80)
    p.add_argument("--num-background", type=int, default=40)
    p.add_argument("--velocity", default="1,0,0")
    p.add_argument("--v0", default="1,5,0")
    p.add_argument("--gravity", type=float, default=9.8)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--axis", default="0,0,1")
    p.add_argument("--cam-direction", default="0,0,-1")
    p.add_argument("--cam-speed", type=float, default=0.5)
    p.add_argument("--cam-rate", type=float, default=0.1)
    p.add_argument("--time-span", type=float, nargs=2, default=[0.0, 1.0])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit the dynamics spline to a track file")
    _common_flags(p)
    p.add_argument("--tracks", required=True)
    p.add_argument("--num-bases", type=int, default=None, dest="num_bases")
    p.add_argument("--num-control", type=int, default=None, dest="num_control")
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--lambda-phys", type=float, default=None, dest="lambda_phys")
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--extrap-weight", type=float, default=None, dest="extrap_weight")
    p.add_argument("--boundary-fraction", type=float, default=None, dest="boundary_fraction")
    p.add_argument("--phys-grid-size", type=int, default=None, dest="phys_grid_size")
    p.add_argument("--solver", choices=["iterative", "closed_form", "both"], default=None)
    p.add_argument("--warm-start", action="store_true")
    p.add_argument("--no-rot-reg", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval-time", help="error-vs-time-offset analysis")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--holdout", default=None, help="held-out track file (ingested scenes)")
    p.set_defaults(func=cmd_eval_time)

    p = sub.add_parser("eval-space", help="epipolar consistency under camera moves")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--move", default="all", choices=list(CAMERA_MOVES) + ["all"])
    p.add_argument("--amount", type=float, default=None,
                   help="move magnitude (default: 0.5 units for dollies, 0.1 rad for tilt/pan)")
    p.add_argument("--t-norm", type=float, default=0.0, dest="t_norm")
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=2000)
    p.set_defaults(func=cmd_eval_space)

    p = sub.add_parser("render", help="render scaffold frames + inpainting masks")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--t-norms", default="0", dest="t_norms",
                   help="comma-separated normalized times (may lie outside [-1,1])")
    p.add_argument("--move", default=None)
    p.add_argument("--amount", type=float, default=0.5)
    p.add_argument("--opacity-threshold", type=float, default=None, dest="opacity_threshold")
    p.add_argument("--depth-threshold", type=float, default=None, dest="depth_threshold")
    p.add_argument("--splat-radius", type=int, default=None, dest="splat_radius")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("metrics", help="stand-alone metric computation")
    msub = p.add_subparsers(dest="metrics_kind", required=True)
    pe = msub.add_parser("epipolar", help="EE/EIR from a correspondence CSV")
    _common_flags(pe)
    pe.add_argument("--pairs", required=True)
    pe.add_argument("--threshold", type=float, default=1.0)
    pe.add_argument("--iterations", type=int, default=2000)
    pe.set_defaults(func=cmd_metrics, metrics_kind="epipolar")
    pi = msub.add_parser("image", help="PSNR/SSIM between two PNGs")
    _common_flags(pi)
    pi.add_argument("--ref", required=True)
    pi.add_argument("--test", required=True)
    pi.set_defaults(func=cmd_metrics, metrics_kind="image")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.command == "synth" and args.frames < 2:
        print("usage error: --frames must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
