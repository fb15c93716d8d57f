"""Persistence: scene/track/checkpoint/config files (JSON envelopes with all
numbers as 17-significant-digit decimal text, so files are diff-able and
round-trip 64-bit floats exactly), plus PFM/PNG/SVG/CSV emitters.

On-disk conventions: normalized time in [-1, 1] everywhere; 9-vector poses
are ``[rot6 | trans]`` with rot6 the first two rotation-matrix columns;
camera poses are world->camera with +z viewing direction.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FileFormatError
from .fitting import FitConfig
from .geometry import CameraModel, RigidTransform
from .motion import DiscreteMotionBases, DynamicScene, GaussianPrimitive
from .scaffold import MaskConfig
from .spline import MotionSpline, SplineConfig

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# decimal-text float codec
# ---------------------------------------------------------------------------

def enc_float(x: float) -> str:
    return format(float(x), ".17g")


def enc_array(a: np.ndarray):
    """Nested lists of decimal strings mirroring the array shape."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return enc_float(float(a))
    return [enc_array(sub) for sub in a] if a.ndim > 1 else [enc_float(v) for v in a]


def dec_float(s, path: str) -> float:
    try:
        return float(s)
    except (TypeError, ValueError):
        raise FileFormatError(f"{path}: not a decimal number: {s!r}") from None


def dec_array(data, path: str, shape: tuple | None = None) -> np.ndarray:
    def walk(node, p):
        if isinstance(node, list):
            return [walk(v, f"{p}[{i}]") for i, v in enumerate(node)]
        return dec_float(node, p)

    try:
        arr = np.asarray(walk(data, path), dtype=float)
    except ValueError:
        raise FileFormatError(f"{path}: ragged or non-numeric array") from None
    if shape is not None and arr.shape != tuple(shape):
        raise FileFormatError(f"{path}: expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise FileFormatError(f"{path}.{key}: missing field")
    return d[key]


def _check_kind(doc: dict, kind: str, path: str):
    if _req(doc, "version", path) != FORMAT_VERSION:
        raise FileFormatError(f"{path}.version: expected {FORMAT_VERSION}")
    if _req(doc, "kind", path) != kind:
        raise FileFormatError(f"{path}.kind: expected {kind!r}, got {doc.get('kind')!r}")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# intrinsics block
# ---------------------------------------------------------------------------

def _enc_intrinsics(cam: CameraModel) -> dict:
    return {
        "fx": enc_float(cam.fx),
        "fy": enc_float(cam.fy),
        "cx": enc_float(cam.cx),
        "cy": enc_float(cam.cy),
        "width": cam.width,
        "height": cam.height,
    }


def _dec_intrinsics(d: dict, path: str, pose: RigidTransform | None = None) -> CameraModel:
    fx = dec_float(_req(d, "fx", path), f"{path}.fx")
    fy = dec_float(_req(d, "fy", path), f"{path}.fy")
    cx = dec_float(_req(d, "cx", path), f"{path}.cx")
    cy = dec_float(_req(d, "cy", path), f"{path}.cy")
    width = _req(d, "width", path)
    height = _req(d, "height", path)
    if not (isinstance(width, int) and isinstance(height, int)):
        raise FileFormatError(f"{path}.width/height: must be integers")
    if fx <= 0 or fy <= 0:
        raise FileFormatError(f"{path}.fx/fy: must be > 0")
    if not (0 <= cx < width and 0 <= cy < height):
        raise FileFormatError(f"{path}.cx/cy: principal point outside image")
    from .geometry import identity_transform

    return CameraModel(fx, fy, cx, cy, width, height, pose or identity_transform())


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------

def save_scene(path, scene: DynamicScene, analytic_spec: dict | None = None):
    doc = {
        "version": FORMAT_VERSION,
        "kind": "scene",
        "intrinsics": _enc_intrinsics(scene.camera),
        "primitives": [
            {
                "mean0": enc_array(g.mean0),
                "orient0": enc_array(g.orient0),
                "scale": enc_array(g.scale),
                "opacity": enc_float(g.opacity),
                "color": enc_array(g.color),
                "is_foreground": bool(g.is_foreground),
            }
            for g in scene.primitives
        ],
        "coefficients": enc_array(scene.coefficients),
        "bases": {
            "timestamps": enc_array(scene.bases.timestamps),
            "basis_states": enc_array(scene.bases.basis_states),
            "camera_states": enc_array(scene.bases.camera_states),
        },
        "analytic_spec": analytic_spec,
    }
    _write_json(path, doc)


def load_scene(path):
    """Load and re-validate a scene file; returns (DynamicScene, analytic_spec|None)."""
    doc = _read_json(path)
    _check_kind(doc, "scene", "scene")
    cam = _dec_intrinsics(_req(doc, "intrinsics", "scene"), "scene.intrinsics")
    prims = []
    from .errors import InvalidConfig

    for i, p in enumerate(_req(doc, "primitives", "scene")):
        pp = f"scene.primitives[{i}]"
        try:
            prims.append(
                GaussianPrimitive(
                    mean0=dec_array(_req(p, "mean0", pp), f"{pp}.mean0", (3,)),
                    orient0=dec_array(_req(p, "orient0", pp), f"{pp}.orient0", (3, 3)),
                    scale=dec_array(_req(p, "scale", pp), f"{pp}.scale", (3,)),
                    opacity=dec_float(_req(p, "opacity", pp), f"{pp}.opacity"),
                    color=dec_array(_req(p, "color", pp), f"{pp}.color", (3,)),
                    is_foreground=bool(_req(p, "is_foreground", pp)),
                )
            )
        except InvalidConfig as exc:
            raise FileFormatError(f"{pp}: {exc}") from None
    b = _req(doc, "bases", "scene")
    try:
        ts = dec_array(_req(b, "timestamps", "scene.bases"), "scene.bases.timestamps")
        bases = DiscreteMotionBases(
            ts,
            dec_array(_req(b, "basis_states", "scene.bases"), "scene.bases.basis_states"),
            dec_array(_req(b, "camera_states", "scene.bases"), "scene.bases.camera_states"),
        )
        coeffs = dec_array(_req(doc, "coefficients", "scene"), "scene.coefficients")
        scene = DynamicScene(prims, coeffs, bases, cam)
    except InvalidConfig as exc:
        raise FileFormatError(f"scene: {exc}") from None
    return scene, doc.get("analytic_spec")


# ---------------------------------------------------------------------------
# track files
# ---------------------------------------------------------------------------

def save_tracks(
    path,
    timestamps: np.ndarray,
    tracks3d: np.ndarray,
    camera_pose9: np.ndarray,
    intrinsics: CameraModel,
    visibility: np.ndarray | None = None,
    analytic_spec: dict | None = None,
    noise_sigma: float = 0.0,
):
    ts = np.asarray(timestamps, dtype=float)
    tracks = np.asarray(tracks3d, dtype=float)
    n, t = tracks.shape[0], tracks.shape[1]
    vis = np.ones((n, t), dtype=bool) if visibility is None else np.asarray(visibility, bool)
    points = []
    for i in range(n):
        frames = [
            [
                enc_float(ts[ti]),
                enc_float(tracks[i, ti, 0]),
                enc_float(tracks[i, ti, 1]),
                enc_float(tracks[i, ti, 2]),
                bool(vis[i, ti]),
            ]
            for ti in range(t)
        ]
        points.append({"id": i, "frames": frames})
    doc = {
        "version": FORMAT_VERSION,
        "kind": "tracks",
        "intrinsics": _enc_intrinsics(intrinsics),
        "camera_poses": enc_array(np.asarray(camera_pose9, dtype=float)),
        "points": points,
        "noise_sigma": enc_float(noise_sigma),
        "analytic_spec": analytic_spec,
    }
    _write_json(path, doc)


def load_tracks(path):
    """Load a track file; returns a dict with timestamps, tracks3d, visibility,
    camera_pose9, intrinsics, noise_sigma, analytic_spec."""
    doc = _read_json(path)
    _check_kind(doc, "tracks", "tracks")
    cam = _dec_intrinsics(_req(doc, "intrinsics", "tracks"), "tracks.intrinsics")
    pts = _req(doc, "points", "tracks")
    if not pts:
        raise FileFormatError("tracks.points: empty")
    n = len(pts)
    t = len(_req(pts[0], "frames", "tracks.points[0]"))
    if t < 2:
        raise FileFormatError("tracks.points[0].frames: need at least 2 frames")
    timestamps = None
    tracks = np.empty((n, t, 3))
    vis = np.empty((n, t), dtype=bool)
    for i, p in enumerate(pts):
        pp = f"tracks.points[{i}]"
        frames = _req(p, "frames", pp)
        if len(frames) != t:
            raise FileFormatError(f"{pp}.frames: expected {t} frames, got {len(frames)}")
        ts_i = np.empty(t)
        for ti, fr in enumerate(frames):
            fp = f"{pp}.frames[{ti}]"
            if not isinstance(fr, list) or len(fr) != 5:
                raise FileFormatError(f"{fp}: expected [t, x, y, z, visible]")
            ts_i[ti] = dec_float(fr[0], f"{fp}[0]")
            tracks[i, ti] = [dec_float(fr[j], f"{fp}[{j}]") for j in (1, 2, 3)]
            vis[i, ti] = bool(fr[4])
        if timestamps is None:
            timestamps = ts_i
            if np.any(np.diff(timestamps) <= 0):
                raise FileFormatError(f"{pp}.frames: timestamps must strictly increase")
        elif not np.array_equal(ts_i, timestamps):
            raise FileFormatError(f"{pp}.frames: timestamps inconsistent across points")
    cam_pose9 = dec_array(_req(doc, "camera_poses", "tracks"), "tracks.camera_poses", (t, 9))
    return {
        "timestamps": timestamps,
        "tracks3d": tracks,
        "visibility": vis,
        "camera_pose9": cam_pose9,
        "intrinsics": cam,
        "noise_sigma": dec_float(doc.get("noise_sigma", "0"), "tracks.noise_sigma"),
        "analytic_spec": doc.get("analytic_spec"),
    }


# ---------------------------------------------------------------------------
# spline checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, spline: MotionSpline):
    doc = {
        "version": FORMAT_VERSION,
        "kind": "spline_checkpoint",
        "config": {
            "num_control": spline.config.num_control,
            "degree": spline.config.degree,
            "num_bases": spline.config.num_bases,
        },
        "knots": enc_array(spline.knots),
        "motion_ctrl": enc_array(spline.motion_ctrl),
        "camera_ctrl": enc_array(spline.camera_ctrl),
        "obs_count": int(spline.obs_count),
    }
    _write_json(path, doc)


def load_checkpoint(path) -> MotionSpline:
    doc = _read_json(path)
    _check_kind(doc, "spline_checkpoint", "checkpoint")
    c = _req(doc, "config", "checkpoint")
    from .errors import InvalidConfig

    try:
        cfg = SplineConfig(
            int(_req(c, "num_control", "checkpoint.config")),
            int(_req(c, "degree", "checkpoint.config")),
            int(_req(c, "num_bases", "checkpoint.config")),
        )
        m, p, k = cfg.num_control, cfg.degree, cfg.num_bases
        return MotionSpline(
            config=cfg,
            knots=dec_array(_req(doc, "knots", "checkpoint"), "checkpoint.knots", (m + p + 1,)),
            motion_ctrl=dec_array(
                _req(doc, "motion_ctrl", "checkpoint"), "checkpoint.motion_ctrl", (k, 9, m)
            ),
            camera_ctrl=dec_array(
                _req(doc, "camera_ctrl", "checkpoint"), "checkpoint.camera_ctrl", (1, 9, m)
            ),
            obs_count=int(_req(doc, "obs_count", "checkpoint")),
        )
    except InvalidConfig as exc:
        raise FileFormatError(f"checkpoint: {exc}") from None


# ---------------------------------------------------------------------------
# run config
# ---------------------------------------------------------------------------

def save_run_config(path, fit: FitConfig, mask: MaskConfig, spline: SplineConfig, seed: int, out: str):
    doc = {
        "version": FORMAT_VERSION,
        "kind": "run_config",
        "fit": {
            "lambda_phys": enc_float(fit.lambda_phys),
            "learning_rate": enc_float(fit.learning_rate),
            "epochs": fit.epochs,
            "batch_size": fit.batch_size,
            "extrap_weight": enc_float(fit.extrap_weight),
            "boundary_fraction": enc_float(fit.boundary_fraction),
            "rot_toggle": fit.rot_toggle,
            "phys_grid_size": fit.phys_grid_size,
            "solver": fit.solver,
            "warm_start": fit.warm_start,
            "seed": fit.seed,
        },
        "mask": {
            "opacity_threshold": enc_float(mask.opacity_threshold),
            "rel_depth_threshold": enc_float(mask.rel_depth_threshold),
            "splat_radius": mask.splat_radius,
        },
        "spline": {
            "num_control": spline.num_control,
            "degree": spline.degree,
            "num_bases": spline.num_bases,
        },
        "seed": seed,
        "out": out,
    }
    _write_json(path, doc)


def load_run_config(path):
    doc = _read_json(path)
    _check_kind(doc, "run_config", "run_config")
    from .errors import InvalidConfig

    f = _req(doc, "fit", "run_config")
    m = _req(doc, "mask", "run_config")
    s = _req(doc, "spline", "run_config")
    try:
        fit = FitConfig(
            lambda_phys=dec_float(_req(f, "lambda_phys", "run_config.fit"), "run_config.fit.lambda_phys"),
            learning_rate=dec_float(_req(f, "learning_rate", "run_config.fit"), "run_config.fit.learning_rate"),
            epochs=int(_req(f, "epochs", "run_config.fit")),
            batch_size=int(_req(f, "batch_size", "run_config.fit")),
            extrap_weight=dec_float(_req(f, "extrap_weight", "run_config.fit"), "run_config.fit.extrap_weight"),
            boundary_fraction=dec_float(
                _req(f, "boundary_fraction", "run_config.fit"), "run_config.fit.boundary_fraction"
            ),
            rot_toggle=bool(_req(f, "rot_toggle", "run_config.fit")),
            phys_grid_size=int(_req(f, "phys_grid_size", "run_config.fit")),
            solver=str(_req(f, "solver", "run_config.fit")),
            warm_start=bool(_req(f, "warm_start", "run_config.fit")),
            seed=int(_req(f, "seed", "run_config.fit")),
        )
        mask = MaskConfig(
            opacity_threshold=dec_float(
                _req(m, "opacity_threshold", "run_config.mask"), "run_config.mask.opacity_threshold"
            ),
            rel_depth_threshold=dec_float(
                _req(m, "rel_depth_threshold", "run_config.mask"), "run_config.mask.rel_depth_threshold"
            ),
            splat_radius=int(_req(m, "splat_radius", "run_config.mask")),
        )
        spline = SplineConfig(
            int(_req(s, "num_control", "run_config.spline")),
            int(_req(s, "degree", "run_config.spline")),
            int(_req(s, "num_bases", "run_config.spline")),
        )
    except InvalidConfig as exc:
        raise FileFormatError(f"run_config: {exc}") from None
    return fit, mask, spline, int(_req(doc, "seed", "run_config")), str(_req(doc, "out", "run_config"))


# ---------------------------------------------------------------------------
# images / depth / charts / csv
# ---------------------------------------------------------------------------

def write_png(path, image01: np.ndarray):
    """8-bit RGB PNG from a float image in [0,1]; grayscale written as 0/255."""
    img = np.asarray(image01)
    if img.dtype == bool:
        data = (img.astype(np.uint8)) * 255
        Image.fromarray(data, mode="L").save(path, format="PNG")
        return
    data = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    data = np.round(data * 255.0).astype(np.uint8)
    if data.ndim == 2:
        Image.fromarray(data, mode="L").save(path, format="PNG")
    else:
        Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    img = np.asarray(Image.open(path), dtype=float) / 255.0
    return img


def write_pfm(path, depth: np.ndarray):
    """Grayscale PFM, little-endian float32, rows stored bottom-to-top."""
    d = np.asarray(depth, dtype=np.float32)
    if d.ndim != 2:
        raise FileFormatError("PFM writer expects a 2-D array")
    h, w = d.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(d).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise FileFormatError("not a grayscale PFM file")
        w, h = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f4" if scale < 0 else ">f4")
    if data.size != w * h:
        raise FileFormatError("PFM payload size mismatch")
    return np.flipud(data.reshape(h, w)).astype(np.float32)


def write_csv(path, header: list, rows: list):
    """CSV with all floats as 17-significant-digit decimal text."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [enc_float(v) if isinstance(v, float) else v for v in row]
            )


def write_svg_chart(path, x: np.ndarray, series: dict, title: str, x_label: str, y_label: str):
    """Minimal deterministic line chart (polylines + axes), no dependencies."""
    width, height, margin = 640, 400, 56
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    all_y = np.concatenate(list(ys.values()))
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 16 {height / 2:.1f})" text-anchor="middle">{y_label}</text>',
        f'<text x="{margin}" y="{height - margin + 16}" font-size="10" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" font-size="10" text-anchor="middle">{x1:.3g}</text>',
        f'<text x="{margin - 4}" y="{height - margin}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{margin - 4}" y="{margin + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    for i, (name, yv) in enumerate(ys.items()):
        pts = " ".join(f"{sx(a):.3f},{sy(b):.3f}" for a, b in zip(x, yv))
        color = colors[i % len(colors)]
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lines.append(
            f'<text x="{width - margin + 4}" y="{margin + 14 * i + 10}" font-size="11" fill="{color}">{name}</text>'
        )
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")


def load_correspondences_csv(path):
    """Correspondence CSV: rows ``x1,y1,x2,y2`` (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if i == 0 and any(not _is_number(v) for v in row):
                continue  # header line
            if len(row) != 4:
                raise FileFormatError(f"correspondences row {i}: expected 4 columns")
            rows.append([dec_float(v, f"correspondences[{i}]") for v in row])
    if not rows:
        raise FileFormatError("correspondences: no data rows")
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0:2], arr[:, 2:4]


def save_correspondences_csv(path, x1: np.ndarray, x2: np.ndarray):
    rows = [
        [float(a), float(b), float(c), float(d)]
        for (a, b), (c, d) in zip(np.asarray(x1, float), np.asarray(x2, float))
    ]
    write_csv(path, ["x1", "y1", "x2", "y2"], rows)


def _is_number(s) -> bool:
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False
