"""2D scaffold rendering: point splatting with a z-buffer and the
three-rule inpainting mask (never covered, low winning opacity, sharp
relative depth steps across 4-neighbors).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .geometry import CameraModel, project


@dataclass(frozen=True)
class MaskConfig:
    opacity_threshold: float = 0.1
    rel_depth_threshold: float = 0.05
    splat_radius: int = 1

    def __post_init__(self):
        if self.opacity_threshold < 0 or self.opacity_threshold > 1:
            raise InvalidConfig("opacity_threshold must be in [0,1]")
        if self.rel_depth_threshold <= 0:
            raise InvalidConfig("rel_depth_threshold must be > 0")
        if self.splat_radius < 0:
            raise InvalidConfig("splat_radius must be >= 0")


@dataclass
class ScaffoldFrame:
    """One rendered frame: color/depth/coverage plus the winning-splat
    opacity per pixel; ``mask`` is filled in by :func:`build_mask`."""

    color: np.ndarray  # (H, W, 3) in [0,1]
    depth: np.ndarray  # (H, W), +inf where nothing projected
    coverage: np.ndarray  # (H, W) hit counts
    opacity: np.ndarray  # (H, W) opacity of the nearest splat, 0 where empty
    mask: np.ndarray | None = None  # (H, W) bool, True = to be inpainted


def splat(
    positions: np.ndarray,
    colors: np.ndarray,
    opacities: np.ndarray,
    cam: CameraModel,
    splat_radius: int = 1,
) -> ScaffoldFrame:
    """Paint each visible point into a (2r+1)^2 pixel neighborhood.

    Nearest depth wins per pixel; coverage counts every hit. Behind-camera
    and out-of-frame points are skipped.
    """
    h, w = cam.height, cam.width
    color = np.zeros((h, w, 3))
    depth = np.full((h, w), np.inf)
    coverage = np.zeros((h, w), dtype=np.int64)
    opacity = np.zeros((h, w))

    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if positions.shape[0] == 0:
        return ScaffoldFrame(color, depth, coverage, opacity)
    colors = np.asarray(colors, dtype=float).reshape(-1, 3)
    opacities = np.asarray(opacities, dtype=float).reshape(-1)

    pix, z, valid = project(cam, positions)
    if not np.any(valid):
        return ScaffoldFrame(color, depth, coverage, opacity)
    pix, z = pix[valid], z[valid]
    cols, opas = colors[valid], opacities[valid]
    ix = np.rint(pix[:, 0]).astype(int)
    iy = np.rint(pix[:, 1]).astype(int)

    # paint far-to-near so the nearest splat ends up owning each pixel
    order = np.argsort(-z, kind="stable")
    ix, iy, z, cols, opas = ix[order], iy[order], z[order], cols[order], opas[order]
    r = int(splat_radius)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            px, py = ix + dx, iy + dy
            keep = (px >= 0) & (px < w) & (py >= 0) & (py < h)
            if not np.any(keep):
                continue
            pxk, pyk = px[keep], py[keep]
            np.add.at(coverage, (pyk, pxk), 1)
            depth[pyk, pxk] = z[keep]
            color[pyk, pxk] = cols[keep]
            opacity[pyk, pxk] = opas[keep]
    # direct assignment above lets the *last write* win per pixel, which is
    # the nearest point thanks to the far-to-near ordering; empty pixels keep
    # depth=+inf so reset their color/opacity explicitly
    empty = coverage == 0
    depth[empty] = np.inf
    color[empty] = 0.0
    opacity[empty] = 0.0
    return ScaffoldFrame(color, depth, coverage, opacity)


def build_mask(
    frame: ScaffoldFrame,
    opacity_at_pixel: np.ndarray | None = None,
    cfg: MaskConfig = MaskConfig(),
) -> np.ndarray:
    """Combine the three inpainting rules into one boolean mask.

    Rule 1: pixels never covered. Rule 2: covered pixels whose winning splat
    opacity is below the threshold. Rule 3: covered pixels with a covered
    4-neighbor whose relative depth difference |d1-d2|/min(d1,d2) exceeds the
    threshold (both sides of such an edge are masked). The mask is stored on
    the frame and returned.
    """
    opa = frame.opacity if opacity_at_pixel is None else np.asarray(opacity_at_pixel, float)
    covered = frame.coverage > 0
    mask = ~covered
    mask |= covered & (opa < cfg.opacity_threshold)

    d = frame.depth
    edge = np.zeros_like(mask)
    shifts = ((0, 1), (0, -1), (1, 0), (-1, 0))
    for dy, dx in shifts:
        d2 = np.roll(d, (dy, dx), axis=(0, 1))
        c2 = np.roll(covered, (dy, dx), axis=(0, 1))
        pair = covered & c2
        # roll wraps around the border: exclude the wrapped rows/columns
        if dy == 1:
            pair[0, :] = False
        elif dy == -1:
            pair[-1, :] = False
        if dx == 1:
            pair[:, 0] = False
        elif dx == -1:
            pair[:, -1] = False
        with np.errstate(invalid="ignore"):
            rel = np.abs(d - d2) / np.minimum(d, d2)
        edge |= pair & (rel > cfg.rel_depth_threshold)
    mask |= edge
    frame.mask = mask
    return mask
