"""Evaluation metrics: the epipolar suite (normalized 8-point fundamental
matrix, seeded RANSAC, Sampson error, EE-median, EIR) and PSNR/SSIM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import (
    DegenerateConfiguration,
    DegenerateDenominator,
    DimensionMismatch,
    InvalidConfig,
    NoConsensus,
)


@dataclass
class CorrespondenceSet:
    """Matched pixel pairs between two frames."""

    x1: np.ndarray  # (N, 2)
    x2: np.ndarray  # (N, 2)
    source: str = "ground_truth"

    def __post_init__(self):
        self.x1 = np.asarray(self.x1, dtype=float).reshape(-1, 2)
        self.x2 = np.asarray(self.x2, dtype=float).reshape(-1, 2)
        if self.x1.shape != self.x2.shape:
            raise DimensionMismatch(f"x1 {self.x1.shape} vs x2 {self.x2.shape}")
        if not (np.isfinite(self.x1).all() and np.isfinite(self.x2).all()):
            raise InvalidConfig("correspondence coordinates must be finite")

    def __len__(self) -> int:
        return self.x1.shape[0]


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.hstack([pts, np.ones((pts.shape[0], 1))])


def _sampson_raw(x1, x2, f):
    """Numerator^2 over denominator terms; returns (err2_num, denom) arrays."""
    h1 = _homogeneous(x1)
    h2 = _homogeneous(x2)
    fx1 = h1 @ f.T  # rows F @ x1
    ftx2 = h2 @ f  # rows F^T @ x2
    num = np.sum(h2 * fx1, axis=1)
    denom = fx1[:, 0] ** 2 + fx1[:, 1] ** 2 + ftx2[:, 0] ** 2 + ftx2[:, 1] ** 2
    return num * num, denom


def sampson_error(x1, x2, f: np.ndarray):
    """First-order geometric error of correspondences under F, in pixels.

    Accepts single points ``(2,)`` or stacks ``(N, 2)``; raises
    DegenerateDenominator if a point sits at both epipoles.
    """
    f = np.asarray(f, dtype=float).reshape(3, 3)
    single = np.asarray(x1).ndim == 1
    num2, denom = _sampson_raw(x1, x2, f)
    if np.any(denom <= 1e-18):
        raise DegenerateDenominator("Sampson denominator vanished")
    err = np.sqrt(num2 / denom)
    return float(err[0]) if single else err


def _sampson_safe(x1, x2, f):
    """Like sampson_error but degenerate denominators give +inf (RANSAC use)."""
    num2, denom = _sampson_raw(x1, x2, f)
    bad = denom <= 1e-18
    denom = np.where(bad, 1.0, denom)
    err = np.sqrt(num2 / denom)
    err[bad] = np.inf
    return err


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(np.sum((pts - centroid) ** 2, axis=1)).mean()
    if d < 1e-12:
        raise DegenerateConfiguration("coincident points cannot be normalized")
    s = np.sqrt(2.0) / d
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def epipolar_design_rank(corr: CorrespondenceSet) -> int:
    """Rank of the full 8-point design matrix (Hartley-normalized when the
    points allow it).

    Rank < 8 means a multi-parameter family of fundamental matrices explains
    every pair exactly (zero parallax or pure camera rotation): the pairs are
    perfectly consistent with *some* valid two-view geometry, but no unique F
    is identifiable.
    """
    try:
        t1 = _normalizing_transform(corr.x1)
        t2 = _normalizing_transform(corr.x2)
        h1 = _homogeneous(corr.x1) @ t1.T
        h2 = _homogeneous(corr.x2) @ t2.T
    except DegenerateConfiguration:
        h1, h2 = _homogeneous(corr.x1), _homogeneous(corr.x2)
    a = np.einsum("ni,nj->nij", h2, h1).reshape(-1, 9)
    return int(np.linalg.matrix_rank(a))


def eight_point(corr: CorrespondenceSet) -> np.ndarray:
    """Hartley-normalized linear fundamental-matrix estimate.

    Runs on all pairs; enforces rank 2 via SVD and returns F with unit
    Frobenius norm. Raises DegenerateConfiguration when the design matrix
    rank is below 8 (e.g. zero-parallax or planar-degenerate input).
    """
    if len(corr) < 8:
        raise DegenerateConfiguration(f"need >= 8 pairs, got {len(corr)}")
    t1 = _normalizing_transform(corr.x1)
    t2 = _normalizing_transform(corr.x2)
    h1 = _homogeneous(corr.x1) @ t1.T
    h2 = _homogeneous(corr.x2) @ t2.T
    a = np.einsum("ni,nj->nij", h2, h1).reshape(-1, 9)
    if np.linalg.matrix_rank(a) < 8:
        raise DegenerateConfiguration("design matrix rank < 8")
    _, _, vt = np.linalg.svd(a)
    f_n = vt[-1].reshape(3, 3)
    u, s, vt2 = np.linalg.svd(f_n)
    f_n = u @ np.diag([s[0], s[1], 0.0]) @ vt2
    f = t2.T @ f_n @ t1
    return f / np.linalg.norm(f)


def ransac_fundamental(
    corr: CorrespondenceSet,
    inlier_threshold: float = 1.0,
    iterations: int = 2000,
    seed: int = 0,
):
    """Seeded RANSAC over 8-point samples.

    Models are scored by inlier count with median-Sampson-error tiebreak; the
    winner is refit on its inlier set and the inliers re-evaluated once.
    Raises NoConsensus when no model reaches 8 inliers.
    """
    n = len(corr)
    if n < 8:
        raise NoConsensus(f"need >= 8 pairs, got {n}")
    rng = np.random.default_rng(seed)
    best = None  # (count, median, F, inlier_mask)
    for _ in range(iterations):
        idx = rng.choice(n, size=8, replace=False)
        try:
            f = eight_point(CorrespondenceSet(corr.x1[idx], corr.x2[idx], corr.source))
        except DegenerateConfiguration:
            continue
        err = _sampson_safe(corr.x1, corr.x2, f)
        inliers = err < inlier_threshold
        count = int(inliers.sum())
        if count < 8:
            continue
        med = float(np.median(err[inliers]))
        if best is None or (count, -med) > (best[0], -best[1]):
            best = (count, med, f, inliers)
    if best is None:
        raise NoConsensus("no sample reached 8 inliers")

    _, _, f, inliers = best
    try:
        f_refit = eight_point(CorrespondenceSet(corr.x1[inliers], corr.x2[inliers], corr.source))
        final = _sampson_safe(corr.x1, corr.x2, f_refit) < inlier_threshold
        if final.sum() >= 8:
            return f_refit, np.flatnonzero(final)
    except DegenerateConfiguration:
        pass
    return f, np.flatnonzero(inliers)


def epipolar_metrics(
    corr: CorrespondenceSet,
    inlier_threshold: float = 1.0,
    iterations: int = 2000,
    seed: int = 0,
):
    """(EE_median, EIR): median Sampson error over the RANSAC inlier set and
    the inlier fraction over all pairs."""
    f, inliers = ransac_fundamental(corr, inlier_threshold, iterations, seed)
    err = _sampson_safe(corr.x1[inliers], corr.x2[inliers], f)
    return float(np.median(err)), float(len(inliers) / len(corr))


# ---------------------------------------------------------------------------
# image metrics
# ---------------------------------------------------------------------------

def _check_images(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0,1]; +inf when the
    images are numerically identical (MSE < 1e-12)."""
    a, b = _check_images(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with the standard 11x11 Gaussian window
    (sigma=1.5, C1=0.01^2, C2=0.03^2), averaged over valid windows and
    channels; images are expected in [0,1]."""
    a, b = _check_images(a, b)
    if a.shape[0] < 11 or a.shape[1] < 11:
        raise DimensionMismatch("images must be at least 11x11 for SSIM")
    win = gaussian_window(11, 1.5)
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = convolve2d(x, win, mode="valid")
        mu_y = convolve2d(y, win, mode="valid")
        xx = convolve2d(x * x, win, mode="valid") - mu_x * mu_x
        yy = convolve2d(y * y, win, mode="valid") - mu_y * mu_y
        xy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
