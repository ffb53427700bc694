"""Homography fitting between frames: Harris corners, patch descriptors, RANSAC."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateAlignmentError, DimensionMismatchError
from .raster import pixel_grid, sample_bilinear

log = logging.getLogger(__name__)

DET_FLOOR = 1e-8


def to_gray(frame):
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame
    return frame @ np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Homography:
    """Projective map from frame-i pixel coordinates to frame-j coordinates.

    Warping frame j by this map (sampling j at ``H(p)`` for every ``p``)
    aligns it with frame i.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("homography must be a finite 3x3 matrix")
        if m[2, 2] != 0:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) < DET_FLOOR:
            raise DegenerateAlignmentError("homography is (near) singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx, ty):
        return cls(np.array([[1.0, 0, tx], [0, 1.0, ty], [0, 0, 1.0]]))

    def inverse(self):
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, xs, ys):
        m = self.matrix
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        den = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
        px = (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / den
        py = (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / den
        return px, py


def homography_flow_field(h: Homography, width: int, height: int) -> np.ndarray:
    """Displacement ``H(p) - p`` at every pixel."""
    xs, ys = pixel_grid(height, width)
    px, py = h.apply(xs, ys)
    return np.stack([px - xs, py - ys], axis=-1)


def warp_frame(frame, h: Homography):
    """Sample ``frame`` at ``H(p)``; samples falling outside are filled by edge replication."""
    frame = np.asarray(frame, dtype=np.float64)
    hgt, wid = frame.shape[:2]
    xs, ys = pixel_grid(hgt, wid)
    px, py = h.apply(xs, ys)
    px = np.clip(px, 0, wid - 1)
    py = np.clip(py, 0, hgt - 1)
    out, _ = sample_bilinear(frame, px, py)
    return out


# -- features ---------------------------------------------------------------

PATCH = 9


def harris_corners(gray, max_corners=400, k=0.04, sigma=1.5, rel_threshold=0.01, spacing=3, mask=None):
    """Harris corner ``(x, y)`` positions, strongest first.

    Gradients touching ``mask`` (missing pixels) are ignored, and no corner is
    kept whose descriptor patch would overlap it.
    """
    gray = np.asarray(gray, dtype=np.float64)
    ix = ndimage.sobel(gray, axis=1, mode="nearest")
    iy = ndimage.sobel(gray, axis=0, mode="nearest")
    blocked = None
    if mask is not None and np.any(mask):
        mask = np.asarray(mask, dtype=bool)
        near = ndimage.binary_dilation(mask, structure=np.ones((3, 3), dtype=bool))
        ix = np.where(near, 0.0, ix)
        iy = np.where(near, 0.0, iy)
        blocked = ndimage.binary_dilation(mask, structure=np.ones((PATCH, PATCH), dtype=bool))
    sxx = ndimage.gaussian_filter(ix * ix, sigma)
    syy = ndimage.gaussian_filter(iy * iy, sigma)
    sxy = ndimage.gaussian_filter(ix * iy, sigma)
    resp = sxx * syy - sxy * sxy - k * (sxx + syy) ** 2
    if blocked is not None:
        resp = np.where(blocked, 0.0, resp)
    if resp.max() <= 0:
        return np.zeros((0, 2), dtype=int)
    peaks = resp == ndimage.maximum_filter(resp, size=2 * spacing + 1, mode="constant")
    peaks &= resp > rel_threshold * resp.max()
    margin = PATCH // 2 + 1
    peaks[:margin] = peaks[-margin:] = False
    peaks[:, :margin] = peaks[:, -margin:] = False
    ys, xs = np.nonzero(peaks)
    order = np.argsort(-resp[ys, xs], kind="stable")[:max_corners]
    return np.stack([xs[order], ys[order]], axis=1)


def describe(gray, corners):
    """Zero-mean, unit-norm intensity patches; flat patches get a zero vector."""
    r = PATCH // 2
    gray = np.asarray(gray, dtype=np.float64)
    desc = np.empty((len(corners), PATCH * PATCH))
    for n, (x, y) in enumerate(corners):
        patch = gray[y - r : y + r + 1, x - r : x + r + 1].ravel()
        patch = patch - patch.mean()
        norm = np.linalg.norm(patch)
        desc[n] = patch / norm if norm > 1e-12 else 0.0
    return desc


def match_descriptors(d1, d2, ratio=0.8):
    """Nearest-neighbour matches passing the ratio test; returns index pairs."""
    if len(d1) == 0 or len(d2) < 2:
        return np.zeros((0, 2), dtype=int)
    dist = np.sqrt(np.maximum(2.0 - 2.0 * d1 @ d2.T, 0.0))
    order = np.argsort(dist, axis=1, kind="stable")
    best = dist[np.arange(len(d1)), order[:, 0]]
    second = dist[np.arange(len(d1)), order[:, 1]]
    ok = best < ratio * second
    return np.stack([np.flatnonzero(ok), order[ok, 0]], axis=1)


def _normalizer(pts):
    c = pts.mean(axis=0)
    s = np.sqrt(2) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-12)
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])


def fit_dlt(src, dst):
    """Homography mapping ``src`` points onto ``dst`` (normalised DLT, batched).

    ``src``/``dst`` are ``(..., n, 2)``; returns ``(..., 3, 3)``.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    batched = src.ndim == 3
    if not batched:
        src, dst = src[None], dst[None]
    Ts = np.stack([_normalizer(s) for s in src])
    Td = np.stack([_normalizer(d) for d in dst])
    ones = np.ones(src.shape[:2] + (1,))
    s = np.einsum("bij,bnj->bni", Ts, np.concatenate([src, ones], axis=2))
    d = np.einsum("bij,bnj->bni", Td, np.concatenate([dst, ones], axis=2))
    x, y = s[..., 0], s[..., 1]
    u, v = d[..., 0], d[..., 1]
    z = np.zeros_like(x)
    o = np.ones_like(x)
    r1 = np.stack([-x, -y, -o, z, z, z, u * x, u * y, u], axis=-1)
    r2 = np.stack([z, z, z, -x, -y, -o, v * x, v * y, v], axis=-1)
    M = np.concatenate([r1, r2], axis=1)
    _, _, vt = np.linalg.svd(M)
    H = vt[:, -1].reshape(-1, 3, 3)
    H = np.linalg.inv(Td) @ H @ Ts
    return H if batched else H[0]


def _project(H, pts):
    den = H[..., 2, 0, None] * pts[:, 0] + H[..., 2, 1, None] * pts[:, 1] + H[..., 2, 2, None]
    den = np.where(np.abs(den) < 1e-12, 1e-12, den)
    px = (H[..., 0, 0, None] * pts[:, 0] + H[..., 0, 1, None] * pts[:, 1] + H[..., 0, 2, None]) / den
    py = (H[..., 1, 0, None] * pts[:, 0] + H[..., 1, 1, None] * pts[:, 1] + H[..., 1, 2, None]) / den
    return px, py


def ransac_homography(src, dst, iterations=2000, threshold=3.0, seed=0):
    """Robust fit of ``dst ~ H(src)``; returns ``(H, inlier_mask)``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4:
        raise DegenerateAlignmentError(f"need at least 4 matches, have {n}")
    rng = np.random.default_rng(seed)
    samples = np.stack([rng.choice(n, 4, replace=False) for _ in range(iterations)])
    with np.errstate(all="ignore"):
        Hs = fit_dlt(src[samples], dst[samples])
        px, py = _project(Hs, src)
        err = np.hypot(px - dst[:, 0], py - dst[:, 1])
        # collinear samples give (near) singular maps that would collapse points onto a line
        scale = np.where(np.abs(Hs[:, 2, 2]) > 1e-12, Hs[:, 2, 2], 1.0)
        degenerate = np.abs(np.linalg.det(Hs / scale[:, None, None])) < DET_FLOOR
    err = np.where(np.isfinite(err) & ~degenerate[:, None], err, np.inf)
    inliers = err < threshold
    counts = inliers.sum(axis=1)
    best = int(np.argmax(counts))
    mask = inliers[best]
    if mask.sum() < 4:
        raise DegenerateAlignmentError(f"only {int(mask.sum())} RANSAC inliers")
    H = fit_dlt(src[mask], dst[mask])
    # one refit pass over the refined inlier set
    px, py = _project(H[None], src)
    refined = np.hypot(px[0] - dst[:, 0], py[0] - dst[:, 1]) < threshold
    if refined.sum() >= 4:
        mask = refined
        H = fit_dlt(src[mask], dst[mask])
    return H, mask


def estimate_homography(
    frame_i, frame_j, threshold=3.0, iterations=2000, ratio=0.8, seed=0, mask_i=None, mask_j=None
) -> Homography:
    """Homography taking frame-i pixel coordinates to the matching frame-j location.

    Features are not taken from near the missing regions ``mask_i``/``mask_j``,
    whose blacked-out borders would otherwise dominate the corner response.
    """
    gi, gj = to_gray(frame_i), to_gray(frame_j)
    if gi.shape != gj.shape:
        raise DimensionMismatchError(f"frame sizes differ: {gi.shape} vs {gj.shape}")
    ci = harris_corners(gi, mask=mask_i)
    cj = harris_corners(gj, mask=mask_j)
    if len(ci) < 4 or len(cj) < 4:
        raise DegenerateAlignmentError("too few corner features")
    matches = match_descriptors(describe(gi, ci), describe(gj, cj), ratio)
    if len(matches) < 4:
        raise DegenerateAlignmentError(f"only {len(matches)} feature matches")
    src = ci[matches[:, 0]].astype(np.float64)
    dst = cj[matches[:, 1]].astype(np.float64)
    H, mask = ransac_homography(src, dst, iterations, threshold, seed)
    log.debug("homography fit: %d/%d inliers", int(mask.sum()), len(mask))
    return Homography(H)
