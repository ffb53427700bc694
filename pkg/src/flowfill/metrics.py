"""Image and flow quality metrics: PSNR, SSIM, endpoint error."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _same(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _region(region, shape):
    if region is None:
        return np.ones(shape[:2], dtype=bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != tuple(shape[:2]):
        raise DimensionMismatchError(f"region {region.shape} vs image {shape[:2]}")
    if not region.any():
        raise ValueError("metric region is empty")
    return region


def psnr(a, b, region=None) -> float:
    """PSNR in dB for unit-range images over ``region``; ``inf`` when identical."""
    a, b = _same(a, b)
    sel = _region(region, a.shape)
    diff = (a - b)[sel]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim_map(a, b):
    """Per-pixel SSIM averaged over channels (11x11 Gaussian, sigma 1.5)."""
    a, b = _same(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    radius = SSIM_WINDOW // 2
    blur = lambda x: ndimage.gaussian_filter(x, SSIM_SIGMA, truncate=radius / SSIM_SIGMA, mode="reflect")  # noqa: E731
    out = np.zeros(a.shape[:2])
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = blur(x), blur(y)
        vx = blur(x * x) - mx * mx
        vy = blur(y * y) - my * my
        cov = blur(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        out += num / den
    return out / a.shape[2]


def ssim(a, b, region=None) -> float:
    """Mean SSIM over pixels whose full window lies inside the image (and ``region``)."""
    smap = ssim_map(a, b)
    h, w = smap.shape
    r = SSIM_WINDOW // 2
    valid = np.zeros((h, w), dtype=bool)
    valid[r : h - r, r : w - r] = True
    if region is not None:
        region = _region(region, smap.shape)
        inner = valid & region
        # regions touching the border fall back to the reflect-padded map
        valid = inner if inner.any() else region
    return float(smap[valid].mean())


def flow_epe(f, g, region=None) -> float:
    f, g = _same(f, g)
    sel = _region(region, f.shape)
    d = f - g
    return float(np.mean(np.hypot(d[..., 0], d[..., 1])[sel]))
