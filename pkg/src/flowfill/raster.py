"""Raster primitives.

Frames are ``(H, W, 3)`` float arrays in [0, 1], masks are ``(H, W)`` bool
arrays (True = missing), flow fields are ``(H, W, 2)`` float arrays holding
``(u, v)`` displacements in pixels. Plain numpy arrays are used throughout;
the helpers here validate shapes at module boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError

# Bilinear taps whose weight falls below this are not part of the footprint.
TAP_EPS = 1e-9


@dataclass(frozen=True)
class GradientField:
    """Forward-difference gradients, each ``(H, W, C)``."""

    gx: np.ndarray
    gy: np.ndarray

    @property
    def shape(self):
        return self.gx.shape


def as_frame(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionMismatchError(f"frame must be (H, W, 3), got {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite samples")
    return frame


def as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionMismatchError(f"mask must be (H, W), got {mask.shape}")
    return mask.astype(bool, copy=False)


def as_flow(flow) -> np.ndarray:
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise DimensionMismatchError(f"flow must be (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite components")
    return flow


def check_same_size(*arrays, names=None):
    sizes = [a.shape[:2] for a in arrays]
    if len(set(sizes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise DimensionMismatchError(f"size mismatch between {label}: {sizes}")


def _taps(coord, size):
    """Left tap index and fractional weight along one axis."""
    c0 = np.clip(np.floor(coord), 0, max(size - 2, 0)).astype(np.intp)
    frac = coord - c0
    c1 = np.minimum(c0 + 1, size - 1)
    return c0, c1, frac


def in_bounds(shape, xs, ys):
    h, w = shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)


def sample_bilinear(field, xs, ys):
    """Vectorised bilinear sampling.

    Returns ``(values, inside)``. ``values`` has shape ``xs.shape + field.shape[2:]``;
    entries where ``inside`` is False are zero and must not be used.
    """
    field = np.asarray(field)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = field.shape[:2]
    inside = in_bounds(field.shape, xs, ys)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0, x1, fx = _taps(xc, w)
    y0, y1, fy = _taps(yc, h)
    extra = (Ellipsis,) + (None,) * (field.ndim - 2)
    fx = fx[extra]
    fy = fy[extra]
    top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
    vals = top * (1 - fy) + bot * fy
    vals = np.where(inside[extra], vals, 0.0)
    return vals, inside


def bilinear_sample(field, point):
    """Sample ``field`` at a continuous ``(x, y)`` point.

    Returns None when the point lies outside ``[0, W-1] x [0, H-1]``.
    """
    field = np.asarray(field)
    if field.size == 0:
        raise ValueError("cannot sample an empty field")
    x, y = point
    vals, inside = sample_bilinear(field, np.array([x]), np.array([y]))
    if not inside[0]:
        return None
    out = vals[0]
    return out.item() if np.ndim(out) == 0 else out


def footprint_all(flags, xs, ys):
    """True where every bilinear tap with non-negligible weight has ``flags`` set.

    Points outside the raster are reported False.
    """
    flags = np.asarray(flags, dtype=bool)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = flags.shape
    inside = in_bounds(flags.shape, xs, ys)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0, x1, fx = _taps(xc, w)
    y0, y1, fy = _taps(yc, h)
    ok = inside.copy()
    for yy, wy in ((y0, 1 - fy), (y1, fy)):
        for xx, wx in ((x0, 1 - fx), (x1, fx)):
            used = (wy * wx) > TAP_EPS
            ok &= ~used | flags[yy, xx]
    return ok


def finite_diff(frame) -> GradientField:
    """Forward differences; the last column of gx and last row of gy are zero."""
    frame = np.asarray(frame, dtype=np.float64)
    gx = np.zeros_like(frame)
    gy = np.zeros_like(frame)
    gx[:, :-1] = frame[:, 1:] - frame[:, :-1]
    gy[:-1] = frame[1:] - frame[:-1]
    return GradientField(gx, gy)


def disk(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= radius * radius


def dilate_mask(mask, radius: float) -> np.ndarray:
    """Grow ``mask`` by a Euclidean disk of ``radius`` pixels."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    mask = as_mask(mask)
    if radius < 1 or not mask.any():
        return mask.copy()
    # distance to the nearest missing pixel; exact Euclidean
    dist = ndimage.distance_transform_edt(~mask)
    return dist <= radius


def flow_magnitude(flow) -> np.ndarray:
    flow = np.asarray(flow, dtype=np.float64)
    return np.hypot(flow[..., 0], flow[..., 1])


def pixel_grid(h, w):
    """``(xs, ys)`` float coordinate grids."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return xs, ys
