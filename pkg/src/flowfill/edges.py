"""Flow-edge extraction and completion.

Edges come from Canny on the flow magnitude, are cleared inside the hole, and
are then carried across it by one of three strategies:

``none``      leave the hole edge-free (plain diffusion completion)
``link``      join compatible edge endpoints around the hole with straight segments
``external``  union in a precomputed edge image over the hole
"""

from __future__ import annotations

import logging
import os

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError, DimensionMismatchError
from .raster import as_mask

log = logging.getLogger(__name__)

CANNY_SIGMA = 1.0
CANNY_LOW = 0.1
CANNY_HIGH = 0.2

EDGE_STRATEGIES = ("none", "link", "external")

_EIGHT = np.ones((3, 3), dtype=bool)

# neighbour offsets (dy, dx) for the four quantised gradient directions
_NMS_OFFSETS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def quantize_direction(gx, gy):
    """Map gradient angles to 0 (horizontal), 1 (45 deg), 2 (vertical), 3 (135 deg)."""
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    return (np.floor((angle + 22.5) / 45.0).astype(int)) % 4


def canny(magnitude, sigma=CANNY_SIGMA, low=CANNY_LOW, high=CANNY_HIGH, normalize=True):
    """Canny edges of a scalar raster.

    With ``normalize`` the thresholds are fractions of the largest gradient
    magnitude in the raster; otherwise they are absolute.
    """
    img = np.asarray(magnitude, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("canny needs a non-empty 2-D raster")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not 0 <= low <= high:
        raise ValueError("thresholds must satisfy 0 <= low <= high")

    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros(img.shape, dtype=bool)

    # ties between the two sides of a symmetric step go to the first pixel
    eps = 1e-9 * peak
    padded = np.pad(mag, 1)
    h, w = img.shape
    direction = quantize_direction(gx, gy)
    keep = np.zeros(img.shape, dtype=bool)
    for code, (dy, dx) in _NMS_OFFSETS.items():
        ahead = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        behind = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        sel = direction == code
        keep |= sel & (mag > behind + eps) & (mag >= ahead - eps)
    thin = np.where(keep, mag, 0.0)

    scale = peak if normalize else 1.0
    strong = thin >= high * scale
    weak = (thin >= low * scale) & (thin > 0)
    labels, count = ndimage.label(weak, structure=_EIGHT)
    if count == 0:
        return np.zeros(img.shape, dtype=bool)
    seeded = np.zeros(count + 1, dtype=bool)
    seeded[np.unique(labels[strong & weak])] = True
    seeded[0] = False
    return seeded[labels]


def suppress_hole_edges(edges, mask):
    edges = as_mask(edges)
    mask = as_mask(mask)
    if edges.shape != mask.shape:
        raise DimensionMismatchError(f"edges {edges.shape} vs mask {mask.shape}")
    return edges & ~mask


def _neighbour_count(edges):
    counts = ndimage.convolve(edges.astype(np.int32), _EIGHT.astype(np.int32), mode="constant")
    return counts - edges


def _walk_back(edges, start, steps):
    """Follow the edge away from an endpoint; returns the last pixel reached."""
    h, w = edges.shape
    prev = None
    cur = start
    for _ in range(steps):
        nxt = None
        y, x = cur
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == dx == 0:
                    continue
                q = (y + dy, x + dx)
                if 0 <= q[0] < h and 0 <= q[1] < w and edges[q] and q != prev and q != start:
                    nxt = q
                    break
            if nxt is not None:
                break
        if nxt is None:
            break
        prev, cur = cur, nxt
    return cur


def find_endpoints(edges, mask, reach=2.0, trail=5):
    """Edge endpoints near the hole with their outward continuation direction.

    Returns a list of ``((y, x), (dy, dx))`` with unit direction vectors.
    """
    edges = as_mask(edges)
    mask = as_mask(mask)
    if not mask.any():
        return []
    dist = ndimage.distance_transform_edt(~mask)
    ends = edges & (_neighbour_count(edges) == 1) & (dist <= reach) & ~mask
    out = []
    for y, x in zip(*np.nonzero(ends)):
        back = _walk_back(edges, (int(y), int(x)), trail)
        d = np.array([y - back[0], x - back[1]], dtype=np.float64)
        norm = np.hypot(*d)
        if norm == 0:
            continue
        out.append(((int(y), int(x)), tuple(d / norm)))
    return out


def _line(p, q):
    """Pixels of the 8-connected digital segment from p to q (inclusive)."""
    (y0, x0), (y1, x1) = p, q
    n = max(abs(y1 - y0), abs(x1 - x0))
    if n == 0:
        return np.array([y0]), np.array([x0])
    t = np.arange(n + 1) / n
    ys = np.rint(y0 + (y1 - y0) * t).astype(int)
    xs = np.rint(x0 + (x1 - x0) * t).astype(int)
    return ys, xs


def link_edges(edges, mask, max_angle=45.0):
    """Join edge endpoints across the hole with straight segments.

    Pairs must point toward each other within ``max_angle``; shortest pairs win
    and each endpoint is used once. Only pixels inside ``mask`` are added.
    """
    edges = as_mask(edges).copy()
    mask = as_mask(mask)
    ends = find_endpoints(edges, mask)
    cos_limit = np.cos(np.deg2rad(max_angle))
    pairs = []
    for a in range(len(ends)):
        pa, da = ends[a]
        for b in range(a + 1, len(ends)):
            pb, db = ends[b]
            seg = np.array([pb[0] - pa[0], pb[1] - pa[1]], dtype=np.float64)
            length = np.hypot(*seg)
            if length == 0:
                continue
            u = seg / length
            if u @ np.array(da) < cos_limit or (-u) @ np.array(db) < cos_limit:
                continue
            ys, xs = _line(pa, pb)
            if not mask[ys, xs].any():
                continue
            pairs.append((length, a, b))
    pairs.sort()
    used = set()
    added = 0
    for _, a, b in pairs:
        if a in used or b in used:
            continue
        used.update((a, b))
        ys, xs = _line(ends[a][0], ends[b][0])
        inside = mask[ys, xs]
        edges[ys[inside], xs[inside]] = True
        added += 1
    log.debug("linked %d edge segments across the hole", added)
    return edges


def load_edge_image(path, shape, threshold=0.5):
    """Binary edge map from a 1-channel image; ``threshold`` is a fraction of full scale."""
    if not os.path.exists(path):
        raise DataError(f"edge image not found: {path}")
    img = np.asarray(Image.open(path))
    if img.ndim == 3:
        img = img[..., 0]
    if img.shape != tuple(shape):
        raise DataError(f"edge image {path} is {img.shape}, expected {tuple(shape)}")
    full = 65535.0 if img.dtype == np.uint16 else (1.0 if img.dtype == bool else 255.0)
    return img.astype(np.float64) >= threshold * full


def complete_edges(edges, mask, strategy="link", path=None, threshold=0.5):
    """Fill edges across ``mask``. Pixels outside the mask are never changed."""
    edges = as_mask(edges)
    mask = as_mask(mask)
    if edges.shape != mask.shape:
        raise DimensionMismatchError(f"edges {edges.shape} vs mask {mask.shape}")
    if strategy == "none":
        return edges.copy()
    if strategy == "link":
        return link_edges(edges, mask)
    if strategy == "external":
        if path is None:
            raise DataError("external edge strategy needs a path")
        external = load_edge_image(path, edges.shape, threshold)
        return edges | (external & mask)
    raise ValueError(f"unknown edge strategy {strategy!r}; expected one of {EDGE_STRATEGIES}")


def edge_name(source: int, target: int) -> str:
    return f"{source:05d}_{target:05d}.png"
