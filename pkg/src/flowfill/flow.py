"""Dense flow estimation between frame pairs.

Adjacent pairs use the estimator directly. Distant pairs first align the
target frame with a homography, estimate the residual flow against the
aligned frame, and add back the homography displacement so the vectors point
into the unaligned target.
"""

from __future__ import annotations

import logging
import os
from typing import Protocol

import numpy as np
from scipy import ndimage

from .errors import DataError, DegenerateAlignmentError, DimensionMismatchError
from .flo import flo_name, read_flo
from .homography import Homography, estimate_homography, homography_flow_field, to_gray, warp_frame
from .raster import pixel_grid, sample_bilinear

log = logging.getLogger(__name__)


class FlowEstimator(Protocol):
    #: True when returned fields are final flows (no homography compensation wanted)
    precomputed: bool

    def estimate(self, frame_i, frame_j, source: int, target: int) -> np.ndarray: ...


class PyramidLKEstimator:
    """Coarse-to-fine dense Lucas-Kanade.

    Each level warps the second image by the current flow and solves the
    windowed 2x2 least-squares system at every pixel.
    """

    precomputed = False

    def __init__(self, levels=None, window=7, refinements=2, min_size=12, reg=1e-4):
        self.levels = levels
        self.window = window
        self.refinements = refinements
        self.min_size = min_size
        self.reg = reg

    def _num_levels(self, shape):
        if self.levels is not None:
            return self.levels
        n = 1
        size = min(shape)
        while n < 5 and size // 2 >= self.min_size:
            size //= 2
            n += 1
        return max(3, n) if min(shape) >= 4 * self.min_size else n

    @staticmethod
    def _pyramid(img, levels):
        pyr = [img]
        for _ in range(levels - 1):
            blurred = ndimage.gaussian_filter(pyr[-1], 1.0, mode="nearest")
            pyr.append(blurred[::2, ::2])
        return pyr

    def _refine(self, i0, i1, flow):
        h, w = i0.shape
        xs, ys = pixel_grid(h, w)
        g0y, g0x = np.gradient(i0)
        for _ in range(self.refinements):
            px = np.clip(xs + flow[..., 0], 0, w - 1)
            py = np.clip(ys + flow[..., 1], 0, h - 1)
            warped, _ = sample_bilinear(i1, px, py)
            g1y, g1x = np.gradient(warped)
            ix = 0.5 * (g0x + g1x)
            iy = 0.5 * (g0y + g1y)
            it = warped - i0
            box = lambda a: ndimage.uniform_filter(a, self.window, mode="nearest")  # noqa: E731
            sxx, syy, sxy = box(ix * ix) + self.reg, box(iy * iy) + self.reg, box(ix * iy)
            sxt, syt = box(ix * it), box(iy * it)
            det = sxx * syy - sxy * sxy
            du = (-syy * sxt + sxy * syt) / det
            dv = (sxy * sxt - sxx * syt) / det
            flow[..., 0] += du
            flow[..., 1] += dv
        return flow

    def estimate(self, frame_i, frame_j, source=0, target=1):
        g0, g1 = to_gray(frame_i), to_gray(frame_j)
        if g0.shape != g1.shape:
            raise DimensionMismatchError(f"frame sizes differ: {g0.shape} vs {g1.shape}")
        levels = self._num_levels(g0.shape)
        p0, p1 = self._pyramid(g0, levels), self._pyramid(g1, levels)
        flow = np.zeros(p0[-1].shape + (2,))
        for lvl in range(levels - 1, -1, -1):
            shape = p0[lvl].shape
            if flow.shape[:2] != shape:
                zoom = (shape[0] / flow.shape[0], shape[1] / flow.shape[1], 1)
                flow = ndimage.zoom(flow, zoom, order=1, mode="nearest") * 2.0
                flow = flow[: shape[0], : shape[1]]
            flow = self._refine(p0[lvl], p1[lvl], flow)
        return flow


class FileFlowEstimator:
    """Reads ``flow/{source:05}_{target:05}.flo`` under ``root``."""

    precomputed = True

    def __init__(self, root, subdir="flow"):
        self.root = root
        self.subdir = subdir

    def path(self, source, target):
        return os.path.join(self.root, self.subdir, flo_name(source, target))

    def estimate(self, frame_i, frame_j, source, target):
        path = self.path(source, target)
        if not os.path.exists(path):
            raise DataError(f"no stored flow for pair ({source}, {target}): {path}")
        flow = read_flo(path)
        if frame_i is not None and flow.shape[:2] != np.shape(frame_i)[:2]:
            raise DimensionMismatchError(f"{path}: flow {flow.shape[:2]} vs frame {np.shape(frame_i)[:2]}")
        return flow


class PrecomputedFlowEstimator:
    """In-memory lookup of flows keyed by ``(source, target)``."""

    precomputed = True

    def __init__(self, flows):
        self.flows = flows

    def estimate(self, frame_i, frame_j, source, target):
        try:
            return np.array(self.flows[(source, target)], dtype=np.float64)
        except KeyError:
            raise DataError(f"no stored flow for pair ({source}, {target})") from None


def _check_pair(frame_i, frame_j):
    if np.shape(frame_i) != np.shape(frame_j):
        raise DimensionMismatchError(f"frame sizes differ: {np.shape(frame_i)} vs {np.shape(frame_j)}")


def estimate_flow_adjacent(estimator, frame_i, frame_j, source=0, target=1):
    _check_pair(frame_i, frame_j)
    return np.asarray(estimator.estimate(frame_i, frame_j, source, target), dtype=np.float64)


def estimate_flow_nonlocal(estimator, frame_i, frame_j, source=0, target=2, homography=None, mask_i=None, mask_j=None):
    """Flow from frame i to a distant frame j with homography pre-alignment.

    ``mask_i``/``mask_j`` keep alignment features away from missing regions.
    """
    _check_pair(frame_i, frame_j)
    if getattr(estimator, "precomputed", False):
        return np.asarray(estimator.estimate(frame_i, frame_j, source, target), dtype=np.float64)
    h, w = np.shape(frame_i)[:2]
    if homography is None:
        try:
            homography = estimate_homography(frame_i, frame_j, mask_i=mask_i, mask_j=mask_j)
        except DegenerateAlignmentError as exc:
            log.warning("pair (%d, %d): %s; using identity alignment", source, target, exc)
            homography = Homography.identity()
    aligned = warp_frame(frame_j, homography)
    residual = np.asarray(estimator.estimate(frame_i, aligned, source, target), dtype=np.float64)
    return residual + homography_flow_field(homography, w, h)


def flow_pairs(num_frames, anchors=None, use_nonlocal=True):
    """Ordered ``(source, target)`` pairs the pipeline needs.

    Returns ``(adjacent, nonlocal)``; non-local pairs whose frames are
    neighbours are covered by the adjacent list and left out.
    """
    adjacent = []
    for i in range(num_frames - 1):
        adjacent += [(i, i + 1), (i + 1, i)]
    nonlocal_pairs = []
    if use_nonlocal:
        for a in anchors or ():
            for i in range(num_frames):
                if abs(i - a) > 1:
                    nonlocal_pairs += [(i, a), (a, i)]
    seen = set()
    nonlocal_pairs = [p for p in nonlocal_pairs if not (p in seen or seen.add(p))]
    return adjacent, nonlocal_pairs


def default_anchors(num_frames):
    """First, middle and last frame indices (deduplicated, ascending)."""
    return sorted({0, (num_frames - 1) // 2, num_frames - 1})
