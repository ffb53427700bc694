"""Confidence-weighted candidate fusion and Poisson reconstruction.

In gradient mode the candidates' colour gradients are averaged and colours
are recovered by a Poisson solve with the known pixels as boundary values; in
colour mode the averaged colours are written directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import linsys
from .neighbors import FrameCandidates, gradient_invalid
from .raster import GradientField, as_frame, as_mask, check_same_size, finite_diff

log = logging.getLogger(__name__)

DOMAINS = ("gradient", "color")


@dataclass
class FusionConfig:
    temperature: float = 0.1
    domain: str = "gradient"
    solver_tolerance: float = 1e-6
    max_iterations: int = 10_000

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not self.solver_tolerance > 0:
            raise ValueError("solver_tolerance must be positive")


def candidate_weights(errors, temperature=0.1):
    """Unnormalised confidence ``exp(-d / T)`` per candidate."""
    errors = np.asarray(errors, dtype=np.float64)
    return np.exp(-errors / temperature)


def _weighted_mean(values, weights):
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape[0] == 0:
        raise ValueError("cannot fuse an empty candidate set")
    total = weights.sum(axis=0)
    if np.any(total <= 0):
        raise ValueError("candidate weights must have a positive sum")
    w = weights.reshape(weights.shape + (1,) * (values.ndim - weights.ndim))
    return (w * values).sum(axis=0) / total.reshape(total.shape + (1,) * (values.ndim - weights.ndim))


def fuse_color(colors, weights):
    """Weighted mean over the leading (candidate) axis."""
    return _weighted_mean(colors, weights)


def fuse_gradient(gradients, weights):
    """Weighted mean of ``(gx, gy)`` candidate gradients; returns ``(gx, gy)``."""
    gx, gy = gradients
    return _weighted_mean(gx, weights), _weighted_mean(gy, weights)


def _fused(cands: FrameCandidates, config: FusionConfig):
    """Fused colour and gradients at targets with at least one valid candidate."""
    has = cands.count > 0
    err = np.where(cands.valid, cands.error, np.inf)[:, has]
    # shifting by the smallest error leaves normalised weights unchanged and avoids underflow
    shift = err.min(axis=0) if err.size else np.zeros(0)
    w = np.where(cands.valid[:, has], candidate_weights(err - shift, config.temperature), 0.0)
    color = fuse_color(cands.color[:, has], w)
    gx = _weighted_mean(cands.gx[:, has], w)
    gy = _weighted_mean(cands.gy[:, has], w)
    return has, color, gx, gy


def poisson_reconstruct(frame, mask, gradients: GradientField, config: FusionConfig | None = None, *, valid=None, known=None, anchor=None):
    """Colours at ``mask`` pixels whose forward differences best match ``gradients``.

    ``valid`` marks pixels whose ``gx``/``gy`` may be used as targets (default
    all); a ``(valid_x, valid_y)`` pair sets the two directions separately; ``known`` marks Dirichlet pixels (default ``~mask``). Unknown regions
    with no path to a known pixel are pulled weakly toward ``anchor`` (default
    the mean known colour). Only ``mask`` pixels change; they are clamped to
    [0, 1] after the solve.
    """
    config = config or FusionConfig()
    frame = as_frame(frame)
    mask = as_mask(mask)
    check_same_size(frame, mask, gradients.gx, gradients.gy, names=("frame", "mask", "gx", "gy"))
    out = frame.copy()
    if not mask.any():
        return out
    known = ~mask if known is None else as_mask(known) & ~mask
    if valid is None:
        valid = np.ones(mask.shape, dtype=bool)
    vx, vy = (as_mask(v) for v in valid) if isinstance(valid, tuple) else (as_mask(valid),) * 2
    system = linsys.assemble(mask, known, frame, gradients.gx, gradients.gy, vx, vy)
    isolated = system.isolated()
    if anchor is None and isolated.any():
        fill = frame[known].mean(axis=0) if known.any() else np.full(3, 0.5)
        anchor = np.broadcast_to(fill, (system.n, 3))
    x = linsys.solve(system, tol=config.solver_tolerance, maxiter=config.max_iterations, anchor=anchor)
    out[system.ys, system.xs] = np.clip(x, 0.0, 1.0)
    return out


def fill_frame(frame, mask, cands: FrameCandidates, config: FusionConfig | None = None, coherent=None):
    """Fuse candidates into ``frame``; returns ``(frame, still_missing)``.

    Colour mode targets the missing pixels. Gradient mode targets every pixel
    whose forward differences touch a missing pixel, solves for the missing
    pixels that have candidates, and leaves the rest missing. ``coherent`` is
    an optional ``(x, y)`` pair of maps marking forward differences that do
    not straddle a motion boundary; only those carry fused gradients.
    """
    config = config or FusionConfig()
    frame = as_frame(frame)
    mask = as_mask(mask)
    out = frame.copy()
    if not mask.any() or len(cands.ys) == 0 or not cands.valid.any():
        return out, mask.copy()
    has, color, gx, gy = _fused(cands, config)
    ys, xs = cands.ys[has], cands.xs[has]

    if config.domain == "color":
        fill = mask[ys, xs]
        out[ys[fill], xs[fill]] = np.clip(color[fill], 0.0, 1.0)
        remaining = mask.copy()
        remaining[ys[fill], xs[fill]] = False
        return out, remaining

    own = finite_diff(frame)
    tgx, tgy = own.gx.copy(), own.gy.copy()
    tgx[ys, xs] = gx
    tgy[ys, xs] = gy
    covered = np.zeros(mask.shape, dtype=bool)
    covered[ys, xs] = True
    usable = covered | ~gradient_invalid(mask)
    ux, uy = usable, usable
    if coherent is not None:
        ux, uy = usable & as_mask(coherent[0]), usable & as_mask(coherent[1])
    unknown = mask & covered
    anchor_img = np.zeros_like(frame)
    anchor_img[ys, xs] = color
    system_anchor = anchor_img[unknown]
    solved = poisson_reconstruct(
        out, unknown, GradientField(tgx, tgy), config, valid=(ux, uy), known=~mask, anchor=system_anchor
    )
    return solved, mask & ~unknown
