"""Iterative video completion.

Flow is estimated and completed once over the original masks. Each iteration
then gathers candidates for all frames against a snapshot of the current
fills, fuses them, and, if pixels remain, fills the frame with the most
missing pixels with a single-image method so the next pass can propagate it.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .completion import FlowCompletionProblem, complete_flow
from .edges import CANNY_HIGH, CANNY_LOW, CANNY_SIGMA, EDGE_STRATEGIES, canny, complete_edges, edge_name, suppress_hole_edges
from .errors import DataError, IterationBudgetError
from .flow import PyramidLKEstimator, estimate_flow_adjacent, estimate_flow_nonlocal, flow_pairs
from .fusion import FusionConfig, fill_frame, poisson_reconstruct
from .neighbors import ChainConfig, Sources, frame_candidates, gradient_invalid
from .raster import GradientField, as_frame, as_mask, dilate_mask, flow_magnitude

log = logging.getLogger(__name__)

FALLBACKS = ("diffusion", "external")


@dataclass
class PipelineConfig:
    chain: ChainConfig = field(default_factory=ChainConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    edge_strategy: str = "link"
    edge_dir: str | None = None
    edge_threshold: float = 0.5
    canny_sigma: float = CANNY_SIGMA
    canny_low: float = CANNY_LOW
    canny_high: float = CANNY_HIGH
    dilation: float = 15.0
    max_iterations: int = 20
    use_nonlocal: bool = True
    fallback: str = "diffusion"
    fallback_dir: str | None = None
    workers: int = 1
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.edge_strategy not in EDGE_STRATEGIES:
            raise ValueError(f"edge_strategy must be one of {EDGE_STRATEGIES}")
        if self.edge_strategy == "external" and not self.edge_dir:
            raise ValueError("edge_strategy 'external' needs edge_dir")
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")
        if self.fallback == "external" and not self.fallback_dir:
            raise ValueError("fallback 'external' needs fallback_dir")
        if self.dilation < 0:
            raise ValueError("dilation must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def domain(self):
        return self.fusion.domain


@dataclass
class IterationStats:
    iteration: int
    missing_before: int
    propagated: int
    key_frame: int | None
    key_frame_filled: int
    missing_after: int


@dataclass
class RunReport:
    hole_pixels: int
    iterations: list = field(default_factory=list)
    filled_by: np.ndarray | None = field(default=None, repr=False)  # per pixel: 0 known, n>0 propagation pass n, -n fallback in pass n

    @property
    def propagated(self):
        return sum(s.propagated for s in self.iterations)

    @property
    def key_frame_fills(self):
        return sum(s.key_frame is not None for s in self.iterations)

    @property
    def propagated_fraction(self):
        return self.propagated / self.hole_pixels if self.hole_pixels else 1.0

    @property
    def first_pass_fraction(self):
        if not self.hole_pixels:
            return 1.0
        return (self.iterations[0].propagated if self.iterations else 0) / self.hole_pixels

    def as_dict(self):
        return {
            "hole_pixels": self.hole_pixels,
            "propagated": self.propagated,
            "propagated_fraction": self.propagated_fraction,
            "first_pass_fraction": self.first_pass_fraction,
            "key_frame_fills": self.key_frame_fills,
            "iterations": [vars(s) for s in self.iterations],
        }


@dataclass
class PipelineResult:
    frames: np.ndarray
    report: RunReport
    flows: dict = field(repr=False)  # completed flows keyed (source, target)


def select_key_frame(masks) -> int:
    """Frame with the most missing pixels; ties go to the lowest index."""
    masks = np.asarray(masks, dtype=bool)
    counts = masks.reshape(len(masks), -1).sum(axis=1)
    if len(counts) == 0 or counts.max() == 0:
        raise ValueError("no missing pixels left to select a key frame from")
    return int(np.argmax(counts))


def inpaint_name(index: int) -> str:
    return f"{index:05d}.png"


def single_image_fill(frame, mask, method="diffusion", path=None, config: FusionConfig | None = None):
    """Fill ``mask`` in a single frame without temporal information.

    ``diffusion`` is a harmonic fill from the known boundary; ``external``
    copies the masked pixels from an already completed image at ``path``.
    """
    frame = as_frame(frame)
    mask = as_mask(mask)
    if not mask.any():
        return frame.copy()
    if method == "diffusion":
        zeros = np.zeros_like(frame)
        return poisson_reconstruct(frame, mask, GradientField(zeros, zeros), config)
    if method == "external":
        from .io import read_frame

        if path is None or not os.path.exists(path):
            raise DataError(f"external fill image not found: {path}")
        filled = read_frame(path)
        if filled.shape != frame.shape:
            raise DataError(f"external fill {path} is {filled.shape[:2]}, expected {frame.shape[:2]}")
        out = frame.copy()
        out[mask] = filled[mask]
        return out
    raise ValueError(f"unknown single-image method {method!r}")


def _map(workers, fn, items):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def compute_flows(frames, masks, config: PipelineConfig, estimator=None):
    """Raw flows for every pair the loop needs, estimated on frames with holes blacked out."""
    estimator = estimator or PyramidLKEstimator()
    T = len(frames)
    anchors = config.chain.anchors(T)
    adjacent, distant = flow_pairs(T, anchors, config.use_nonlocal)
    black = np.where(masks[..., None], 0.0, frames)

    def one(pair):
        s, t = pair
        if abs(s - t) == 1:
            return estimate_flow_adjacent(estimator, black[s], black[t], s, t)
        return estimate_flow_nonlocal(estimator, black[s], black[t], s, t, mask_i=masks[s], mask_j=masks[t])

    pairs = adjacent + distant
    return dict(zip(pairs, _map(config.workers, one, pairs)))


def completed_edges(flow, hole, config: PipelineConfig, pair):
    edges = canny(flow_magnitude(flow), config.canny_sigma, config.canny_low, config.canny_high)
    edges = suppress_hole_edges(edges, hole)
    path = os.path.join(config.edge_dir, edge_name(*pair)) if config.edge_dir else None
    return complete_edges(edges, hole, config.edge_strategy, path=path, threshold=config.edge_threshold)


def completion_holes(masks, dilation):
    """Per-frame completion region: the dilated mask, or the mask itself when dilation would cover the frame."""
    holes = []
    shrunk = []
    for t, m in enumerate(masks):
        hole = dilate_mask(m, dilation)
        if hole.all() and not m.all():
            hole = np.asarray(m, dtype=bool)
            shrunk.append(t)
        holes.append(hole)
    if shrunk:
        log.warning("dilated mask covers frames %s; completing their flows over the undilated mask", shrunk)
    return holes


def complete_flows(flows, masks, config: PipelineConfig):
    """Edge-guided completion of every flow over its source frame's dilated mask."""
    holes = completion_holes(masks, config.dilation)

    def one(item):
        (s, t), flow = item
        hole = holes[s]
        if not hole.any():
            return np.array(flow, dtype=np.float64)
        if hole.all():
            log.warning("frame %d is entirely missing; its flow is set to zero", s)
            return np.zeros_like(flow, dtype=np.float64)
        edges = completed_edges(flow, hole, config, (s, t))
        problem = FlowCompletionProblem(
            flow, hole, edges, config.fusion.solver_tolerance, config.fusion.max_iterations
        )
        return complete_flow(problem)

    items = sorted(flows.items())
    return dict(zip([k for k, _ in items], _map(config.workers, one, items)))


MOTION_JUMP = 1.0


def coherent_differences(flows, t, num_frames, jump=MOTION_JUMP):
    """Forward differences of frame ``t`` that stay on one motion layer.

    A difference is incoherent when the completed flow to either adjacent
    frame changes by more than ``jump`` pixels across it.
    """
    cx = cy = None
    for s in (t - 1, t + 1):
        if not 0 <= s < num_frames:
            continue
        f = flows[(t, s)]
        jx = np.ones(f.shape[:2], dtype=bool)
        jy = np.ones(f.shape[:2], dtype=bool)
        jx[:, :-1] = np.hypot(*np.moveaxis(f[:, 1:] - f[:, :-1], -1, 0)) <= jump
        jy[:-1] = np.hypot(*np.moveaxis(f[1:] - f[:-1], -1, 0)) <= jump
        cx = jx if cx is None else cx & jx
        cy = jy if cy is None else cy & jy
    return cx, cy


def _checkpoint(directory, iteration, frames):
    from .io import write_frame

    sub = os.path.join(directory, f"iter_{iteration:02d}")
    os.makedirs(sub, exist_ok=True)
    for t, f in enumerate(frames):
        write_frame(os.path.join(sub, f"{t:05d}.png"), f)


def validate_inputs(frames, masks):
    frames = np.asarray(frames, dtype=np.float64)
    masks = np.asarray(masks)
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise DataError(f"frames must be (T, H, W, 3), got {frames.shape}")
    if masks.shape != frames.shape[:3]:
        raise DataError(f"masks {masks.shape} do not match frames {frames.shape[:3]}")
    if len(frames) < 2:
        raise DataError("need at least 2 frames")
    if not np.all(np.isfinite(frames)):
        raise DataError("frames contain non-finite samples")
    return frames, masks.astype(bool)


def run(frames, masks, config: PipelineConfig | None = None, estimator=None, flows=None) -> PipelineResult:
    """Complete every missing pixel of a sequence.

    ``flows`` may supply already completed flows (keyed ``(source, target)``)
    to skip estimation and completion.
    """
    config = config or PipelineConfig()
    frames, masks = validate_inputs(frames, masks)
    T = len(frames)
    report = RunReport(hole_pixels=int(masks.sum()), filled_by=np.zeros(masks.shape, dtype=np.int16))
    if not masks.any():
        return PipelineResult(frames.copy(), report, {})

    if flows is None:
        flows = complete_flows(compute_flows(frames, masks, config, estimator), masks, config)

    current = np.where(masks[..., None], 0.0, frames)
    missing = masks.copy()
    domain = config.fusion.domain
    coherent = [coherent_differences(flows, t, T) if domain == "gradient" else None for t in range(T)]
    coherent_px = np.stack([cx & cy for cx, cy in coherent]) if domain == "gradient" else None
    for it in range(1, config.max_iterations + 1):
        before = int(missing.sum())
        src = Sources.build(current, missing, domain, coherent_px)
        todo = [t for t in range(T) if missing[t].any()]

        def fill(t):
            targets = gradient_invalid(missing[t]) if domain == "gradient" else missing[t]
            cands = frame_candidates(t, targets, src, flows, config.chain, config.use_nonlocal)
            return fill_frame(current[t], missing[t], cands, config.fusion, coherent[t])

        results = _map(config.workers, fill, todo)
        for t, (new_frame, remaining) in zip(todo, results):
            report.filled_by[t][missing[t] & ~remaining] = it
            current[t] = new_frame
            missing[t] = remaining
        propagated = before - int(missing.sum())

        key = None
        key_filled = 0
        if missing.any():
            key = select_key_frame(missing)
            path = os.path.join(config.fallback_dir, inpaint_name(key)) if config.fallback_dir else None
            current[key] = single_image_fill(current[key], missing[key], config.fallback, path, config.fusion)
            key_filled = int(missing[key].sum())
            report.filled_by[key][missing[key]] = -it
            missing[key] = False
        stats = IterationStats(it, before, propagated, key, key_filled, int(missing.sum()))
        report.iterations.append(stats)
        log.info(
            "iteration %d: %d missing, %d propagated, key frame %s (%d px), %d left",
            it, before, propagated, key, key_filled, stats.missing_after,
        )
        if config.checkpoint_dir:
            _checkpoint(config.checkpoint_dir, it, current)
        if not missing.any():
            break

    if missing.any():
        raise IterationBudgetError(
            f"{int(missing.sum())} pixels still missing after {config.max_iterations} iterations",
            missing=int(missing.sum()),
        )
    # known input pixels pass through untouched
    out = np.where(masks[..., None], current, frames)
    return PipelineResult(out, report, flows)
