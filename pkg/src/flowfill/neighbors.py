"""Temporal neighbour candidates for missing pixels.

Local candidates follow completed adjacent flow one frame at a time until the
trajectory lands on known pixels; non-local candidates take a single hop into
each anchor frame. Every hop is checked with the forward-backward cycle error
and the trajectory dies once that error exceeds ``tau``.

The work is vectorised over all target pixels of a frame
(:func:`frame_candidates`); the per-pixel functions below are thin wrappers
around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .raster import footprint_all, in_bounds, sample_bilinear

LOCAL_FORWARD = "local_forward"
LOCAL_BACKWARD = "local_backward"


def nonlocal_kind(anchor: int) -> str:
    return f"nonlocal({anchor})"


@dataclass
class ChainConfig:
    tau: float = 5.0
    nonlocal_anchors: list | None = None  # None: first, middle and last frame
    max_chain_length: int | None = None  # None: whole sequence

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.max_chain_length is not None and self.max_chain_length < 1:
            raise ValueError("max_chain_length must be at least 1")

    def anchors(self, num_frames):
        if self.nonlocal_anchors is None:
            return sorted({0, (num_frames - 1) // 2, num_frames - 1})
        bad = [a for a in self.nonlocal_anchors if not 0 <= a < num_frames]
        if bad:
            raise ValueError(f"anchor frames {bad} outside 0..{num_frames - 1}")
        return sorted(set(int(a) for a in self.nonlocal_anchors))


@dataclass
class Candidate:
    source_frame: int
    source_position: tuple  # continuous (x, y)
    color: np.ndarray
    gradient: tuple  # (gx, gy), each RGB
    error_px: float
    kind: str
    valid: bool = True


@dataclass
class CandidateSet:
    pixel: tuple  # (frame, x, y)
    candidates: list = field(default_factory=list)

    def valid(self):
        return [c for c in self.candidates if c.valid]

    def __len__(self):
        return len(self.candidates)


@dataclass
class FrameCandidates:
    """All candidates for the target pixels of one frame.

    Arrays are ``(K, N, ...)`` for ``K`` candidate kinds and ``N`` targets.
    Entries with ``valid`` False carry zeros and must be ignored.
    """

    frame: int
    ys: np.ndarray
    xs: np.ndarray
    kinds: list
    valid: np.ndarray
    error: np.ndarray
    source: np.ndarray  # source frame index, -1 when none
    position: np.ndarray  # (K, N, 2) landing (x, y)
    color: np.ndarray
    gx: np.ndarray
    gy: np.ndarray

    @property
    def count(self):
        return self.valid.sum(axis=0)

    def candidate_set(self, n) -> CandidateSet:
        out = CandidateSet((self.frame, int(self.xs[n]), int(self.ys[n])))
        for k, kind in enumerate(self.kinds):
            if not self.valid[k, n]:
                continue
            out.candidates.append(
                Candidate(
                    source_frame=int(self.source[k, n]),
                    source_position=(float(self.position[k, n, 0]), float(self.position[k, n, 1])),
                    color=self.color[k, n].copy(),
                    gradient=(self.gx[k, n].copy(), self.gy[k, n].copy()),
                    error_px=float(self.error[k, n]),
                    kind=kind,
                )
            )
        return out


def _flow(flows, pair):
    try:
        return flows[pair]
    except KeyError:
        raise DataError(f"missing flow field for pair {pair}") from None


def _hop(f_ij, f_ji, xs, ys):
    """One flow hop with its cycle error; ``ok`` is False where the hop leaves the frame."""
    fwd, ok = sample_bilinear(f_ij, xs, ys)
    nx = xs + fwd[..., 0]
    ny = ys + fwd[..., 1]
    back, inside = sample_bilinear(f_ji, nx, ny)
    ok &= inside
    err = np.hypot(fwd[..., 0] + back[..., 0], fwd[..., 1] + back[..., 1])
    return nx, ny, np.where(ok, err, np.inf), ok


def cycle_error(f_ij, f_ji, p):
    """Forward-backward error at continuous point ``p = (x, y)``; None when the hop leaves the frame."""
    f_ij = np.asarray(f_ij, dtype=np.float64)
    f_ji = np.asarray(f_ji, dtype=np.float64)
    if f_ij.shape != f_ji.shape:
        raise ValueError(f"flow pair shapes differ: {f_ij.shape} vs {f_ji.shape}")
    x, y = p
    _, _, err, ok = _hop(f_ij, f_ji, np.array([float(x)]), np.array([float(y)]))
    return float(err[0]) if ok[0] else None


def gradient_invalid(mask):
    """Pixels whose forward differences touch a missing pixel."""
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    out[..., :, :-1] |= mask[..., :, 1:]
    out[..., :-1, :] |= mask[..., 1:, :]
    return out


@dataclass
class Sources:
    """Per-iteration snapshot that candidates are sampled from."""

    frames: np.ndarray  # (T, H, W, 3)
    usable: np.ndarray  # (T, H, W) True where data may be sampled
    gx: np.ndarray  # (T, H, W, 3)
    gy: np.ndarray

    @classmethod
    def build(cls, frames, missing, domain="gradient", coherent=None):
        """Snapshot for one iteration.

        In gradient mode only pixels whose forward differences are known may
        be sampled; ``coherent`` (``(T, H, W)``) further excludes pixels whose
        differences straddle a motion boundary.
        """
        frames = np.asarray(frames, dtype=np.float64)
        missing = np.asarray(missing, dtype=bool)
        gx = np.zeros_like(frames)
        gy = np.zeros_like(frames)
        gx[:, :, :-1] = frames[:, :, 1:] - frames[:, :, :-1]
        gy[:, :-1] = frames[:, 1:] - frames[:, :-1]
        if domain == "gradient":
            usable = ~gradient_invalid(missing)
            # the padded last column/row carries no real difference to copy
            usable[:, :, -1] = False
            usable[:, -1, :] = False
            if coherent is not None:
                usable &= np.asarray(coherent, dtype=bool)
        else:
            usable = ~missing
        return cls(frames, usable, gx, gy)


def _empty(k, n):
    return dict(
        valid=np.zeros((k, n), dtype=bool),
        error=np.zeros((k, n)),
        source=np.full((k, n), -1, dtype=np.intp),
        position=np.zeros((k, n, 2)),
        color=np.zeros((k, n, 3)),
        gx=np.zeros((k, n, 3)),
        gy=np.zeros((k, n, 3)),
    )


def _record(out, k, sel, frame, xs, ys, err, src: Sources):
    out["valid"][k, sel] = True
    out["error"][k, sel] = err
    out["source"][k, sel] = frame
    out["position"][k, sel, 0] = xs
    out["position"][k, sel, 1] = ys
    out["color"][k, sel] = sample_bilinear(src.frames[frame], xs, ys)[0]
    out["gx"][k, sel] = sample_bilinear(src.gx[frame], xs, ys)[0]
    out["gy"][k, sel] = sample_bilinear(src.gy[frame], xs, ys)[0]


def _trace(out, k, t, xs, ys, step, flows, src: Sources, config: ChainConfig):
    T = len(src.frames)
    n = len(xs)
    px = xs.astype(np.float64)
    py = ys.astype(np.float64)
    alive = np.arange(n)
    worst = np.zeros(n)
    limit = config.max_chain_length or T
    frame = t
    for _ in range(limit):
        nxt = frame + step
        if not 0 <= nxt < T or len(alive) == 0:
            break
        nx, ny, err, ok = _hop(_flow(flows, (frame, nxt)), _flow(flows, (nxt, frame)), px[alive], py[alive])
        ok &= err <= config.tau
        alive, nx, ny, err = alive[ok], nx[ok], ny[ok], err[ok]
        worst[alive] = np.maximum(worst[alive], err)
        px[alive], py[alive] = nx, ny
        landed = footprint_all(src.usable[nxt], nx, ny)
        if landed.any():
            _record(out, k, alive[landed], nxt, nx[landed], ny[landed], worst[alive[landed]], src)
        alive = alive[~landed]
        frame = nxt


def _nonlocal(out, k, t, a, xs, ys, flows, src: Sources, config: ChainConfig):
    nx, ny, err, ok = _hop(_flow(flows, (t, a)), _flow(flows, (a, t)), xs.astype(np.float64), ys.astype(np.float64))
    ok &= err <= config.tau
    ok &= footprint_all(src.usable[a], nx, ny)
    if ok.any():
        _record(out, k, np.flatnonzero(ok), a, nx[ok], ny[ok], err[ok], src)


def frame_candidates(t, targets, src: Sources, flows, config: ChainConfig, use_nonlocal=True) -> FrameCandidates:
    """Candidates for every True pixel of ``targets`` in frame ``t``.

    Kinds are ordered local forward, local backward, then anchors ascending
    (the current frame is never its own anchor).
    """
    T = len(src.frames)
    ys, xs = np.nonzero(np.asarray(targets, dtype=bool))
    anchors = [a for a in config.anchors(T) if a != t] if use_nonlocal else []
    kinds = [LOCAL_FORWARD, LOCAL_BACKWARD] + [nonlocal_kind(a) for a in anchors]
    out = _empty(len(kinds), len(ys))
    if len(ys):
        _trace(out, 0, t, xs, ys, +1, flows, src, config)
        _trace(out, 1, t, xs, ys, -1, flows, src, config)
        for k, a in enumerate(anchors, start=2):
            _nonlocal(out, k, t, a, xs, ys, flows, src, config)
    return FrameCandidates(t, ys, xs, kinds, **out)


# -- per-pixel interface ------------------------------------------------------


def _sources(frames, masks, domain):
    frames = np.asarray(frames, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if frames.shape[:3] != masks.shape:
        raise DataError(f"frames {frames.shape[:3]} and masks {masks.shape} disagree")
    return Sources.build(frames, masks, domain)


def _single(t, x, y, shape):
    target = np.zeros(shape[1:], dtype=bool)
    if not in_bounds(shape[1:], x, y):
        raise ValueError(f"pixel ({x}, {y}) outside the frame")
    target[y, x] = True
    return target


def trace_chain(frames, masks, flows, start, direction="forward", config=None, domain="color"):
    """Follow adjacent flow from ``start = (frame, x, y)``; returns a Candidate or None."""
    config = config or ChainConfig()
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    src = _sources(frames, masks, domain)
    t, x, y = start
    xs, ys = np.array([x]), np.array([y])
    out = _empty(1, 1)
    _trace(out, 0, t, xs, ys, 1 if direction == "forward" else -1, flows, src, config)
    kind = LOCAL_FORWARD if direction == "forward" else LOCAL_BACKWARD
    fc = FrameCandidates(t, ys, xs, [kind], **out)
    cands = fc.candidate_set(0).candidates
    return cands[0] if cands else None


def nonlocal_candidates(frames, masks, flows, pixel, config=None, domain="color"):
    """Single-hop candidates into each anchor; invalid attempts are returned with ``valid`` False."""
    config = config or ChainConfig()
    src = _sources(frames, masks, domain)
    t, x, y = pixel
    xs, ys = np.array([x]), np.array([y])
    result = []
    for a in config.anchors(len(src.frames)):
        if a == t:
            continue
        nx, ny, err, ok = _hop(_flow(flows, (t, a)), _flow(flows, (a, t)), xs.astype(float), ys.astype(float))
        if not ok[0]:
            continue
        valid = bool(err[0] <= config.tau and footprint_all(src.usable[a], nx, ny)[0])
        result.append(
            Candidate(
                source_frame=a,
                source_position=(float(nx[0]), float(ny[0])),
                color=sample_bilinear(src.frames[a], nx, ny)[0][0],
                gradient=(sample_bilinear(src.gx[a], nx, ny)[0][0], sample_bilinear(src.gy[a], nx, ny)[0][0]),
                error_px=float(err[0]),
                kind=nonlocal_kind(a),
                valid=valid,
            )
        )
    return result


def gather_candidates(frames, masks, flows, pixel, config=None, use_nonlocal=True, domain="color"):
    """Valid candidates of one pixel, ordered local forward, local backward, anchors ascending."""
    config = config or ChainConfig()
    src = _sources(frames, masks, domain)
    t, x, y = pixel
    fc = frame_candidates(t, _single(t, x, y, src.usable.shape), src, flows, config, use_nonlocal)
    return fc.candidate_set(0)
