"""Synthetic scenes with exact ground truth.

Every scene is rendered from layered textures with integer motion, so
ground-truth flow, flow edges, and per-pixel visibility are known exactly.

Scenes
------
static_hole          static texture, centre hole in the middle frames
translating_texture  rigid global translation
two_region_flow      left half translating, right half static
sweeping_occluder    periodic bars sweeping across a static background; the
                     hole sits where every background pixel is crossed by a
                     bar every couple of frames
brightness_ramp      translating texture with a global gain drift 1 + 0.01 t
grid_mask            translating texture under a stationary 5 x 4 block mask
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

SCENES = (
    "static_hole",
    "translating_texture",
    "two_region_flow",
    "sweeping_occluder",
    "brightness_ramp",
    "grid_mask",
)
MASK_KINDS = ("default", "center", "grid", "none")

_LAYER = 10_000_000
RAMP_CELL = 16


@dataclass
class SyntheticScene:
    name: str
    frames: np.ndarray  # (T, H, W, 3) inputs, missing pixels black
    masks: np.ndarray  # (T, H, W) bool
    ground_truth_frames: np.ndarray
    ground_truth_flows: dict = field(repr=False)  # (i, j) -> (H, W, 2)
    ground_truth_edges: dict = field(repr=False)  # (i, j) -> (H, W) bool
    content_ids: np.ndarray = field(repr=False)  # (T, H, W) surface point ids
    visibility: np.ndarray = field(repr=False)  # (T, H, W, T) bool, set only at missing pixels

    @property
    def num_frames(self):
        return len(self.frames)

    def visible_frames(self, t, x, y):
        return [int(f) for f in np.flatnonzero(self.visibility[t, y, x])]


def texture(height, width, rng, cell=10, lo=0.15, hi=0.8):
    """Band-limited colour value noise in ``[lo, hi]``."""
    out = np.zeros((height, width, 3))
    for scale, weight in ((cell, 0.75), (max(cell // 2, 2), 0.25)):
        gh, gw = height // scale + 4, width // scale + 4
        lattice = rng.random((gh, gw, 3))
        up = ndimage.zoom(lattice, (scale, scale, 1), order=3, mode="grid-wrap")
        out += weight * up[:height, :width]
    for ch in range(3):
        c = out[..., ch]
        span = c.max() - c.min()
        out[..., ch] = lo + (hi - lo) * (c - c.min()) / (span if span > 0 else 1.0)
    return out


def edges_from_flow(flow, jump=0.5):
    """Pixels whose right or lower neighbour moves differently (the first pixel of each step)."""
    flow = np.asarray(flow, dtype=np.float64)
    edges = np.zeros(flow.shape[:2], dtype=bool)
    dx = np.hypot(*np.moveaxis(flow[:, 1:] - flow[:, :-1], -1, 0))
    dy = np.hypot(*np.moveaxis(flow[1:] - flow[:-1], -1, 0))
    edges[:, :-1] |= dx > jump
    edges[:-1] |= dy > jump
    return edges


def grid_mask(height, width, cols=5, rows=4):
    """Stationary mask of ``cols x rows`` equal square blocks centred in a regular grid."""
    side = max(2, min(width // cols, height // rows) // 2)
    mask = np.zeros((height, width), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            x0 = int(round(c * width / cols + (width / cols - side) / 2))
            y0 = int(round(r * height / rows + (height / rows - side) / 2))
            mask[y0 : y0 + side, x0 : x0 + side] = True
    return mask


def center_mask(height, width, side=None):
    side = side or min(height, width) // 4
    mask = np.zeros((height, width), dtype=bool)
    y0, x0 = (height - side) // 2, (width - side) // 2
    mask[y0 : y0 + side, x0 : x0 + side] = True
    return mask


class _Layered:
    """Helpers shared by the scene renderers."""

    def __init__(self, t, h, w):
        self.T, self.H, self.W = t, h, w
        self.ys, self.xs = np.mgrid[0:h, 0:w]

    def canvas_crop(self, canvas, ox, oy):
        """Canvas values and ids for a crop whose top-left is at canvas ``(ox, oy)``."""
        cy = self.ys + oy
        cx = self.xs + ox
        return canvas[cy, cx], cy * canvas.shape[1] + cx


def _translating(T, H, W, rng, velocity, cell=10):
    vx, vy = velocity
    L = _Layered(T, H, W)
    pad_x, pad_y = abs(vx) * (T - 1), abs(vy) * (T - 1)
    canvas = texture(H + pad_y, W + pad_x, rng, cell=cell)
    ox0 = pad_x if vx > 0 else 0
    oy0 = pad_y if vy > 0 else 0
    frames, ids = [], []
    for t in range(T):
        img, cid = L.canvas_crop(canvas, ox0 - vx * t, oy0 - vy * t)
        frames.append(img)
        ids.append(cid)

    def flow(i, j):
        f = np.empty((H, W, 2))
        f[..., 0] = vx * (j - i)
        f[..., 1] = vy * (j - i)
        return f

    return np.stack(frames), np.stack(ids), flow


def _static(T, H, W, rng):
    return _translating(T, H, W, rng, (0, 0))


def _two_region(T, H, W, rng, velocity):
    vx, vy = velocity
    L = _Layered(T, H, W)
    left = L.xs < W // 2
    pad_x, pad_y = abs(vx) * (T - 1), abs(vy) * (T - 1)
    moving = texture(H + pad_y, W + pad_x, rng)
    still = texture(H, W, rng)
    ox0 = pad_x if vx > 0 else 0
    oy0 = pad_y if vy > 0 else 0
    frames, ids = [], []
    for t in range(T):
        img, cid = L.canvas_crop(moving, ox0 - vx * t, oy0 - vy * t)
        frames.append(np.where(left[..., None], img, still))
        ids.append(np.where(left, cid, _LAYER + L.ys * W + L.xs))

    def flow(i, j):
        f = np.zeros((H, W, 2))
        f[left, 0] = vx * (j - i)
        f[left, 1] = vy * (j - i)
        return f

    return np.stack(frames), np.stack(ids), flow


SWEEP_PERIOD = 19
SWEEP_WIDTH = 9
SWEEP_SPEED = 9


def _bars_at(L, t, period, width, speed):
    return (L.xs - speed * t) % period < width


def _sweeping(T, H, W, rng, period=SWEEP_PERIOD, width=SWEEP_WIDTH, speed=SWEEP_SPEED):
    L = _Layered(T, H, W)
    bg = texture(H, W, rng)
    pad = speed * (T - 1)
    bar_canvas = texture(H, W + pad, rng, cell=6, lo=0.05, hi=0.95)
    frames, ids = [], []
    for t in range(T):
        on_bar = _bars_at(L, t, period, width, speed)
        bar_img, bar_id = L.canvas_crop(bar_canvas, pad - speed * t, 0)
        frames.append(np.where(on_bar[..., None], bar_img, bg))
        ids.append(np.where(on_bar, _LAYER + bar_id, L.ys * W + L.xs))

    def flow(i, j):
        f = np.zeros((H, W, 2))
        f[_bars_at(L, i, period, width, speed), 0] = speed * (j - i)
        return f

    # hole columns: background at both the first and last frame, nearest the centre
    gap = ~_bars_at(L, 0, period, width, speed)[0] & ~_bars_at(L, T - 1, period, width, speed)[0]
    labels, n = ndimage.label(gap)
    centre = np.array([np.mean(np.flatnonzero(labels == k)) for k in range(1, n + 1)])
    k = 1 + int(np.argmin(np.abs(centre - (W - 1) / 2)))
    cols = labels == k
    hole = np.zeros((H, W), dtype=bool)
    hole[H // 4 : 3 * H // 4] = cols[None, :]
    masks = np.zeros((T, H, W), dtype=bool)
    masks[1 : T - 1] = hole
    return np.stack(frames), np.stack(ids), flow, masks


def _default_mask(name, T, H, W):
    masks = np.zeros((T, H, W), dtype=bool)
    if name == "static_hole":
        masks[1 : T - 1] = center_mask(H, W)
    elif name == "two_region_flow":
        masks[:] = center_mask(H, W, side=min(H, W) // 3)
    elif name == "grid_mask":
        masks[:] = grid_mask(H, W)
    else:
        masks[:] = center_mask(H, W)
    return masks


def visibility_schedule(ids, masks):
    """``vis[t, y, x, f]``: content at missing pixel ``(t, y, x)`` is known at frame ``f``."""
    T = len(ids)
    vis = np.zeros(ids.shape + (T,), dtype=bool)
    for f in range(T):
        known_ids = np.unique(ids[f][~masks[f]])
        vis[..., f] = np.isin(ids, known_ids) & masks
        vis[f, ..., f] = False
    return vis


def synth_scene(name, size=(96, 96), frames=20, seed=0, mask="default", velocity=None, anchors=None):
    """Render a named scene; ``size`` is ``(width, height)``."""
    if name not in SCENES:
        raise ValueError(f"unknown scene {name!r}; expected one of {SCENES}")
    if mask not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {mask!r}; expected one of {MASK_KINDS}")
    W, H = size
    T = frames
    if W < 32 or H < 32:
        raise ValueError("scenes need at least 32x32 pixels")
    if T < 3:
        raise ValueError("scenes need at least 3 frames")
    rng = np.random.default_rng(seed)
    gain = None
    scene_masks = None
    if name == "static_hole":
        gt, ids, flow = _static(T, H, W, rng)
    elif name in ("translating_texture", "grid_mask"):
        gt, ids, flow = _translating(T, H, W, rng, velocity or (2, 0))
    elif name == "brightness_ramp":
        # smoother texture: the test here is about the gain seam, not texture detail
        gt, ids, flow = _translating(T, H, W, rng, velocity or (2, 1), cell=RAMP_CELL)
        gain = 1.0 + 0.01 * np.arange(T)
    elif name == "two_region_flow":
        gt, ids, flow = _two_region(T, H, W, rng, velocity or (10, 0))
    else:
        gt, ids, flow, scene_masks = _sweeping(T, H, W, rng)

    if gain is not None:
        gt = gt * gain[:, None, None, None]
    gt = np.clip(gt, 0.0, 1.0)

    if mask == "default":
        masks = scene_masks if scene_masks is not None else _default_mask(name, T, H, W)
    elif mask == "center":
        masks = np.broadcast_to(center_mask(H, W), (T, H, W)).copy()
    elif mask == "grid":
        masks = np.broadcast_to(grid_mask(H, W), (T, H, W)).copy()
    else:
        masks = np.zeros((T, H, W), dtype=bool)

    anchors = anchors if anchors is not None else sorted({0, (T - 1) // 2, T - 1})
    pairs = set()
    for i in range(T - 1):
        pairs |= {(i, i + 1), (i + 1, i)}
    for a in anchors:
        for i in range(T):
            if i != a:
                pairs |= {(i, a), (a, i)}
    flows = {p: flow(*p) for p in sorted(pairs)}
    edges = {p: edges_from_flow(f) for p, f in flows.items()}

    inputs = np.where(masks[..., None], 0.0, gt)
    return SyntheticScene(
        name=name,
        frames=inputs,
        masks=masks,
        ground_truth_frames=gt,
        ground_truth_flows=flows,
        ground_truth_edges=edges,
        content_ids=ids,
        visibility=visibility_schedule(ids, masks),
    )


def local_reachability(scene: SyntheticScene, tau=5.0, masks=None):
    """Which missing pixels reach a known pixel by chaining ground-truth adjacent flow.

    Straightforward per-pixel walk over integer flows, independent of the
    vectorised chain tracer. Returns ``(T, H, W)`` bool.
    """
    masks = scene.masks if masks is None else masks
    T, H, W = masks.shape
    flows = scene.ground_truth_flows
    reach = np.zeros((T, H, W), dtype=bool)
    for t, y0, x0 in zip(*np.nonzero(masks)):
        for step in (1, -1):
            x, y, k = int(x0), int(y0), int(t)
            ok = False
            while 0 <= k + step < T:
                fu, fv = flows[(k, k + step)][y, x]
                nx, ny = int(round(x + fu)), int(round(y + fv))
                if not (0 <= nx < W and 0 <= ny < H):
                    break
                bu, bv = flows[(k + step, k)][ny, nx]
                if np.hypot(fu + bu, fv + bv) > tau:
                    break
                x, y, k = nx, ny, k + step
                if not masks[k, y, x]:
                    ok = True
                    break
            if ok:
                reach[t, y0, x0] = True
                break
    return reach
