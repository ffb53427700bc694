from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image
from scipy import ndimage

from flowfill.edges import (
    canny,
    complete_edges,
    find_endpoints,
    link_edges,
    load_edge_image,
    quantize_direction,
    suppress_hole_edges,
)
from flowfill.errors import DataError, DimensionMismatchError
from flowfill.synth import synth_scene

from . import oracles


def test_constant_raster_has_no_edges():
    assert not canny(np.full((12, 12), 3.0)).any()


def test_vertical_step_gives_single_line():
    img = np.zeros((20, 20))
    img[:, 10:] = 10.0
    edges = canny(img)
    assert abs(int(edges.sum()) - 20) <= 2
    cols = np.unique(np.nonzero(edges)[1])
    assert len(cols) == 1 and cols[0] in (9, 10)


def test_vertical_step_matches_loop_oracle():
    img = np.zeros((20, 20))
    img[:, 10:] = 10.0
    assert np.array_equal(canny(img), oracles.canny_loops(img))


def test_subthreshold_step_without_normalisation():
    img = np.zeros((16, 16))
    img[:, 8:] = 0.01
    assert not canny(img, normalize=False).any()


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_canny_matches_loop_oracle_on_random_rasters(seed):
    rng = np.random.default_rng(seed)
    img = ndimage.zoom(rng.random((5, 6)), 3, order=1) * rng.uniform(0.5, 20)
    assert np.array_equal(canny(img), oracles.canny_loops(img))


def test_canny_is_pure():
    img = np.random.default_rng(1).random((15, 15))
    assert np.array_equal(canny(img), canny(img.copy()))


def test_canny_rejects_bad_parameters():
    with pytest.raises(ValueError):
        canny(np.zeros((4, 4)), sigma=0)
    with pytest.raises(ValueError):
        canny(np.zeros((4, 4)), low=0.3, high=0.2)
    with pytest.raises(ValueError):
        canny(np.zeros(4))


def test_quantize_direction():
    assert quantize_direction(np.array([1.0, 1.0, 0.0, -1.0]), np.array([0.0, 1.0, 1.0, 1.0])).tolist() == [0, 1, 2, 3]


def test_suppress_hole_edges():
    edges = np.random.default_rng(2).random((10, 10)) < 0.3
    assert np.array_equal(suppress_hole_edges(edges, np.zeros((10, 10), bool)), edges)
    assert not suppress_hole_edges(edges, np.ones((10, 10), bool)).any()
    line = np.zeros((12, 12), dtype=bool)
    line[6, :] = True
    hole = np.zeros_like(line)
    hole[3:9, 4:8] = True
    out = suppress_hole_edges(line, hole)
    expected = {(y, x) for y, x in zip(*np.nonzero(line))} - {(y, x) for y, x in zip(*np.nonzero(hole))}
    assert {(y, x) for y, x in zip(*np.nonzero(out))} == expected
    with pytest.raises(DimensionMismatchError):
        suppress_hole_edges(line, hole[:-1])


def _interrupted_line():
    edges = np.zeros((20, 24), dtype=bool)
    edges[10, :] = True
    hole = np.zeros_like(edges)
    hole[6:15, 8:16] = True
    return edges & ~hole, hole


def test_none_strategy_is_identity():
    edges, hole = _interrupted_line()
    assert np.array_equal(complete_edges(edges, hole, "none"), edges)


def test_link_joins_interrupted_line():
    edges, hole = _interrupted_line()
    ends = find_endpoints(edges, hole)
    assert sorted(p for p, _ in ends) == [(10, 7), (10, 16)]
    out = complete_edges(edges, hole, "link")
    # flood fill from one endpoint reaches the other
    labels, _ = ndimage.label(out, structure=np.ones((3, 3)))
    assert labels[10, 7] == labels[10, 16] != 0
    assert np.array_equal(out & ~hole, edges)


def test_link_does_not_join_diverging_ends():
    edges = np.zeros((20, 24), dtype=bool)
    edges[10, :8] = True
    edges[:6, 12] = True
    hole = np.zeros_like(edges)
    hole[6:15, 8:16] = True
    out = link_edges(edges, hole)
    assert np.array_equal(out, edges)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_link_only_adds_inside_mask(seed):
    rng = np.random.default_rng(seed)
    edges = np.zeros((24, 24), dtype=bool)
    for _ in range(4):
        y0, x0, y1, x1 = rng.integers(0, 24, size=4)
        n = max(abs(y1 - y0), abs(x1 - x0), 1)
        t = np.linspace(0, 1, n + 1)
        edges[np.rint(y0 + (y1 - y0) * t).astype(int), np.rint(x0 + (x1 - x0) * t).astype(int)] = True
    hole = np.zeros_like(edges)
    y, x = rng.integers(4, 14, size=2)
    hole[y : y + 8, x : x + 8] = True
    edges &= ~hole
    out = link_edges(edges, hole)
    assert np.array_equal(out & ~hole, edges)
    added = out & ~edges
    segments = ndimage.label(added, structure=np.ones((3, 3)))[1]
    assert segments <= len(find_endpoints(edges, hole)) // 2


def test_external_strategy_restricted_to_mask(tmp_path):
    scene = synth_scene("two_region_flow", size=(48, 40), frames=3)
    gt = scene.ground_truth_edges[(0, 1)]
    hole = scene.masks[0]
    path = tmp_path / "e.png"
    Image.fromarray(np.where(gt, 255, 0).astype(np.uint8)).save(path)
    out = complete_edges(suppress_hole_edges(gt, hole), hole, "external", path=str(path))
    assert np.array_equal(out[hole], gt[hole])
    assert np.array_equal(out[~hole], gt[~hole])


def test_external_strategy_errors(tmp_path):
    edges, hole = _interrupted_line()
    with pytest.raises(DataError):
        complete_edges(edges, hole, "external")
    with pytest.raises(DataError):
        complete_edges(edges, hole, "external", path=str(tmp_path / "absent.png"))
    Image.fromarray(np.zeros((5, 5), np.uint8)).save(tmp_path / "small.png")
    with pytest.raises(DataError):
        load_edge_image(str(tmp_path / "small.png"), edges.shape)
    with pytest.raises(ValueError):
        complete_edges(edges, hole, "magic")


def test_edge_image_threshold(tmp_path):
    img = np.array([[0, 100, 128, 255]], dtype=np.uint8)
    Image.fromarray(img).save(tmp_path / "t.png")
    assert load_edge_image(str(tmp_path / "t.png"), (1, 4)).tolist() == [[False, False, True, True]]
