from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from flowfill.errors import DataError, DegenerateAlignmentError, DimensionMismatchError
from flowfill.flo import flo_name, write_flo
from flowfill.flow import (
    FileFlowEstimator,
    PrecomputedFlowEstimator,
    PyramidLKEstimator,
    default_anchors,
    estimate_flow_adjacent,
    estimate_flow_nonlocal,
    flow_pairs,
)
from flowfill.homography import Homography, estimate_homography, homography_flow_field, warp_frame
from flowfill.metrics import flow_epe
from flowfill.synth import synth_scene, texture


def interior(shape, margin):
    m = np.zeros(shape[:2], dtype=bool)
    m[margin:-margin, margin:-margin] = True
    return m


@pytest.fixture(scope="module")
def textured():
    return texture(80, 96, np.random.default_rng(5))


def test_identical_frames_give_zero_flow(textured):
    flow = estimate_flow_adjacent(PyramidLKEstimator(), textured, textured)
    assert flow.shape == textured.shape[:2] + (2,)
    assert flow_epe(flow, np.zeros_like(flow)) <= 0.1


def test_translation_recovered():
    scene = synth_scene("translating_texture", size=(96, 80), frames=3, mask="none", velocity=(2, 0))
    flow = estimate_flow_adjacent(PyramidLKEstimator(), scene.frames[0], scene.frames[1])
    truth = scene.ground_truth_flows[(0, 1)]
    assert flow_epe(flow, truth, interior(flow.shape, 8)) <= 0.5


def test_file_estimator_is_pass_through(tmp_path):
    f = np.random.default_rng(0).normal(size=(6, 7, 2)).astype(np.float32)
    write_flo(tmp_path / "flow" / flo_name(3, 4), f)
    est = FileFlowEstimator(str(tmp_path))
    got = estimate_flow_adjacent(est, np.zeros((6, 7, 3)), np.zeros((6, 7, 3)), 3, 4)
    assert np.array_equal(got.astype(np.float32), f)
    with pytest.raises(DataError):
        est.estimate(None, None, 4, 3)
    with pytest.raises(DimensionMismatchError):
        est.estimate(np.zeros((5, 7, 3)), None, 3, 4)


def test_precomputed_estimator_missing_pair():
    with pytest.raises(DataError):
        PrecomputedFlowEstimator({}).estimate(None, None, 0, 1)


def test_size_mismatch_rejected(textured):
    with pytest.raises(DimensionMismatchError):
        estimate_flow_adjacent(PyramidLKEstimator(), textured, textured[:-1])


def test_nonlocal_identical_frames(textured):
    flow = estimate_flow_nonlocal(PyramidLKEstimator(), textured, textured)
    assert flow_epe(flow, np.zeros_like(flow)) <= 0.1


def test_nonlocal_large_translation():
    scene = synth_scene("translating_texture", size=(128, 96), frames=2 + 1, mask="none", velocity=(15, 0))
    flow = estimate_flow_nonlocal(PyramidLKEstimator(), scene.frames[0], scene.frames[2], 0, 2)
    truth = scene.ground_truth_flows[(0, 2)]
    assert np.allclose(truth[..., 0], 30)
    # pixels whose destination stays in view
    region = interior(flow.shape, 8)
    region[:, -38:] = False
    assert flow_epe(flow, truth, region) <= 1.0


def _warped_pair(rng):
    big = texture(140, 160, rng)
    H = Homography(np.array([[1.02, 0.01, 6.0], [-0.01, 0.99, -3.0], [1e-5, -2e-5, 1.0]]))
    frame_i = big[20:116, 20:148]
    ys, xs = np.mgrid[0:96, 0:128].astype(float)
    # frame_j(H(p)) = frame_i(p): sample the big canvas at the inverse map
    px, py = H.inverse().apply(xs, ys)
    frame_j = np.stack([_sample(big, px + 20, py + 20, c) for c in range(3)], axis=-1)
    return frame_i, frame_j, H


def _sample(img, xs, ys, c):
    return ndimage.map_coordinates(img[..., c], [ys, xs], order=1, mode="nearest")


def test_nonlocal_known_homography():
    frame_i, frame_j, H = _warped_pair(np.random.default_rng(11))
    flow = estimate_flow_nonlocal(PyramidLKEstimator(), frame_i, frame_j)
    truth = homography_flow_field(H, 128, 96)
    assert flow_epe(flow, truth, interior(flow.shape, 12)) <= 1.0


class ZeroEstimator:
    def estimate(self, frame_i, frame_j, source, target):
        return np.zeros(np.shape(frame_i)[:2] + (2,))


def test_nonlocal_composition_with_stub_estimator():
    H = Homography(np.array([[1.0, 0.02, 3.0], [0.01, 1.0, -2.0], [0.0, 1e-4, 1.0]]))
    f = np.zeros((10, 12, 3))
    flow = estimate_flow_nonlocal(ZeroEstimator(), f, f, homography=H)
    assert np.array_equal(flow, homography_flow_field(H, 12, 10))


def test_homography_self_alignment(textured):
    H = estimate_homography(textured, textured)
    assert np.abs(H.matrix - np.eye(3)).max() <= 1e-2


def test_homography_translation():
    scene = synth_scene("translating_texture", size=(128, 96), frames=3, mask="none", velocity=(5, 0))
    H = estimate_homography(scene.frames[0], scene.frames[2])
    assert H.matrix[0, 2] == pytest.approx(10.0, abs=0.5)
    assert H.matrix[1, 2] == pytest.approx(0.0, abs=0.5)


def test_homography_flat_frames_degenerate():
    flat = np.full((64, 64, 3), 0.5)
    with pytest.raises(DegenerateAlignmentError):
        estimate_homography(flat, flat)


def test_homography_flow_field_analytic():
    assert not homography_flow_field(Homography.identity(), 9, 7).any()
    f = homography_flow_field(Homography.translation(2.5, -1.0), 9, 7)
    assert np.allclose(f[..., 0], 2.5) and np.allclose(f[..., 1], -1.0)


def test_homography_flow_field_matches_projective_oracle():
    rng = np.random.default_rng(4)
    m = np.eye(3) + rng.normal(0, 0.01, size=(3, 3))
    m[2, :2] = rng.normal(0, 1e-3, size=2)
    H = Homography(m)
    f = homography_flow_field(H, 8, 8)
    mm = H.matrix
    for y in range(8):
        for x in range(8):
            q = mm @ np.array([x, y, 1.0])
            assert f[y, x, 0] == pytest.approx(q[0] / q[2] - x, abs=1e-6)
            assert f[y, x, 1] == pytest.approx(q[1] / q[2] - y, abs=1e-6)


def test_singular_homography_rejected():
    with pytest.raises(DegenerateAlignmentError):
        Homography(np.array([[1.0, 2.0, 0], [2.0, 4.0, 0], [0, 0, 1.0]]))


def test_flow_pair_schedule():
    adjacent, distant = flow_pairs(5, default_anchors(5))
    assert default_anchors(5) == [0, 2, 4]
    assert adjacent == [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3)]
    assert set(distant) == {(i, a) for a in (0, 2, 4) for i in range(5) if abs(i - a) > 1} | {
        (a, i) for a in (0, 2, 4) for i in range(5) if abs(i - a) > 1
    }
    assert all(abs(s - t) > 1 for s, t in distant)
    assert len(distant) == len(set(distant))
    assert flow_pairs(5, [0, 2, 4], use_nonlocal=False)[1] == []


def test_warp_frame_translation_aligns():
    rng = np.random.default_rng(6)
    frame = rng.random((10, 12, 3))
    shifted = warp_frame(frame, Homography.translation(2, 1))
    # sample at p + (2, 1); replicated at the far border
    assert np.array_equal(shifted[:-1, :-2], frame[1:, 2:])
    assert np.array_equal(shifted[:-1, -1], frame[1:, -1])
