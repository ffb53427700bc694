from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flowfill.errors import DimensionMismatchError
from flowfill.raster import (
    as_flow,
    as_frame,
    bilinear_sample,
    dilate_mask,
    finite_diff,
    flow_magnitude,
    footprint_all,
    sample_bilinear,
)

from . import oracles


def test_bilinear_constant_field():
    field = np.full((6, 7, 3), 0.37)
    assert np.allclose(bilinear_sample(field, (2.3, 4.9)), 0.37)


def test_bilinear_integer_point_is_stored_value():
    field = np.random.default_rng(0).random((8, 6, 2))
    assert np.array_equal(bilinear_sample(field, (3, 5)), field[5, 3])


def test_bilinear_hand_interpolation():
    field = np.array([[0.0, 1.0]])
    assert bilinear_sample(field, (0.25, 0.0)) == pytest.approx(0.25)


def test_bilinear_out_of_bounds_is_signalled():
    field = np.zeros((4, 4))
    assert bilinear_sample(field, (-0.01, 1)) is None
    assert bilinear_sample(field, (1, 3.0001)) is None
    assert bilinear_sample(field, (3, 3)) == 0.0


def test_bilinear_empty_field_rejected():
    with pytest.raises(ValueError):
        bilinear_sample(np.zeros((0, 0)), (0, 0))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=2, max_side=9), elements=st.floats(-5, 5)))
def test_bilinear_integer_coordinates_equal_indexing(field):
    h, w = field.shape
    ys, xs = np.mgrid[0:h, 0:w]
    vals, inside = sample_bilinear(field, xs, ys)
    assert inside.all()
    assert np.array_equal(vals, field)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(2, 7),
    st.integers(2, 7),
    st.floats(0, 1, allow_nan=False),
    st.floats(0, 1, allow_nan=False),
    st.integers(0, 2**31 - 1),
)
def test_bilinear_matches_textbook_oracle(h, w, fx, fy, seed):
    field = np.random.default_rng(seed).random((h, w, 2))
    x, y = fx * (w - 1), fy * (h - 1)
    got = bilinear_sample(field, (x, y))
    assert np.allclose(got, oracles.bilinear(field, x, y), atol=1e-12)


def test_footprint_ignores_zero_weight_taps():
    flags = np.ones((3, 3), dtype=bool)
    flags[1, 2] = False
    # exactly on column 1: the column-2 taps carry zero weight
    assert footprint_all(flags, np.array([1.0]), np.array([1.0]))[0]
    assert not footprint_all(flags, np.array([1.5]), np.array([1.0]))[0]
    assert not footprint_all(flags, np.array([-1.0]), np.array([0.0]))[0]


def test_finite_diff_constant_and_ramp():
    assert not finite_diff(np.full((4, 5, 3), 0.2)).gx.any()
    w = 6
    ramp = np.broadcast_to((np.arange(w) / (w - 1))[None, :, None], (4, w, 3))
    g = finite_diff(ramp)
    assert np.allclose(g.gx[:, :-1], 1 / (w - 1))
    assert np.all(g.gx[:, -1] == 0)
    assert np.all(g.gy == 0)


def test_finite_diff_matches_loop_oracle():
    frame = np.random.default_rng(1).random((5, 5, 3))
    g = finite_diff(frame)
    for y in range(5):
        for x in range(5):
            ex = frame[y, x + 1] - frame[y, x] if x < 4 else np.zeros(3)
            ey = frame[y + 1, x] - frame[y, x] if y < 4 else np.zeros(3)
            assert np.array_equal(g.gx[y, x], ex)
            assert np.array_equal(g.gy[y, x], ey)


def test_dilate_radius_zero_is_identity():
    m = np.random.default_rng(2).random((9, 9)) < 0.2
    assert np.array_equal(dilate_mask(m, 0), m)


def test_dilate_radius_one_is_plus():
    m = np.zeros((5, 5), dtype=bool)
    m[2, 2] = True
    d = dilate_mask(m, 1)
    assert d.sum() == 5
    assert d[1, 2] and d[3, 2] and d[2, 1] and d[2, 3]


def test_dilate_matches_brute_force_disk():
    m = np.zeros((31, 31), dtype=bool)
    m[15, 15] = True
    d = dilate_mask(m, 15)
    count = sum((x - 15) ** 2 + (y - 15) ** 2 <= 225 for y in range(31) for x in range(31))
    assert d.sum() == count


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 6), st.floats(0, 6))
def test_dilate_monotone_in_radius(seed, r1, r2):
    r1, r2 = sorted((r1, r2))
    m = np.random.default_rng(seed).random((12, 14)) < 0.05
    a, b = dilate_mask(m, r1), dilate_mask(m, r2)
    assert not (a & ~b).any()
    assert not (m & ~a).any()


def test_dilate_negative_radius_rejected():
    with pytest.raises(ValueError):
        dilate_mask(np.zeros((3, 3), dtype=bool), -1)


def test_flow_magnitude():
    assert not flow_magnitude(np.zeros((3, 4, 2))).any()
    assert np.allclose(flow_magnitude(np.broadcast_to([3.0, 4.0], (3, 4, 2))), 5.0)
    f = np.random.default_rng(3).normal(size=(4, 5, 2))
    m = flow_magnitude(f)
    for y in range(4):
        for x in range(5):
            assert m[y, x] == pytest.approx(math.hypot(*f[y, x]), abs=1e-15)


def test_shape_validation():
    with pytest.raises(DimensionMismatchError):
        as_frame(np.zeros((4, 4)))
    with pytest.raises(DimensionMismatchError):
        as_flow(np.zeros((4, 4, 3)))
    with pytest.raises(ValueError):
        as_flow(np.full((2, 2, 2), np.nan))
