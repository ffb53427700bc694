from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flowfill.errors import DataError
from flowfill.flo import FLO_MAGIC, decode_flo, encode_flo, flo_name, read_flo, write_flo


def test_header_layout():
    flow = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    buf = encode_flo(flow)
    magic, w, h = struct.unpack("<fii", buf[:12])
    assert magic == np.float32(FLO_MAGIC) and (w, h) == (3, 2)
    # interleaved (u, v), row-major
    assert struct.unpack("<12f", buf[12:]) == tuple(range(12))


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(
        np.float32,
        st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(2)),
        elements=st.floats(-1e6, 1e6, width=32, allow_nan=False),
    )
)
def test_round_trip_bit_exact(flow):
    buf = encode_flo(flow)
    back = decode_flo(buf)
    assert back.tobytes() == flow.tobytes()
    assert encode_flo(back) == buf


def test_file_round_trip(tmp_path):
    flow = np.random.default_rng(0).normal(size=(7, 5, 2)).astype(np.float32)
    path = tmp_path / "sub" / flo_name(1, 2)
    write_flo(path, flow)
    assert path.name == "00001_00002.flo"
    assert np.array_equal(read_flo(path), flow)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(bad):
    flow = np.zeros((3, 3, 2), dtype=np.float32)
    flow[1, 1, 0] = bad
    with pytest.raises(ValueError):
        encode_flo(flow)


def test_float64_overflow_rejected():
    with pytest.raises(ValueError):
        encode_flo(np.full((1, 1, 2), 1e300))


def test_bad_files(tmp_path):
    with pytest.raises(DataError):
        read_flo(tmp_path / "absent.flo")
    with pytest.raises(DataError):
        decode_flo(b"\x00" * 4)
    with pytest.raises(DataError):
        decode_flo(struct.pack("<fii", 1.0, 1, 1) + b"\x00" * 8)
    with pytest.raises(DataError):
        decode_flo(struct.pack("<fii", FLO_MAGIC, 2, 2) + b"\x00" * 8)
    with pytest.raises(DataError):
        decode_flo(struct.pack("<fii", FLO_MAGIC, 0, 2))
    with pytest.raises(ValueError):
        encode_flo(np.zeros((3, 3, 3)))
