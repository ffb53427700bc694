from __future__ import annotations

import json
import os

import numpy as np
import pytest
from PIL import Image

from flowfill.errors import DataError, DimensionMismatchError
from flowfill.io import (
    RunConfig,
    SequenceSpec,
    read_frame,
    read_mask,
    read_sequence,
    to_uint8,
    write_frame,
    write_report,
    write_sequence,
)


def _seq(rng, T=3, h=6, w=7):
    frames = rng.integers(0, 256, size=(T, h, w, 3)) / 255.0
    masks = rng.random((T, h, w)) < 0.3
    return frames, masks


def test_sequence_round_trip(tmp_path):
    frames, masks = _seq(np.random.default_rng(0))
    write_sequence(tmp_path / "f", frames, masks, tmp_path / "m")
    got_f, got_m = read_sequence(SequenceSpec(str(tmp_path / "f"), str(tmp_path / "m")))
    assert np.array_equal(got_f, frames) and np.array_equal(got_m, masks)
    only_f, none_m = read_sequence(SequenceSpec(str(tmp_path / "f")))
    assert np.array_equal(only_f, frames) and not none_m.any()
    sub, _ = read_sequence(SequenceSpec(str(tmp_path / "f"), start=1, stop=3))
    assert np.array_equal(sub, frames[1:3])


def test_rgb_mask_any_channel(tmp_path):
    img = np.zeros((2, 3, 3), np.uint8)
    img[0, 1, 2] = 9
    Image.fromarray(img).save(tmp_path / "m.png")
    assert read_mask(tmp_path / "m.png").tolist() == [[False, True, False], [False, False, False]]


def test_frame_quantisation():
    assert to_uint8(np.array([-0.5, 0.5, 1.5])).tolist() == [0, 128, 255]


def test_size_mismatches_name_the_file(tmp_path):
    frames, masks = _seq(np.random.default_rng(1))
    write_sequence(tmp_path / "f", frames, masks, tmp_path / "m")
    write_frame(tmp_path / "f" / "00002.png", np.zeros((5, 7, 3)))
    with pytest.raises(DimensionMismatchError, match="00002.png"):
        read_sequence(SequenceSpec(str(tmp_path / "f")))
    write_frame(tmp_path / "f" / "00002.png", frames[2])
    Image.fromarray(np.zeros((6, 8), np.uint8)).save(tmp_path / "m" / "00001.png")
    with pytest.raises(DimensionMismatchError, match="00001.png"):
        read_sequence(SequenceSpec(str(tmp_path / "f"), str(tmp_path / "m")))


def test_missing_files_and_gaps(tmp_path):
    frames, masks = _seq(np.random.default_rng(2), T=4)
    write_sequence(tmp_path / "f", frames, masks, tmp_path / "m")
    os.remove(tmp_path / "m" / "00003.png")
    with pytest.raises(DataError, match="00003.png"):
        read_sequence(SequenceSpec(str(tmp_path / "f"), str(tmp_path / "m")))
    os.remove(tmp_path / "f" / "00001.png")
    with pytest.raises(DataError, match="contiguous"):
        read_sequence(SequenceSpec(str(tmp_path / "f")))
    with pytest.raises(DataError):
        read_sequence(SequenceSpec(str(tmp_path / "absent")))
    with pytest.raises(DataError):
        read_frame(tmp_path / "absent.png")


def test_run_config_parse_and_round_trip(tmp_path):
    cfg = RunConfig.parse("tau = 3.5  # px\n\nanchors = 0,4\nuse_nonlocal = false\nfallback_dir = none\n")
    assert cfg["tau"] == 3.5 and cfg["anchors"] == [0, 4] and cfg["use_nonlocal"] is False
    assert cfg["domain"] == "gradient"
    cfg.save(tmp_path / "run.cfg")
    again = RunConfig.load(tmp_path / "run.cfg")
    assert again.values == cfg.values
    assert RunConfig.parse(RunConfig.defaults().dumps()).values == RunConfig.defaults().values
    pc = cfg.pipeline_config()
    assert pc.chain.tau == 3.5 and pc.chain.nonlocal_anchors == [0, 4] and not pc.use_nonlocal


def test_run_config_errors(tmp_path):
    with pytest.raises(DataError, match="<config>:2"):
        RunConfig.parse("tau = 1\nbogus = 3\n")
    with pytest.raises(DataError):
        RunConfig.parse("tau\n")
    with pytest.raises(DataError):
        RunConfig.parse("tau = fast\n")
    with pytest.raises(DataError):
        RunConfig.parse("use_nonlocal = maybe\n")
    with pytest.raises(DataError):
        RunConfig.load(tmp_path / "absent.cfg")
    with pytest.raises(DataError):
        RunConfig.parse("estimator = file\n").pipeline_config()
    with pytest.raises(DataError):
        RunConfig.parse("estimator = magic\n").pipeline_config()
    with pytest.raises(DataError):
        RunConfig.parse("domain = hsv\n").pipeline_config()


def test_write_report(tmp_path):
    write_report(tmp_path / "r.json", {"a": np.float64(1.5), "b": [np.int64(2)], "c": float("inf")})
    text = (tmp_path / "r.json").read_text()
    assert json.loads(text) == {"a": 1.5, "b": [2], "c": float("inf")}
