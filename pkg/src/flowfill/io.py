"""On-disk sequences, run configuration files, and reports.

Layout: ``frames/00000.png ...`` and ``masks/00000.png ...`` with matching
names; mask pixels that are nonzero in any channel are missing.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError, DimensionMismatchError
from .fusion import FusionConfig
from .neighbors import ChainConfig
from .pipeline import PipelineConfig

FRAME_RE = re.compile(r"^(\d+)\.png$")


def frame_name(index: int) -> str:
    return f"{index:05d}.png"


def read_frame(path) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"frame not found: {path}")
    with Image.open(path) as img:
        data = np.asarray(img.convert("RGB"))
    return data.astype(np.float64) / 255.0


def to_uint8(frame) -> np.ndarray:
    return np.rint(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_frame(path, frame):
    Image.fromarray(to_uint8(frame), mode="RGB").save(path)


def read_mask(path) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"mask not found: {path}")
    with Image.open(path) as img:
        data = np.asarray(img)
    if data.ndim == 3:
        return np.any(data != 0, axis=2)
    return data != 0


def write_mask(path, mask):
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L").save(path)


@dataclass
class SequenceSpec:
    frames_dir: str
    masks_dir: str | None = None  # None: nothing missing
    start: int | None = None
    stop: int | None = None  # exclusive

    def indices(self):
        if not os.path.isdir(self.frames_dir):
            raise DataError(f"frames directory not found: {self.frames_dir}")
        found = sorted(int(m.group(1)) for m in map(FRAME_RE.match, os.listdir(self.frames_dir)) if m)
        if self.start is not None:
            found = [i for i in found if i >= self.start]
        if self.stop is not None:
            found = [i for i in found if i < self.stop]
        if not found:
            raise DataError(f"no frames named NNNNN.png in {self.frames_dir}")
        gaps = sorted(set(range(found[0], found[-1] + 1)) - set(found))
        if gaps:
            raise DataError(f"frame indices are not contiguous; missing {gaps[:5]}")
        return found


def read_sequence(spec: SequenceSpec):
    """Load frames and masks; every file is checked before anything is returned."""
    frames, masks = [], []
    for i in spec.indices():
        name = frame_name(i)
        frame = read_frame(os.path.join(spec.frames_dir, name))
        if frames and frame.shape != frames[0].shape:
            raise DimensionMismatchError(f"frame {name} is {frame.shape[:2]}, expected {frames[0].shape[:2]}")
        if spec.masks_dir is None:
            mask = np.zeros(frame.shape[:2], dtype=bool)
        else:
            path = os.path.join(spec.masks_dir, name)
            mask = read_mask(path)
            if mask.shape != frame.shape[:2]:
                raise DimensionMismatchError(f"mask {path} is {mask.shape}, frame is {frame.shape[:2]}")
        frames.append(frame)
        masks.append(mask)
    return np.stack(frames), np.stack(masks)


def write_sequence(directory, frames, masks=None, masks_directory=None):
    os.makedirs(directory, exist_ok=True)
    for t, frame in enumerate(frames):
        write_frame(os.path.join(directory, frame_name(t)), frame)
    if masks is not None:
        os.makedirs(masks_directory, exist_ok=True)
        for t, mask in enumerate(masks):
            write_mask(os.path.join(masks_directory, frame_name(t)), mask)


# -- run configuration ---------------------------------------------------------


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(kind):
    def parse(text):
        return None if text.strip().lower() in ("", "none") else kind(text)

    return parse


def _int_list(text):
    if text.strip().lower() in ("", "none"):
        return None
    return [int(v) for v in text.split(",") if v.strip()]


# key -> (parser, default)
RUN_KEYS = {
    "tau": (float, 5.0),
    "anchors": (_int_list, None),
    "max_chain_length": (_opt(int), None),
    "temperature": (float, 0.1),
    "domain": (str, "gradient"),
    "solver_tolerance": (float, 1e-6),
    "solver_max_iterations": (int, 10_000),
    "edge_strategy": (str, "link"),
    "edge_dir": (_opt(str), None),
    "edge_threshold": (float, 0.5),
    "canny_sigma": (float, 1.0),
    "canny_low": (float, 0.1),
    "canny_high": (float, 0.2),
    "dilation": (float, 15.0),
    "max_iterations": (int, 20),
    "use_nonlocal": (_bool, True),
    "fallback": (str, "diffusion"),
    "fallback_dir": (_opt(str), None),
    "estimator": (str, "builtin"),
    "flow_dir": (_opt(str), None),
    "workers": (int, 1),
    "checkpoint_dir": (_opt(str), None),
}

ESTIMATORS = ("builtin", "file")


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls):
        return cls({k: d for k, (_, d) in RUN_KEYS.items()})

    def update(self, key, value):
        if key not in RUN_KEYS:
            raise DataError(f"unknown configuration key {key!r}")
        parser = RUN_KEYS[key][0]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise DataError(f"bad value for {key}: {exc}") from None
        self.values[key] = value

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def parse(cls, text, source="<config>"):
        cfg = cls.defaults()
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{source}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                cfg.update(key, value)
            except DataError as exc:
                raise DataError(f"{source}:{n}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise DataError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), path)

    def dumps(self):
        lines = []
        for key in RUN_KEYS:
            v = self.values[key]
            if isinstance(v, list):
                v = ",".join(str(a) for a in v)
            lines.append(f"{key} = {'none' if v is None else str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    def pipeline_config(self) -> PipelineConfig:
        v = self.values
        if v["estimator"] not in ESTIMATORS:
            raise DataError(f"estimator must be one of {ESTIMATORS}")
        if v["estimator"] == "file" and not v["flow_dir"]:
            raise DataError("estimator 'file' needs flow_dir")
        try:
            return PipelineConfig(
                chain=ChainConfig(v["tau"], v["anchors"], v["max_chain_length"]),
                fusion=FusionConfig(v["temperature"], v["domain"], v["solver_tolerance"], v["solver_max_iterations"]),
                edge_strategy=v["edge_strategy"],
                edge_dir=v["edge_dir"],
                edge_threshold=v["edge_threshold"],
                canny_sigma=v["canny_sigma"],
                canny_low=v["canny_low"],
                canny_high=v["canny_high"],
                dilation=v["dilation"],
                max_iterations=v["max_iterations"],
                use_nonlocal=v["use_nonlocal"],
                fallback=v["fallback"],
                fallback_dir=v["fallback_dir"],
                workers=v["workers"],
                checkpoint_dir=v["checkpoint_dir"],
            )
        except ValueError as exc:
            raise DataError(f"invalid configuration: {exc}") from None


def write_report(path, report: dict):
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if dataclasses.is_dataclass(o):
            return dataclasses.asdict(o)
        raise TypeError(f"cannot serialise {type(o).__name__}")

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=default, allow_nan=True)
        fh.write("\n")
