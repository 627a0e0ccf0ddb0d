"""Python bindings for the voxfuse detection framework."""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Any

from ._core import (
    Box3D,
    VoxfuseError,
    iou3d,
    nms,
    parse_modalities,
    project_points,
    read_point_cloud,
    write_point_cloud,
)
from . import _core

__all__ = [
    "Box3D",
    "VoxfuseError",
    "iou3d",
    "nms",
    "parse_modalities",
    "project_points",
    "read_point_cloud",
    "write_point_cloud",
    "synthesize",
    "run",
]


def synthesize(config: dict[str, Any], out_dir: str | os.PathLike) -> int:
    """Writes a synthetic dataset; returns the number of frames."""
    return _core._synthesize(json.dumps(config), os.fspath(out_dir))


def run(config: dict[str, Any], base_dir: str | os.PathLike = ".") -> dict[str, Any]:
    """Runs the pipeline. Relative paths in `config` resolve against `base_dir`.

    Returns {"metrics": [row dicts], "metrics_csv": str, "detections": dict}.
    """
    text, dets = _core._run(json.dumps(config), os.fspath(os.path.abspath(base_dir)))
    return {
        "metrics": list(csv.DictReader(io.StringIO(text))),
        "metrics_csv": text,
        "detections": json.loads(dets),
    }
