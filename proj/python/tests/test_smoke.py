import math

import numpy as np
import pytest

import voxfuse


def test_iou_of_identical_and_disjoint_boxes():
    a = voxfuse.Box3D([10.0, 0.0, 0.0], 4.0, 2.0, 1.5, yaw=0.3)
    b = voxfuse.Box3D([30.0, 0.0, 0.0], 4.0, 2.0, 1.5)
    assert voxfuse.iou3d(a, a) == pytest.approx(1.0)
    assert voxfuse.iou3d(a, b) == 0.0
    assert a.volume() == pytest.approx(12.0)


def test_iou_half_overlap_closed_form():
    a = voxfuse.Box3D([0.0, 0.0, 0.0], 2.0, 2.0, 2.0)
    b = voxfuse.Box3D([1.0, 0.0, 0.0], 2.0, 2.0, 2.0)
    assert voxfuse.iou3d(a, b) == pytest.approx(4.0 / 12.0)


def test_nms_keeps_the_best_of_overlapping_boxes():
    boxes = [
        voxfuse.Box3D([0.0, 0.0, 0.0], 4.0, 2.0, 1.5, score=0.6),
        voxfuse.Box3D([0.1, 0.0, 0.0], 4.0, 2.0, 1.5, score=0.9),
        voxfuse.Box3D([20.0, 0.0, 0.0], 4.0, 2.0, 1.5, score=0.1),
    ]
    kept = voxfuse.nms(boxes, 0.5)
    assert [b.score for b in kept] == [0.9, 0.1]


def test_invalid_input_raises_with_code():
    with pytest.raises(voxfuse.VoxfuseError) as info:
        voxfuse.parse_modalities("R,E")
    assert info.value.code == "invalid argument"
    assert voxfuse.parse_modalities("l,t") == "T,L"


def test_projection_matches_pinhole_model():
    K = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
    pts = np.array([[0.5, 0.2, 4.0], [-1.0, 0.4, 6.0]])
    uvd = voxfuse.project_points(K, np.eye(3), np.zeros(3), pts)
    assert uvd[0] == pytest.approx([500 * 0.5 / 4 + 320, 500 * 0.2 / 4 + 240, 4.0])
    assert uvd[1, 2] == pytest.approx(6.0)


def test_point_cloud_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-50, 50, (100, 3)).astype(np.float32).astype(np.float64)
    feats = rng.uniform(0, 1, (100, 2)).astype(np.float32).astype(np.float64)
    path = tmp_path / "r.dsrt"
    voxfuse.write_point_cloud(path, pts, feats, "radar4d")
    back = voxfuse.read_point_cloud(path)
    assert back["sensor"] == "radar4d"
    np.testing.assert_array_equal(back["points"], pts)
    np.testing.assert_array_equal(back["features"], feats)
    with pytest.raises(voxfuse.VoxfuseError):
        voxfuse.read_point_cloud(tmp_path / "missing.dsrt")


def test_synthesize_and_run(tmp_path):
    n = voxfuse.synthesize({"seed": 5, "num_scenes": 2, "options": {"max_objects": 3}}, tmp_path / "data")
    assert n == 2
    out = voxfuse.run({"data_dir": "data", "modalities": "L"}, tmp_path)
    rows = {(r["condition"], r["class"], r["bin"]): r for r in out["metrics"]}
    vehicle = rows[("all", "vehicle", "all")]
    assert vehicle["ap"] == "NA" or math.isclose(float(vehicle["ap"]), 1.0)
    again = voxfuse.run({"data_dir": "data", "modalities": "L", "jobs": 2}, tmp_path)
    assert again["metrics_csv"] == out["metrics_csv"]
