import json
import math

import numpy as np
import pytest

from graspforge.errors import (
    BehindCamera,
    DegenerateFrame,
    InvalidCount,
    NonPositiveDepth,
    ParseError,
)
from graspforge.geometry import (
    CameraIntrinsics,
    CameraPose,
    DEFAULT_INTRINSICS,
    camera_from_json,
    camera_to_json,
    load_camera,
    look_at,
    project_point,
    sample_hemisphere_cameras,
    save_camera,
    unproject_pixel,
    view_looking_at,
)


def test_look_at_topdown_axis():
    pose = look_at((0, 0, 0.6), (0, 0, 0), up=(0, 1, 0))
    assert np.allclose(pose.optical_axis, [0, 0, -1], atol=1e-12)


def test_look_at_horizontal_axis():
    pose = look_at((0.6, 0, 0), (0, 0, 0), up=(0, 0, 1))
    assert np.allclose(pose.optical_axis, [-1, 0, 0], atol=1e-12)


def test_look_at_zero_baseline():
    with pytest.raises(DegenerateFrame):
        look_at((0, 0, 1), (0, 0, 1), up=(0, 1, 0))


def test_look_at_up_parallel_to_view():
    with pytest.raises(DegenerateFrame):
        look_at((0, 0, 1), (0, 0, 0), up=(0, 0, 1))


def test_look_at_orthonormal_for_random_inputs(rng):
    for _ in range(1000):
        eye = rng.uniform(-1, 1, 3)
        target = rng.uniform(-1, 1, 3)
        if np.linalg.norm(eye - target) < 1e-3:
            continue
        up = rng.uniform(-1, 1, 3)
        view_dir = target - eye
        if np.linalg.norm(np.cross(view_dir, up)) < 1e-3:
            continue
        r = look_at(eye, target, up).rotation
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


def test_project_on_axis_point(topdown_view):
    u, v, depth = project_point((0, 0, 0), topdown_view)
    assert (u, v, depth) == (63.5, 63.5, 0.6)


def test_project_offset_point_matches_pinhole_equation(topdown_view):
    # camera x offset 0.1 m at depth 0.6: u = 63.5 + 160 * 0.1 / 0.6
    point = (0.1, 0.0, 0.0)  # top-down camera x axis is world +x
    u, v, depth = project_point(point, topdown_view)
    assert abs(u - 90.16666666666667) < 1e-9
    assert abs(v - 63.5) < 1e-9
    assert abs(depth - 0.6) < 1e-12


def test_project_behind_camera(topdown_view):
    with pytest.raises(BehindCamera):
        project_point((0, 0, 1.0), topdown_view)  # above the camera


def test_unproject_center_pixel(topdown_view):
    p = unproject_pixel(63.5, 63.5, 0.6, topdown_view)
    assert np.allclose(p, [0, 0, 0], atol=1e-12)


def test_unproject_offset_pixel(topdown_view):
    p = unproject_pixel(90.16666666666667, 63.5, 0.6, topdown_view)
    assert np.allclose(p, [0.1, 0.0, 0.0], atol=1e-9)


def test_unproject_non_positive_depth(topdown_view):
    with pytest.raises(NonPositiveDepth):
        unproject_pixel(10, 10, 0.0, topdown_view)


def test_round_trip_random_in_frustum_points(rng):
    views = sample_hemisphere_cameras(5, 0.6, (0, 0, 0), seed=2,
                                      include_topdown=True)
    intr = views[0].intrinsics
    for _ in range(1000):
        view = views[rng.integers(len(views))]
        u = rng.uniform(0, intr.width - 1)
        v = rng.uniform(0, intr.height - 1)
        depth = rng.uniform(intr.z_near, intr.z_far)
        p = unproject_pixel(u, v, depth, view)
        u2, v2, d2 = project_point(p, view)
        p2 = unproject_pixel(u2, v2, d2, view)
        assert np.linalg.norm(p2 - p) < 1e-9 * (1 + np.linalg.norm(p))


def test_hemisphere_counts_and_radii():
    views = sample_hemisphere_cameras(20, 0.6, (0, 0, 0), seed=9)
    assert len(views) == 20
    for view in views:
        eye = view.pose.camera_center
        assert abs(np.linalg.norm(eye) - 0.6) < 1e-9
        assert eye[2] >= 0.0
        assert 0.0 <= view.elevation <= math.pi / 2
        # optical axis aimed at the center
        axis = view.pose.optical_axis
        assert np.linalg.norm(np.cross(axis, -eye)) < 1e-9


def test_hemisphere_topdown_first():
    views = sample_hemisphere_cameras(10, 0.6, (0, 0, 0), seed=1,
                                      include_topdown=True)
    assert views[0].elevation == pytest.approx(math.pi / 2, abs=1e-12)


def test_hemisphere_single_topdown_eye():
    views = sample_hemisphere_cameras(1, 0.6, (0, 0, 0), seed=4,
                                      include_topdown=True)
    assert np.allclose(views[0].pose.camera_center, [0, 0, 0.6], atol=1e-12)


def test_hemisphere_deterministic():
    a = sample_hemisphere_cameras(8, 0.5, (0.1, 0, 0), seed=77)
    b = sample_hemisphere_cameras(8, 0.5, (0.1, 0, 0), seed=77)
    for va, vb in zip(a, b):
        assert np.array_equal(va.pose.rotation, vb.pose.rotation)
        assert np.array_equal(va.pose.translation, vb.pose.translation)


def test_hemisphere_zero_count():
    with pytest.raises(InvalidCount):
        sample_hemisphere_cameras(0, 0.6, (0, 0, 0), seed=0)


def test_elevation_of_inclined_view():
    elev = math.radians(30)
    eye = (0.6 * math.cos(elev), 0.0, 0.6 * math.sin(elev))
    view = view_looking_at(eye, (0, 0, 0))
    assert view.elevation == pytest.approx(math.pi / 6, abs=1e-12)


def test_upward_looking_camera_rejected():
    with pytest.raises(ValueError):
        view_looking_at((0, 0, -0.5), (0, 0, 0.5), up=(0, 1, 0))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(128, 128, -1.0, 160.0, 63.5, 63.5, 0.25, 1.5)
    with pytest.raises(ValueError):
        CameraIntrinsics(128, 128, 160.0, 160.0, 63.5, 63.5, 1.5, 0.25)
    with pytest.raises(ValueError):
        CameraIntrinsics(128, 128, 160.0, 160.0, 200.0, 63.5, 0.25, 1.5)


def test_pose_validation():
    with pytest.raises(ValueError):
        CameraPose(rotation=np.eye(3) * 2.0, translation=np.zeros(3))
    refl = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        CameraPose(rotation=refl, translation=np.zeros(3))


def test_camera_json_round_trip(tmp_path, topdown_view):
    path = tmp_path / "camera.json"
    save_camera(topdown_view, path)
    loaded = load_camera(path)
    assert loaded.intrinsics == topdown_view.intrinsics
    assert np.array_equal(loaded.pose.rotation, topdown_view.pose.rotation)
    assert np.array_equal(loaded.pose.translation, topdown_view.pose.translation)
    doc = json.loads(path.read_text())
    assert set(doc) == {"width", "height", "fx", "fy", "cx", "cy",
                        "z_near", "z_far", "rotation", "translation"}
    assert len(doc["rotation"]) == 9 and len(doc["translation"]) == 3


def test_camera_json_bad_record():
    with pytest.raises(ParseError):
        camera_from_json({"width": 128})


def test_camera_json_survives_serialization(topdown_view):
    doc = json.loads(json.dumps(camera_to_json(topdown_view)))
    view = camera_from_json(doc)
    assert view.elevation == topdown_view.elevation


def test_default_intrinsics_sane():
    assert DEFAULT_INTRINSICS.width == DEFAULT_INTRINSICS.height == 128
    assert DEFAULT_INTRINSICS.z_near < DEFAULT_INTRINSICS.z_far
