"""Pinhole camera model, pose construction and hemisphere view sampling.

Conventions (fixed for the whole package):
  * World frame is right-handed with +z up; the table plane is z = 0.
  * Camera frame is the computer-vision convention: +x right, +y down,
    +z forward along the optical axis.  A world point p maps to the camera
    frame as ``x_c = R @ p + t``.
  * "Depth" always means distance along the optical axis (camera z), not
    Euclidean ray length.

All types are immutable after construction and all operations are pure
functions, so values can be shared freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BehindCamera, DegenerateFrame, InvalidCount, NonPositiveDepth, ParseError

_ORTHO_TOL = 1e-9
_TABLE_NORMAL = np.array([0.0, 0.0, 1.0])

DEFAULT_MIN_ELEVATION = math.radians(15.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus the usable depth range in meters."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    z_near: float
    z_far: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not (0 < self.z_near < self.z_far):
            raise ValueError("require 0 < z_near < z_far")


# Desk-scale stand-in intrinsics; real depth-camera values are configurable.
DEFAULT_INTRINSICS = CameraIntrinsics(
    width=128, height=128, fx=160.0, fy=160.0, cx=63.5, cy=63.5,
    z_near=0.25, z_far=1.5,
)


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: x_c = rotation @ x_w + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rotation).reshape(3, 3)
        t = _frozen(self.translation).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if np.max(np.abs(r.T @ r - np.eye(3))) >= _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) >= _ORTHO_TOL:
            raise ValueError("rotation must have determinant 1")

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction (camera +z) expressed in world coordinates."""
        return self.rotation[2].copy()


@dataclass(frozen=True)
class CameraView:
    """A camera: intrinsics plus pose, with its table-plane elevation cached.

    Elevation is the angle between the optical axis and the table plane,
    pi/2 for a camera looking straight down.  Upward-looking cameras are
    rejected since every consumer assumes views from above the table.
    """

    intrinsics: CameraIntrinsics
    pose: CameraPose
    elevation: float = field(init=False)

    def __post_init__(self):
        axis = self.pose.optical_axis
        s = float(np.clip(-axis @ _TABLE_NORMAL, -1.0, 1.0))
        elev = math.asin(s)
        if elev < -_ORTHO_TOL:
            raise ValueError("camera optical axis points above the table plane")
        object.__setattr__(self, "elevation", min(max(elev, 0.0), math.pi / 2))

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> CameraPose:
    """Build a world-to-camera pose with the optical axis from eye to target.

    The camera frame is right-handed with +z pointing at the target and
    +y pointing image-down.  Raises DegenerateFrame for a zero baseline or
    for an up vector parallel to the viewing direction.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)

    forward = target - eye
    dist = np.linalg.norm(forward)
    if dist <= 1e-9:
        raise DegenerateFrame("eye and target coincide")
    z = forward / dist

    right = np.cross(z, up)
    norm = np.linalg.norm(right)
    if norm <= 1e-9:
        raise DegenerateFrame("up vector is parallel to the viewing direction")
    x = right / norm
    y = np.cross(z, x)

    rotation = np.stack([x, y, z])
    translation = -rotation @ eye
    return CameraPose(rotation=rotation, translation=translation)


def view_looking_at(eye, target, intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                    up=None) -> CameraView:
    """CameraView aimed from eye at target; picks a safe up vector when the
    viewing direction is (anti)parallel to world +z."""
    if up is None:
        direction = np.asarray(target, dtype=np.float64) - np.asarray(eye, dtype=np.float64)
        norm = np.linalg.norm(direction)
        if norm > 0 and abs(direction[2]) / norm > 1.0 - 1e-9:
            up = (0.0, 1.0, 0.0)
        else:
            up = (0.0, 0.0, 1.0)
    return CameraView(intrinsics=intrinsics, pose=look_at(eye, target, up))


def sample_hemisphere_cameras(n: int, radius: float, center, seed: int,
                              include_topdown: bool = False,
                              min_elevation: float = DEFAULT_MIN_ELEVATION,
                              intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                              ) -> list[CameraView]:
    """Sample n cameras on a hemisphere of the given radius around center.

    Azimuth is uniform in [0, 2pi); elevation uniform in
    [min_elevation, pi/2] so cameras never graze the table.  All optical
    axes are aimed at the center.  With include_topdown, view 0 looks
    straight down from (center + radius * z).  Deterministic per seed.
    """
    if n < 1:
        raise InvalidCount("need at least one camera")
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)

    rng = np.random.default_rng(seed)
    views = []
    if include_topdown:
        eye = center + np.array([0.0, 0.0, radius])
        views.append(view_looking_at(eye, center, intrinsics, up=(0.0, 1.0, 0.0)))
    while len(views) < n:
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        elevation = rng.uniform(min_elevation, math.pi / 2)
        eye = center + radius * np.array([
            math.cos(elevation) * math.cos(azimuth),
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
        ])
        views.append(view_looking_at(eye, center, intrinsics))
    return views


def world_to_camera(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Map world points (..., 3) into the camera frame."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ pose.rotation.T + pose.translation


def camera_to_world(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Inverse of world_to_camera."""
    pts = np.asarray(points, dtype=np.float64)
    return (pts - pose.translation) @ pose.rotation


def project_point(point, view: CameraView) -> tuple[float, float, float]:
    """Project one world point; returns (u, v, depth along the optical axis).

    Raises BehindCamera if the point is at or behind the camera plane.
    """
    p_cam = world_to_camera(np.asarray(point, dtype=np.float64), view.pose)
    z = float(p_cam[2])
    if z <= 0.0:
        raise BehindCamera(f"camera-frame z = {z:.6g}")
    intr = view.intrinsics
    u = intr.cx + intr.fx * float(p_cam[0]) / z
    v = intr.cy + intr.fy * float(p_cam[1]) / z
    return u, v, z


def unproject_pixel(u: float, v: float, depth: float, view: CameraView) -> np.ndarray:
    """Lift a pixel at the given optical-axis depth back to a world point."""
    if depth <= 0.0:
        raise NonPositiveDepth(f"depth = {depth:.6g}")
    intr = view.intrinsics
    p_cam = np.array([
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ])
    return camera_to_world(p_cam, view.pose)


def project_points(points: np.ndarray, view: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (n, 3) world points.

    Returns (uv, z) where uv has shape (n, 2).  No validity filtering;
    callers mask on z themselves.  Division by z <= 0 yields garbage uv
    that must be masked out.
    """
    p_cam = world_to_camera(points, view.pose)
    z = p_cam[:, 2]
    intr = view.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.cx + intr.fx * p_cam[:, 0] / z
        v = intr.cy + intr.fy * p_cam[:, 1] / z
    return np.stack([u, v], axis=1), z


def pixel_rays(view: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """World-space rays through all pixel centers, row-major order.

    Returns (origin, directions (h*w, 3)).  Directions are scaled so their
    camera-frame z is 1, making the ray parameter equal to the optical-axis
    depth: point(s) = origin + s * direction.
    """
    intr = view.intrinsics
    us = np.arange(intr.width, dtype=np.float64)
    vs = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    d_cam = np.stack([
        (uu - intr.cx) / intr.fx,
        (vv - intr.cy) / intr.fy,
        np.ones_like(uu),
    ], axis=-1).reshape(-1, 3)
    return view.pose.camera_center, d_cam @ view.pose.rotation


def pixels_to_camera(us: np.ndarray, vs: np.ndarray, depths: np.ndarray,
                     intrinsics: CameraIntrinsics) -> np.ndarray:
    """Vectorized unprojection into the camera frame; shapes broadcast."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    x = (us - intrinsics.cx) * depths / intrinsics.fx
    y = (vs - intrinsics.cy) * depths / intrinsics.fy
    return np.stack(np.broadcast_arrays(x, y, depths), axis=-1)


# --- camera JSON interchange ---

_CAMERA_FIELDS = ("width", "height", "fx", "fy", "cx", "cy", "z_near", "z_far")


def camera_to_json(view: CameraView) -> dict:
    d = {name: getattr(view.intrinsics, name) for name in _CAMERA_FIELDS}
    d["rotation"] = [float(x) for x in view.pose.rotation.ravel()]
    d["translation"] = [float(x) for x in view.pose.translation]
    return d


def camera_from_json(data: dict) -> CameraView:
    try:
        intr = CameraIntrinsics(
            width=int(data["width"]), height=int(data["height"]),
            fx=float(data["fx"]), fy=float(data["fy"]),
            cx=float(data["cx"]), cy=float(data["cy"]),
            z_near=float(data["z_near"]), z_far=float(data["z_far"]),
        )
        rotation = np.array(data["rotation"], dtype=np.float64).reshape(3, 3)
        translation = np.array(data["translation"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad camera record: {exc}") from exc
    return CameraView(intrinsics=intr, pose=CameraPose(rotation, translation))


def save_camera(view: CameraView, path) -> None:
    Path(path).write_text(json.dumps(camera_to_json(view), indent=1) + "\n")


def load_camera(path) -> CameraView:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return camera_from_json(data)
