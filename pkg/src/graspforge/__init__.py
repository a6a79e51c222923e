"""graspforge: synthetic multi-view rendering, volumetric reconstruction
and antipodal parallel-jaw grasp planning on depth images."""

from .geometry import (
    CameraIntrinsics,
    CameraPose,
    CameraView,
    DEFAULT_INTRINSICS,
    look_at,
    project_point,
    sample_hemisphere_cameras,
    unproject_pixel,
    view_looking_at,
)
from .images import (
    DepthImage,
    QuantizedDepthImage,
    RgbImage,
    dequantize_depth,
    extract_silhouette,
    quantize_depth,
    slice_predicted_channels,
)
from .mesh import TriangleMesh, load_obj, make_box, make_cylinder, make_uv_sphere, save_obj
from .render import colorize_mesh, render_depth, render_depth_rgb, render_rgb

__all__ = [
    "CameraIntrinsics", "CameraPose", "CameraView", "DEFAULT_INTRINSICS",
    "look_at", "project_point", "sample_hemisphere_cameras", "unproject_pixel",
    "view_looking_at",
    "DepthImage", "QuantizedDepthImage", "RgbImage",
    "dequantize_depth", "extract_silhouette", "quantize_depth",
    "slice_predicted_channels",
    "TriangleMesh", "load_obj", "make_box", "make_cylinder", "make_uv_sphere",
    "save_obj",
    "colorize_mesh", "render_depth", "render_depth_rgb", "render_rgb",
]

__version__ = "0.1.0"
