"""Deterministic ray-cast rendering of triangle meshes.

One ray per pixel center, nearest positive Moller-Trumbore intersection,
no anti-aliasing.  Rays are parameterized so the ray parameter equals the
camera-frame z of the hit, which makes the depth output the optical-axis
distance directly.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMesh, MissingColors, NearClipViolation
from .geometry import CameraView, pixel_rays
from .images import DepthImage, RgbImage, round_half_up
from .mesh import TriangleMesh

# Ambient shading floor keeps unlit faces visibly brighter than a black
# background, so silhouettes never vanish.
AMBIENT_FLOOR = 0.1
DEFAULT_LIGHT = (0.3, -0.25, 1.0)
DEFAULT_BACKGROUND = (0, 0, 0)

_DET_EPS = 1e-12
_BARY_EPS = 1e-10
_T_MIN = 1e-9
# Work in (pixels x triangles) blocks of at most this many elements.
_CHUNK_ELEMENTS = 2_000_000


def _raycast(mesh: TriangleMesh, view: CameraView):
    """Nearest-hit cast for every pixel.

    Returns (t, tri, bu, bv) flat arrays of length width*height; tri is -1
    where the ray misses, t is +inf there.

    All rays share one origin, so the Moller-Trumbore terms reduce to dot
    products of the ray direction with per-triangle constant vectors:
        det = d . (e2 x e1),  bu*det = d . (e2 x tvec),
        bv*det = d . (tvec x e1),  t*det = e2 . (tvec x e1).
    Each block is then three GEMMs plus elementwise masking.
    """
    if mesh.num_faces == 0:
        raise EmptyMesh("cannot render an empty mesh")
    origin, dirs = pixel_rays(view)
    v0, v1, v2 = mesh.triangle_corners()
    e1 = v1 - v0
    e2 = v2 - v0
    tvec = origin - v0  # shared by all rays: common origin

    m_det = np.cross(e2, e1).T        # (3, T)
    m_bu = np.cross(e2, tvec).T
    qvec = np.cross(tvec, e1)
    m_bv = qvec.T
    t_num = np.einsum("tj,tj->t", e2, qvec)

    n_pix = len(dirs)
    n_tri = len(v0)
    best_t = np.full(n_pix, np.inf)
    best_tri = np.full(n_pix, -1, dtype=np.int64)
    best_u = np.zeros(n_pix)
    best_v = np.zeros(n_pix)

    chunk = max(1, _CHUNK_ELEMENTS // max(1, n_tri))
    for start in range(0, n_pix, chunk):
        d = dirs[start:start + chunk]
        det = d @ m_det
        ok = np.abs(det) > _DET_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = np.where(ok, 1.0 / det, 0.0)
        bu = (d @ m_bu) * inv_det
        bv = (d @ m_bv) * inv_det
        t = t_num[None, :] * inv_det
        ok &= (bu >= -_BARY_EPS) & (bv >= -_BARY_EPS) & (bu + bv <= 1.0 + _BARY_EPS)
        ok &= t > _T_MIN
        t = np.where(ok, t, np.inf)
        idx = np.argmin(t, axis=1)
        rows = np.arange(len(d))
        tmin = t[rows, idx]
        hit = np.isfinite(tmin)
        sl = slice(start, start + len(d))
        best_t[sl] = tmin
        best_tri[sl] = np.where(hit, idx, -1)
        best_u[sl] = np.where(hit, bu[rows, idx], 0.0)
        best_v[sl] = np.where(hit, bv[rows, idx], 0.0)
    return best_t, best_tri, best_u, best_v


def _clip_hits(t: np.ndarray, tri: np.ndarray, view: CameraView):
    """Apply the depth range: far hits become misses, near hits are errors."""
    intr = view.intrinsics
    hit = tri >= 0
    if np.any(hit & (t < intr.z_near)):
        worst = t[hit & (t < intr.z_near)].min()
        raise NearClipViolation(
            f"surface at {worst:.4f} m is closer than z_near={intr.z_near}")
    beyond = hit & (t > intr.z_far)
    t = np.where(beyond, np.inf, t)
    tri = np.where(beyond, -1, tri)
    return t, tri


def render_depth(mesh: TriangleMesh, view: CameraView) -> DepthImage:
    """Ground-truth depth map; 0.0 where no surface is hit within range."""
    t, tri, _, _ = _raycast(mesh, view)
    t, tri = _clip_hits(t, tri, view)
    depth = np.where(tri >= 0, t, 0.0)
    return DepthImage(depth.reshape(view.height, view.width))


def render_rgb(mesh: TriangleMesh, view: CameraView,
               light_dir=DEFAULT_LIGHT,
               background=DEFAULT_BACKGROUND) -> RgbImage:
    """Lambertian-shaded color render; misses take the background color."""
    _, rgb = render_depth_rgb(mesh, view, light_dir, background)
    return rgb


def render_depth_rgb(mesh: TriangleMesh, view: CameraView,
                     light_dir=DEFAULT_LIGHT,
                     background=DEFAULT_BACKGROUND) -> tuple[DepthImage, RgbImage]:
    """Depth and color from one shared cast (the two stay pixel-consistent)."""
    if mesh.vertex_colors is None:
        raise MissingColors("mesh has no vertex colors; run colorize_mesh first")
    light = np.asarray(light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)

    t, tri, bu, bv = _raycast(mesh, view)
    t, tri = _clip_hits(t, tri, view)
    hit = tri >= 0

    out = np.empty((view.height * view.width, 3), dtype=np.uint8)
    out[:] = np.asarray(background, dtype=np.uint8)
    if np.any(hit):
        faces = mesh.faces[tri[hit]]
        c0 = mesh.vertex_colors[faces[:, 0]]
        c1 = mesh.vertex_colors[faces[:, 1]]
        c2 = mesh.vertex_colors[faces[:, 2]]
        w0 = (1.0 - bu[hit] - bv[hit])[:, None]
        color = w0 * c0 + bu[hit][:, None] * c1 + bv[hit][:, None] * c2
        shade = mesh.face_normals()[tri[hit]] @ light
        shade = np.maximum(AMBIENT_FLOOR, shade)[:, None]
        out[hit] = np.clip(round_half_up(255.0 * color * shade), 0, 255).astype(np.uint8)

    depth = np.where(hit, t, 0.0).reshape(view.height, view.width)
    return DepthImage(depth), RgbImage(out.reshape(view.height, view.width, 3))


def colorize_mesh(mesh: TriangleMesh, seed: int) -> TriangleMesh:
    """Assign random per-vertex colors, deterministic per seed.

    Colors are drawn from [0.05, 1.0): with the 0.1 ambient floor the
    darkest shaded pixel still quantizes above 0, so renders against a
    black background never produce object pixels equal to the background.
    """
    rng = np.random.default_rng(seed)
    colors = rng.uniform(0.05, 1.0, size=(len(mesh.vertices), 3))
    return mesh.with_colors(colors)
