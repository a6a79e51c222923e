"""Triangle meshes, a small Wavefront OBJ subset, and primitive generators.

The OBJ subset understood here is ``v x y z [r g b]`` (per-vertex color
extension) and ``f i j k`` with 1-based indices, triangles only.  Anything
else on a v/f line is an error; unrelated keywords (vn, vt, comments, ...)
are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

_MIN_FACE_AREA = 1e-12  # m^2


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable indexed triangle mesh with optional per-vertex colors."""

    vertices: np.ndarray               # (n, 3) float64, meters
    faces: np.ndarray                  # (m, 3) int64, vertex indices
    vertex_colors: np.ndarray | None = None  # (n, 3) float64 in [0, 1]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if f.size:
            areas = self.face_areas()
            if np.any(areas <= _MIN_FACE_AREA):
                raise ValueError("mesh contains degenerate faces")
        if self.vertex_colors is not None:
            c = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(v):
                raise ValueError("one color per vertex required")
            if c.size and (c.min() < 0.0 or c.max() > 1.0):
                raise ValueError("vertex colors must lie in [0, 1]")
            c.setflags(write=False)
            object.__setattr__(self, "vertex_colors", c)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-face corner arrays (v0, v1, v2), each (m, 3)."""
        return (self.vertices[self.faces[:, 0]],
                self.vertices[self.faces[:, 1]],
                self.vertices[self.faces[:, 2]])

    def face_areas(self) -> np.ndarray:
        v0, v1, v2 = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit normals following the winding order."""
        v0, v1, v2 = self.triangle_corners()
        n = np.cross(v1 - v0, v2 - v0)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def with_colors(self, colors: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, colors)


def load_obj(path) -> TriangleMesh:
    """Parse the OBJ subset; rejects quads and malformed records."""
    vertices: list[list[float]] = []
    colors: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            key = tokens[0]
            if key == "v":
                vals = tokens[1:]
                if len(vals) not in (3, 6):
                    raise ParseError(
                        f"{path}:{lineno}: vertex needs 3 coordinates "
                        f"(optionally followed by r g b), got {len(vals)} values")
                try:
                    nums = [float(x) for x in vals]
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
                vertices.append(nums[:3])
                if len(nums) == 6:
                    colors.append(nums[3:])
            elif key == "f":
                idx = tokens[1:]
                if len(idx) != 3:
                    raise ParseError(
                        f"{path}:{lineno}: only triangular faces are supported, "
                        f"got a face with {len(idx)} vertices")
                face = []
                for tok in idx:
                    if "/" in tok:
                        raise ParseError(
                            f"{path}:{lineno}: texture/normal face indices "
                            f"('{tok}') are not supported")
                    try:
                        face.append(int(tok) - 1)
                    except ValueError as exc:
                        raise ParseError(f"{path}:{lineno}: {exc}") from exc
                faces.append(face)
            # other keywords (vn, vt, o, g, s, usemtl, ...) are ignored
    if colors and len(colors) != len(vertices):
        raise ParseError(f"{path}: colors given for only some vertices")
    return TriangleMesh(
        vertices=np.array(vertices, dtype=np.float64).reshape(-1, 3),
        faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
        vertex_colors=np.array(colors, dtype=np.float64) if colors else None,
    )


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write the mesh in the OBJ subset; full float precision for round-trips."""
    lines = []
    if mesh.vertex_colors is not None:
        for p, c in zip(mesh.vertices, mesh.vertex_colors):
            lines.append("v %.17g %.17g %.17g %.17g %.17g %.17g"
                         % (p[0], p[1], p[2], c[0], c[1], c[2]))
    else:
        for p in mesh.vertices:
            lines.append("v %.17g %.17g %.17g" % (p[0], p[1], p[2]))
    for f in mesh.faces:
        lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
    Path(path).write_text("\n".join(lines) + "\n")


# --- primitives (all centered on `center`, outward winding) ---

def make_box(size_x: float, size_y: float, size_z: float, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box; 8 vertices, 12 triangles."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    c = np.asarray(center, dtype=np.float64)
    corners = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ]) + c
    faces = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom (-z)
        [4, 5, 6], [4, 6, 7],  # top (+z)
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [1, 2, 6], [1, 6, 5],  # +x
        [3, 0, 4], [3, 4, 7],  # -x
    ], dtype=np.int64)
    return TriangleMesh(corners, faces)


def make_uv_sphere(radius: float, n_azimuth: int = 32, n_elevation: int = 16,
                   center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Watertight UV sphere with exact pole vertices at center +- radius*z."""
    if n_azimuth < 3 or n_elevation < 2:
        raise ValueError("need n_azimuth >= 3 and n_elevation >= 2")
    c = np.asarray(center, dtype=np.float64)
    verts = [c + [0.0, 0.0, radius]]  # north pole, index 0
    for i in range(1, n_elevation):
        polar = math.pi * i / n_elevation
        z = radius * math.cos(polar)
        ring = radius * math.sin(polar)
        for j in range(n_azimuth):
            az = 2.0 * math.pi * j / n_azimuth
            verts.append(c + [ring * math.cos(az), ring * math.sin(az), z])
    south = len(verts)
    verts.append(c + [0.0, 0.0, -radius])

    def ring_index(i, j):
        return 1 + (i - 1) * n_azimuth + (j % n_azimuth)

    faces = []
    for j in range(n_azimuth):  # pole fans
        faces.append([0, ring_index(1, j), ring_index(1, j + 1)])
        faces.append([south, ring_index(n_elevation - 1, j + 1), ring_index(n_elevation - 1, j)])
    for i in range(1, n_elevation - 1):  # quad strips
        for j in range(n_azimuth):
            a, b = ring_index(i, j), ring_index(i, j + 1)
            d, e = ring_index(i + 1, j), ring_index(i + 1, j + 1)
            faces.append([a, d, e])
            faces.append([a, e, b])
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


def make_cylinder(radius: float, height: float, n_segments: int = 48,
                  center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed cylinder with its axis along z."""
    if n_segments < 3:
        raise ValueError("need n_segments >= 3")
    c = np.asarray(center, dtype=np.float64)
    hz = height / 2.0
    verts = []
    for z in (hz, -hz):
        for j in range(n_segments):
            az = 2.0 * math.pi * j / n_segments
            verts.append(c + [radius * math.cos(az), radius * math.sin(az), z])
    top_center = len(verts)
    verts.append(c + [0.0, 0.0, hz])
    bottom_center = len(verts)
    verts.append(c + [0.0, 0.0, -hz])

    faces = []
    for j in range(n_segments):
        jn = (j + 1) % n_segments
        t0, t1 = j, jn
        b0, b1 = n_segments + j, n_segments + jn
        faces.append([t0, b0, b1])
        faces.append([t0, b1, t1])
        faces.append([top_center, t0, t1])
        faces.append([bottom_center, b1, b0])
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


def point_to_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact distance from each point to the closest triangle (brute force).

    Intended as a test oracle, not a fast query structure.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    v0, v1, v2 = mesh.triangle_corners()
    e0 = v1 - v0
    e1 = v2 - v0
    a = np.einsum("ij,ij->i", e0, e0)
    b = np.einsum("ij,ij->i", e0, e1)
    cc = np.einsum("ij,ij->i", e1, e1)

    out = np.empty(len(pts))
    for k, p in enumerate(pts):
        # closest point on each triangle via the standard region test
        d_vec = v0 - p
        d = np.einsum("ij,ij->i", e0, d_vec)
        e = np.einsum("ij,ij->i", e1, d_vec)
        det = a * cc - b * b
        s = b * e - cc * d
        t = b * d - a * e
        s_out = np.empty_like(s)
        t_out = np.empty_like(t)
        for i in range(len(v0)):
            si, ti, deti = s[i], t[i], det[i]
            if si + ti <= deti:
                if si < 0.0:
                    if ti < 0.0:  # region 4
                        if d[i] < 0.0:
                            si = min(max(-d[i] / a[i], 0.0), 1.0)
                            ti = 0.0
                        else:
                            si = 0.0
                            ti = min(max(-e[i] / cc[i], 0.0), 1.0)
                    else:  # region 3
                        si = 0.0
                        ti = min(max(-e[i] / cc[i], 0.0), 1.0)
                elif ti < 0.0:  # region 5
                    si = min(max(-d[i] / a[i], 0.0), 1.0)
                    ti = 0.0
                else:  # region 0
                    inv = 1.0 / deti
                    si *= inv
                    ti *= inv
            else:
                if si < 0.0:  # region 2
                    tmp0 = b[i] + d[i]
                    tmp1 = cc[i] + e[i]
                    if tmp1 > tmp0:
                        numer = tmp1 - tmp0
                        denom = a[i] - 2.0 * b[i] + cc[i]
                        si = min(max(numer / denom, 0.0), 1.0)
                        ti = 1.0 - si
                    else:
                        si = 0.0
                        ti = min(max(-e[i] / cc[i], 0.0), 1.0)
                elif ti < 0.0:  # region 6
                    tmp0 = b[i] + e[i]
                    tmp1 = a[i] + d[i]
                    if tmp1 > tmp0:
                        numer = tmp1 - tmp0
                        denom = a[i] - 2.0 * b[i] + cc[i]
                        ti = min(max(numer / denom, 0.0), 1.0)
                        si = 1.0 - ti
                    else:
                        ti = 0.0
                        si = min(max(-d[i] / a[i], 0.0), 1.0)
                else:  # region 1
                    numer = cc[i] + e[i] - b[i] - d[i]
                    if numer <= 0.0:
                        si = 0.0
                    else:
                        denom = a[i] - 2.0 * b[i] + cc[i]
                        si = min(max(numer / denom, 0.0), 1.0)
                    ti = 1.0 - si
            s_out[i] = si
            t_out[i] = ti
        closest = v0 + s_out[:, None] * e0 + t_out[:, None] * e1
        out[k] = np.min(np.linalg.norm(closest - p, axis=1))
    return out
