"""Volumetric multi-view fusion: evidence carving into a voxel occupancy
grid, depth re-rendering from the grid, and a small trained fusion layer.

Carving is a per-voxel pure map (each view contributes an independent
free-space predicate), so view order never changes the result and adding
views can only remove occupancy.  The grid starts fully occupied and the
deterministic path keeps occupancy binary; continuous values appear only
through the learned fusion layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ParseError
from .geometry import CameraView, pixel_rays, project_points
from .images import DepthImage, RgbImage, extract_silhouette

_GRID_MAGIC = struct.Struct("<3d d 3I")  # origin, voxel_size, dims


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned occupancy grid; origin is the minimum corner."""

    origin: np.ndarray        # (3,) float64, meters
    voxel_size: float
    dims: tuple[int, int, int]
    values: np.ndarray        # (nx, ny, nz) float32 in [0, 1]

    def __post_init__(self):
        o = np.array(self.origin, dtype=np.float64)
        o.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if any(d < 1 for d in self.dims):
            raise ValueError("all grid dimensions must be >= 1")
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != self.dims:
            raise ValueError(f"values shape {v.shape} != dims {self.dims}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("occupancy values must lie in [0, 1]")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def voxel_diagonal(self) -> float:
        return self.voxel_size * float(np.sqrt(3.0))

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.dims))

    def voxel_centers(self) -> np.ndarray:
        """(N, 3) world positions of voxel centers, C-order over (x, y, z)."""
        axes = [self.origin[i] + (np.arange(self.dims[i]) + 0.5) * self.voxel_size
                for i in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)

    def occupied_mask(self, threshold: float = 0.5) -> np.ndarray:
        return self.values >= threshold


def init_grid(center, side: float, resolution: int) -> VoxelGrid:
    """Cubical grid around center, everything initially occupied."""
    if side <= 0:
        raise ValueError("side must be positive")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    center = np.asarray(center, dtype=np.float64)
    voxel_size = side / resolution
    origin = center - side / 2.0
    dims = (resolution, resolution, resolution)
    return VoxelGrid(origin, voxel_size, dims, np.ones(dims, dtype=np.float32))


def _check_view_dims(shape: tuple[int, int], view: CameraView) -> None:
    if shape != (view.height, view.width):
        raise DimensionMismatch(
            f"image is {shape[1]}x{shape[0]} but camera expects "
            f"{view.width}x{view.height}")


def _footprint_pixels(uv: np.ndarray, z: np.ndarray, grid: VoxelGrid,
                      view: CameraView):
    """Pixel centers covered by each voxel's projected footprint.

    A voxel whose center lies within half a voxel diagonal of a surface
    point must keep the pixel observing that point in its footprint, or
    carving could eat surface-containing voxels.  The half diagonal is
    voxel_size * sqrt(3)/2 and can be fully lateral, projecting to
    voxel_size * sqrt(3)/2 * f / z pixels; the footprint is the floor/ceil
    2x2 neighborhood with pixels beyond that radius masked off and the
    nearest pixel always kept.

    Returns (cols, rows, covered), each (n, 4); cols/rows are unclipped.
    """
    intr = view.intrinsics
    fu = np.floor(uv[:, 0])
    fv = np.floor(uv[:, 1])
    cols = np.stack([fu, fu + 1, fu, fu + 1], axis=1).astype(np.int64)
    rows = np.stack([fv, fv, fv + 1, fv + 1], axis=1).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        half = (0.5 * np.sqrt(3.0) * grid.voxel_size
                * max(intr.fx, intr.fy) / np.abs(z))
    half = np.maximum(half, 0.5 + 1e-9)[:, None]  # never drop the nearest pixel
    covered = (np.abs(cols - uv[:, :1]) <= half) & (np.abs(rows - uv[:, 1:2]) <= half)
    return cols, rows, covered


def _silhouette_free(grid: VoxelGrid, mask: np.ndarray, view: CameraView) -> np.ndarray:
    """Per-voxel flag: view's silhouette says this voxel is free space.

    A voxel is free when, inside the view's depth range, no pixel of its
    projected footprint lies on the silhouette (including footprints fully
    outside the image).  Voxels behind the camera or outside the depth range
    are unobserved and never flagged.
    """
    mask = np.asarray(mask, dtype=bool)
    _check_view_dims(mask.shape, view)
    uv, z = project_points(grid.voxel_centers(), view)
    intr = view.intrinsics
    in_range = (z >= intr.z_near) & (z <= intr.z_far)

    cols, rows, covered = _footprint_pixels(uv, z, grid, view)
    inside = (cols >= 0) & (cols < view.width) & (rows >= 0) & (rows < view.height)
    on_object = mask[np.clip(rows, 0, view.height - 1),
                     np.clip(cols, 0, view.width - 1)]
    supported = np.any(covered & inside & on_object, axis=1)
    return in_range & ~supported


def _depth_free(grid: VoxelGrid, depth: DepthImage, view: CameraView) -> np.ndarray:
    """Per-voxel flag: observed depth says this voxel is free space.

    Free when the voxel center sits more than one voxel diagonal in front of
    every observed depth in its projected footprint; footprints touching
    invalid pixels or the image border are left alone (unobserved edges).
    """
    _check_view_dims(depth.data.shape, view)
    uv, z = project_points(grid.voxel_centers(), view)
    cols, rows, covered = _footprint_pixels(uv, z, grid, view)
    inside = (cols >= 0) & (cols < view.width) & (rows >= 0) & (rows < view.height)
    observed = depth.data[np.clip(rows, 0, view.height - 1),
                          np.clip(cols, 0, view.width - 1)]
    # every covered pixel must be in-image and valid, and the voxel must sit
    # clearly in front of the nearest covered observation
    usable = np.all(~covered | (inside & (observed > 0.0)), axis=1)
    front = np.where(covered & inside, observed, np.inf).min(axis=1)
    margin = grid.voxel_diagonal
    return (z > 0) & usable & np.isfinite(front) & (z < front - margin)


def _carve(grid: VoxelGrid, free: np.ndarray) -> VoxelGrid:
    values = grid.values.copy()
    values.reshape(-1)[free] = 0.0
    return replace(grid, values=values)


def carve_silhouette(grid: VoxelGrid, mask: np.ndarray, view: CameraView) -> VoxelGrid:
    """Zero out voxels the silhouette proves empty; everything else unchanged."""
    return _carve(grid, _silhouette_free(grid, mask, view))


def carve_depth(grid: VoxelGrid, depth: DepthImage, view: CameraView) -> VoxelGrid:
    """Zero out voxels observed as free space in front of the depth surface."""
    return _carve(grid, _depth_free(grid, depth, view))


# Ray-march sampling step relative to voxel size.
_STEP_FRACTION = 0.5
# Bound on elements per block in the ray marcher.
_MARCH_CHUNK = 600_000


def render_depth_from_grid(grid: VoxelGrid, view: CameraView,
                           threshold: float = 0.5) -> DepthImage:
    """Depth of the first occupied sample along each pixel ray.

    Rays are sampled on the fixed ladder z_k = z_near + k * voxel_size/2
    (optical-axis depth); occupancy lookup is nearest-voxel with everything
    outside the grid empty.  Pixels with no occupied sample are invalid.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must lie in (0, 1]")
    intr = view.intrinsics
    step = grid.voxel_size * _STEP_FRACTION
    n_steps = int(np.floor((intr.z_far - intr.z_near) / step)) + 1
    ladder = intr.z_near + step * np.arange(n_steps)

    origin, dirs = pixel_rays(view)
    n_pix = len(dirs)

    # Per-pixel entry/exit depths of the grid's bounding box restrict the
    # ladder indices that can possibly hit an occupied voxel.
    lo = grid.origin
    hi = grid.origin + np.array(grid.dims) * grid.voxel_size
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (lo[None, :] - origin[None, :]) / dirs
        t_hi = (hi[None, :] - origin[None, :]) / dirs
    t_min = np.minimum(t_lo, t_hi)
    t_max = np.maximum(t_lo, t_hi)
    # Rays parallel to an axis: inside the slab iff origin between planes.
    parallel = dirs == 0.0
    inside_slab = np.broadcast_to((origin >= lo) & (origin <= hi), dirs.shape)
    t_min[parallel] = np.where(inside_slab[parallel], -np.inf, np.inf)
    t_max[parallel] = np.where(inside_slab[parallel], np.inf, -np.inf)
    enter = np.maximum(t_min.max(axis=1), intr.z_near)
    leave = np.minimum(t_max.min(axis=1), intr.z_far)

    out = np.zeros(n_pix)
    values = grid.values
    chunk = max(1, _MARCH_CHUNK // n_steps)
    for start in range(0, n_pix, chunk):
        sl = slice(start, min(start + chunk, n_pix))
        e, l = enter[sl], leave[sl]
        usable = e <= l
        if not np.any(usable):
            continue
        k0 = max(0, int(np.floor((e[usable].min() - intr.z_near) / step)))
        k1 = min(n_steps - 1, int(np.ceil((l[usable].max() - intr.z_near) / step)))
        if k1 < k0:
            continue
        zs = ladder[k0:k1 + 1]
        pos = origin[None, None, :] + zs[:, None, None] * dirs[sl][None, :, :]
        idx = np.floor((pos - grid.origin) / grid.voxel_size).astype(np.int64)
        in_grid = np.all((idx >= 0) & (idx < np.array(grid.dims)), axis=-1)
        ix = np.clip(idx[..., 0], 0, grid.dims[0] - 1)
        iy = np.clip(idx[..., 1], 0, grid.dims[1] - 1)
        iz = np.clip(idx[..., 2], 0, grid.dims[2] - 1)
        occupied = in_grid & (values[ix, iy, iz] >= threshold)
        any_hit = occupied.any(axis=0)
        first = occupied.argmax(axis=0)
        out[sl] = np.where(any_hit, zs[first], 0.0)
    return DepthImage(out.reshape(view.height, view.width))


@dataclass(frozen=True)
class ReconstructionConfig:
    """Knobs for the carve-and-rerender pipeline."""

    grid_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    grid_side: float = 0.3
    grid_resolution: int = 64
    threshold: float = 0.5
    background: tuple[int, int, int] = (0, 0, 0)
    # Optional depth maps (aligned with the input views) used as additional
    # free-space evidence; strongly sharpens single-view reconstructions.
    depth_evidence: tuple[DepthImage, ...] | None = None
    # Views to re-render at; defaults to the input views.
    query_views: tuple[CameraView, ...] | None = None


def predict_depth_maps(images: list[RgbImage], views: list[CameraView],
                       config: ReconstructionConfig | None = None,
                       ) -> list[DepthImage]:
    """Carve a grid from per-view evidence and re-render predicted depth.

    Pipeline: silhouette per input image -> fresh grid -> silhouette carve
    per view (plus depth carve when evidence is supplied) -> depth render at
    each query view.  Output order matches the query views (input views by
    default).
    """
    config = config or ReconstructionConfig()
    if len(images) == 0 or len(views) == 0:
        raise EmptyInput("need at least one image and view")
    if len(images) != len(views):
        raise DimensionMismatch(
            f"{len(images)} images vs {len(views)} views")
    if config.depth_evidence is not None and len(config.depth_evidence) != len(views):
        raise DimensionMismatch("depth evidence must align with input views")

    grid = build_evidence_grid(images, views, config)
    query = config.query_views if config.query_views is not None else views
    return [render_depth_from_grid(grid, view, config.threshold) for view in query]


def build_evidence_grid(images: list[RgbImage], views: list[CameraView],
                        config: ReconstructionConfig) -> VoxelGrid:
    """The carving stage of predict_depth_maps, exposed for reuse."""
    grid = init_grid(config.grid_center, config.grid_side, config.grid_resolution)
    for i, (image, view) in enumerate(zip(images, views)):
        _check_view_dims(image.data.shape[:2], view)
        mask = extract_silhouette(image, config.background) \
            if isinstance(image, RgbImage) else extract_silhouette(image)
        grid = carve_silhouette(grid, mask, view)
        if config.depth_evidence is not None:
            grid = carve_depth(grid, config.depth_evidence[i], view)
    return grid


def reconstruction_error(pred: DepthImage, gt: DepthImage,
                         z_near: float, z_far: float) -> float:
    """Mean per-pixel |difference| of depth normalized to [0, 1].

    Pixels where exactly one image is valid count as a full 1.0 mismatch;
    pixels invalid in both contribute 0.
    """
    if pred.data.shape != gt.data.shape:
        raise DimensionMismatch(
            f"prediction {pred.data.shape} vs ground truth {gt.data.shape}")
    span = z_far - z_near
    pv, gv = pred.valid, gt.valid
    pn = (pred.data - z_near) / span
    gn = (gt.data - z_near) / span
    err = np.where(pv & gv, np.abs(pn - gn), np.where(pv ^ gv, 1.0, 0.0))
    return float(err.mean())


def save_grid(grid: VoxelGrid, path) -> None:
    """Binary grid file: little-endian header {origin f64[3], voxel_size f64,
    dims u32[3]} followed by x-fastest float32 occupancy."""
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC.pack(*grid.origin, grid.voxel_size, *grid.dims))
        fh.write(np.asfortranarray(grid.values).ravel(order="F")
                 .astype("<f4").tobytes())


def load_grid(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        header = fh.read(_GRID_MAGIC.size)
        if len(header) != _GRID_MAGIC.size:
            raise ParseError(f"{path}: truncated grid header")
        ox, oy, oz, voxel_size, nx, ny, nz = _GRID_MAGIC.unpack(header)
        payload = fh.read(4 * nx * ny * nz)
        if len(payload) != 4 * nx * ny * nz:
            raise ParseError(f"{path}: truncated grid payload")
    values = np.frombuffer(payload, dtype="<f4").reshape((nx, ny, nz), order="F")
    return VoxelGrid(np.array([ox, oy, oz]), voxel_size, (nx, ny, nz),
                     values.astype(np.float32))


# --- learned fusion layer ---
#
# Occupancy model o_v = sigmoid(sum_i w_i * e_iv + b) over per-view binary
# free-space indicators e, trained with full-batch gradient descent against
# mean squared error to a target occupancy grid.


@dataclass(frozen=True)
class FusionWeights:
    """Per-view evidence weights plus a shared bias."""

    w: np.ndarray  # (n_views,)
    b: float

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.b):
            raise ValueError("fusion weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _target_vector(gt_grid) -> np.ndarray:
    if isinstance(gt_grid, VoxelGrid):
        return gt_grid.values.reshape(-1).astype(np.float64)
    return np.asarray(gt_grid, dtype=np.float64).reshape(-1)


def _fusion_loss_and_grad(w: np.ndarray, b: float, evidence: np.ndarray,
                          target: np.ndarray) -> tuple[float, np.ndarray, float]:
    z = w @ evidence + b
    o = _sigmoid(z)
    diff = o - target
    loss = float(np.mean(diff * diff))
    dz = 2.0 * diff * o * (1.0 - o) / len(target)
    return loss, evidence @ dz, float(dz.sum())


def fuse_evidence(weights: FusionWeights, evidence: np.ndarray) -> np.ndarray:
    """Fused per-voxel occupancy in [0, 1] for (n_views, n_voxels) evidence."""
    evidence = np.asarray(evidence, dtype=np.float64)
    return _sigmoid(weights.w @ evidence + weights.b)


def evidence_from_silhouettes(grid: VoxelGrid, masks: list[np.ndarray],
                              views: list[CameraView]) -> np.ndarray:
    """Stack per-view free-space indicators, shape (n_views, n_voxels)."""
    rows = [_silhouette_free(grid, m, v).astype(np.float64)
            for m, v in zip(masks, views)]
    return np.stack(rows)


def train_fusion_weights(evidence: np.ndarray, gt_grid, lr: float, iters: int,
                         seed: int = 0) -> tuple[FusionWeights, np.ndarray]:
    """Fit the fusion layer by gradient descent; returns (weights, losses).

    Weights start at zero (so the initial prediction is 0.5 everywhere) and
    losses has iters + 1 entries including the starting loss.  Full-batch
    descent is deterministic; the seed is accepted for interface stability
    with stochastic variants.
    """
    del seed  # deterministic full-batch training
    if iters < 1:
        raise ValueError("iters must be >= 1")
    evidence = np.asarray(evidence, dtype=np.float64)
    if evidence.ndim != 2:
        raise ValueError("evidence must have shape (n_views, n_voxels)")
    target = _target_vector(gt_grid)
    if evidence.shape[1] != len(target):
        raise DimensionMismatch(
            f"evidence covers {evidence.shape[1]} voxels, target {len(target)}")

    w = np.zeros(evidence.shape[0])
    b = 0.0
    losses = np.empty(iters + 1)
    for k in range(iters):
        loss, gw, gb = _fusion_loss_and_grad(w, b, evidence, target)
        losses[k] = loss
        w = w - lr * gw
        b = b - lr * gb
    losses[iters], _, _ = _fusion_loss_and_grad(w, b, evidence, target)
    return FusionWeights(w, b), losses


def fusion_gradient_check(weights: FusionWeights, evidence: np.ndarray,
                          gt_grid, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    evidence = np.asarray(evidence, dtype=np.float64)
    target = _target_vector(gt_grid)
    _, gw, gb = _fusion_loss_and_grad(weights.w, weights.b, evidence, target)
    analytic = np.append(gw, gb)

    def loss_at(params: np.ndarray) -> float:
        return _fusion_loss_and_grad(params[:-1], params[-1], evidence, target)[0]

    params = np.append(weights.w, weights.b)
    numeric = np.empty_like(params)
    for i in range(len(params)):
        plus = params.copy()
        minus = params.copy()
        plus[i] += step
        minus[i] -= step
        numeric[i] = (loss_at(plus) - loss_at(minus)) / (2.0 * step)

    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.zeros_like(params)
    meaningful = scale > 1e-12
    err[meaningful] = np.abs(analytic - numeric)[meaningful] / scale[meaningful]
    return float(err.max())
