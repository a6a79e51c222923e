import numpy as np
import pytest

from graspforge.errors import DimensionMismatch, EmptyInput, ParseError
from graspforge.geometry import sample_hemisphere_cameras, view_looking_at
from graspforge.images import DepthImage, extract_silhouette
from graspforge.mesh import make_box
from graspforge.reconstruct import (
    ReconstructionConfig,
    VoxelGrid,
    carve_depth,
    carve_silhouette,
    init_grid,
    load_grid,
    predict_depth_maps,
    reconstruction_error,
    render_depth_from_grid,
    save_grid,
)
from graspforge.render import colorize_mesh, render_depth, render_rgb

VIEW_SHAPE = (128, 128)


def all_mask(value: bool):
    return np.full(VIEW_SHAPE, value, dtype=bool)


def test_init_grid_defaults():
    grid = init_grid((0, 0, 0), 0.3, 64)
    assert grid.dims == (64, 64, 64)
    assert grid.voxel_size == pytest.approx(0.0046875, abs=1e-15)
    assert (grid.values == 1.0).all()
    assert np.allclose(grid.origin, [-0.15, -0.15, -0.15])


def test_init_grid_single_voxel():
    grid = init_grid((0, 0, 0), 0.1, 1)
    assert grid.dims == (1, 1, 1)


def test_init_grid_rejects_bad_args():
    with pytest.raises(ValueError):
        init_grid((0, 0, 0), 0.0, 64)
    with pytest.raises(ValueError):
        init_grid((0, 0, 0), 0.3, 0)


def test_carve_all_false_mask_empties_frustum(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 16)
    carved = carve_silhouette(grid, all_mask(False), topdown_view)
    # the whole grid sits inside this camera's frustum depth range
    assert (carved.values == 0.0).all()


def test_carve_all_true_mask_is_identity(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 16)
    carved = carve_silhouette(grid, all_mask(True), topdown_view)
    assert np.array_equal(carved.values, grid.values)


def test_carve_leaves_out_of_range_voxels(topdown_view):
    # grid straddles the camera: voxels behind it and closer than z_near
    # must stay occupied even under an all-false mask
    grid = init_grid((0, 0, 0.55), 0.3, 8)
    carved = carve_silhouette(grid, all_mask(False), topdown_view)
    centers = grid.voxel_centers()
    z_cam = 0.6 - centers[:, 2]  # top-down camera depth of each center
    out_of_range = (z_cam < topdown_view.intrinsics.z_near)
    values = carved.values.reshape(-1)
    assert (values[out_of_range] == 1.0).all()
    assert (values[~out_of_range] == 0.0).all()


def test_carve_dimension_mismatch(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 8)
    with pytest.raises(DimensionMismatch):
        carve_silhouette(grid, np.zeros((4, 4), dtype=bool), topdown_view)
    with pytest.raises(DimensionMismatch):
        carve_depth(grid, DepthImage(np.zeros((4, 4))), topdown_view)


def test_two_orthogonal_silhouettes_keep_sphere_interior(sphere_mesh):
    views = [view_looking_at((0, 0, 0.6), (0, 0, 0)),
             view_looking_at((0.6, 0, 0), (0, 0, 0))]
    grid = init_grid((0, 0, 0), 0.3, 48)
    for view in views:
        mask = extract_silhouette(render_depth(sphere_mesh, view))
        grid = carve_silhouette(grid, mask, view)
    inside = np.linalg.norm(grid.voxel_centers(), axis=1) <= 0.05 - grid.voxel_diagonal
    assert (grid.values.reshape(-1)[inside] == 1.0).all()


def test_carve_depth_semantics(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 16)
    observed = DepthImage(np.full(VIEW_SHAPE, 0.6))  # surface at world z=0
    carved = carve_depth(grid, observed, topdown_view)
    centers = grid.voxel_centers()
    values = carved.values.reshape(-1)
    in_front = centers[:, 2] > grid.voxel_diagonal + 0.002  # >10 voxel-mm above
    behind = centers[:, 2] < -0.002
    assert (values[in_front] == 0.0).all()
    assert (values[behind] == 1.0).all()


def test_carve_depth_invalid_image_is_identity(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 16)
    carved = carve_depth(grid, DepthImage(np.zeros(VIEW_SHAPE)), topdown_view)
    assert np.array_equal(carved.values, grid.values)


def test_render_empty_grid_all_invalid(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 16)
    empty = VoxelGrid(grid.origin, grid.voxel_size, grid.dims,
                      np.zeros(grid.dims, dtype=np.float32))
    depth = render_depth_from_grid(empty, topdown_view)
    assert not depth.valid.any()


def test_render_single_voxel_on_axis(topdown_view):
    grid = init_grid((0, 0, 0.1), 0.3, 15)  # odd res: a voxel center on axis
    values = np.zeros(grid.dims, dtype=np.float32)
    values[7, 7, 7] = 1.0  # center voxel at world (0, 0, 0.1) -> depth 0.5
    single = VoxelGrid(grid.origin, grid.voxel_size, grid.dims, values)
    depth = render_depth_from_grid(single, topdown_view)
    center = depth.data[63:65, 63:65]
    assert (center > 0).all()
    assert np.all(np.abs(center - 0.5) <= single.voxel_diagonal)


def test_render_full_grid_hits_near_face(topdown_view):
    grid = init_grid((0, 0, 0), 0.3, 16)
    depth = render_depth_from_grid(grid, topdown_view)
    # center ray enters the box at world z = +0.15 -> depth 0.45
    step = grid.voxel_size / 2
    assert abs(depth.data[63, 63] - 0.45) <= step + 1e-12


def test_predict_depth_maps_empty_input():
    with pytest.raises(EmptyInput):
        predict_depth_maps([], [], ReconstructionConfig())


def test_predict_depth_maps_box_topdown(topdown_view):
    mesh = colorize_mesh(make_box(0.1, 0.1, 0.03), 3)
    gt = render_depth(mesh, topdown_view)
    rgb = render_rgb(mesh, topdown_view)
    config = ReconstructionConfig(depth_evidence=(gt,))
    pred = predict_depth_maps([rgb], [topdown_view], config)[0]
    grid_diag = init_grid(config.grid_center, config.grid_side,
                          config.grid_resolution).voxel_diagonal

    # interior pixels: erode the gt mask by one pixel
    m = gt.valid
    interior = m.copy()
    interior[1:, :] &= m[:-1, :]
    interior[:-1, :] &= m[1:, :]
    interior[:, 1:] &= m[:, :-1]
    interior[:, :-1] &= m[:, 1:]
    assert interior.sum() > 100
    assert pred.valid[interior].all()
    assert np.all(np.abs(pred.data[interior] - gt.data[interior]) <= grid_diag)


def test_predicted_depth_conservative_bound(sphere_mesh):
    views = sample_hemisphere_cameras(12, 0.6, (0, 0, 0), seed=5,
                                      include_topdown=True)
    gts = [render_depth(sphere_mesh, v) for v in views]
    config = ReconstructionConfig()
    images = [extract_silhouette(g) for g in gts]
    grid = init_grid(config.grid_center, config.grid_side, config.grid_resolution)
    for mask, view in zip(images, views):
        grid = carve_silhouette(grid, mask, view)
    ok = total = 0
    for gt, view in zip(gts, views):
        pred = render_depth_from_grid(grid, view)
        both = pred.valid & gt.valid
        ok += int((pred.data[both] <= gt.data[both] + grid.voxel_diagonal).sum())
        total += int(both.sum())
    assert ok / total >= 0.999


def test_carving_monotone_and_order_free(sphere_mesh):
    views = sample_hemisphere_cameras(6, 0.6, (0, 0, 0), seed=8,
                                      include_topdown=True)
    masks = [extract_silhouette(render_depth(sphere_mesh, v)) for v in views]
    grid = init_grid((0, 0, 0), 0.3, 32)

    def carve_set(indices):
        g = grid
        for i in indices:
            g = carve_silhouette(g, masks[i], views[i])
        return g

    small = carve_set([0, 2, 4])
    large = carve_set([0, 1, 2, 3, 4, 5])
    assert np.all(large.values <= small.values)  # more views never add mass

    shuffled = carve_set([5, 3, 1, 4, 2, 0])
    assert np.array_equal(large.values, shuffled.values)


def test_reconstruction_error_identity(sphere_topdown_depth):
    assert reconstruction_error(sphere_topdown_depth, sphere_topdown_depth,
                                0.25, 1.5) == 0.0


def test_reconstruction_error_uniform_shift(sphere_topdown_depth):
    gt = sphere_topdown_depth
    shifted = DepthImage(np.where(gt.valid, gt.data + 0.0125, 0.0))
    got = reconstruction_error(shifted, gt, 0.25, 1.5)
    # independent evaluation of the definition, pixel by pixel
    expected = 0.0
    span = 1.25
    for r in range(gt.height):
        for c in range(gt.width):
            a, b = shifted.data[r, c], gt.data[r, c]
            if a > 0 and b > 0:
                expected += abs((a - b) / span)
            elif (a > 0) != (b > 0):
                expected += 1.0
    expected /= gt.width * gt.height
    assert got == pytest.approx(expected, abs=1e-15)
    valid_frac = gt.valid.mean()
    assert got == pytest.approx(0.01 * valid_frac, rel=1e-9)


def test_reconstruction_error_validity_mismatch():
    a = DepthImage(np.array([[0.5, 0.0]]))
    b = DepthImage(np.array([[0.0, 0.0]]))
    assert reconstruction_error(a, b, 0.25, 1.5) == pytest.approx(0.5)


def test_reconstruction_error_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        reconstruction_error(DepthImage(np.zeros((2, 2))),
                             DepthImage(np.zeros((3, 3))), 0.25, 1.5)


def test_grid_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    values = (rng.random((6, 5, 4)) < 0.5).astype(np.float32)
    grid = VoxelGrid(np.array([-0.1, 0.0, 0.2]), 0.01, (6, 5, 4), values)
    path = tmp_path / "grid.bin"
    save_grid(grid, path)
    loaded = load_grid(path)
    assert np.array_equal(loaded.values, grid.values)
    assert np.array_equal(loaded.origin, grid.origin)
    assert loaded.voxel_size == grid.voxel_size
    assert loaded.dims == grid.dims
    # header: 4 doubles + 3 uint32, then x-fastest float32 payload
    assert path.stat().st_size == 4 * 8 + 3 * 4 + 4 * 6 * 5 * 4


def test_grid_file_truncated(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 10)
    with pytest.raises(ParseError):
        load_grid(path)


def test_grid_values_validated():
    with pytest.raises(ValueError):
        VoxelGrid(np.zeros(3), 0.01, (2, 2, 2), np.full((2, 2, 2), 1.5,
                                                        dtype=np.float32))
