"""Per-object multi-view dataset generation with a JSON manifest.

Layout under the output root:

    <out>/<object_id>/manifest.json
    <out>/<object_id>/mesh.obj
    <out>/<object_id>/{train,test}/view_###.rgb.ppm
                                   view_###.depth.pgm (+ .depth.json sidecar)
                                   view_###.mask.pgm
                                   view_###.camera.json

Train views are hemisphere-sampled; test views are sampled from a
different derived seed and always retain one exact top-down view, so the
two camera sets never coincide.  Everything is deterministic per seed,
file bytes included.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, InsufficientViews, ParseError
from .geometry import (
    CameraIntrinsics,
    CameraView,
    DEFAULT_INTRINSICS,
    DEFAULT_MIN_ELEVATION,
    camera_from_json,
    camera_to_json,
    sample_hemisphere_cameras,
)
from .images import (
    DepthImage,
    RgbImage,
    load_depth,
    quantize_depth,
    read_pgm,
    read_ppm,
    save_quantized_depth,
    write_ppm,
)
from .mesh import TriangleMesh, load_obj, save_obj
from .render import DEFAULT_LIGHT, colorize_mesh, render_depth_rgb

_TOPDOWN_TOL = 1e-9


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-seed from (seed, label); avoids split collisions."""
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 63)


@dataclass(frozen=True)
class ViewRecord:
    """One rendered view: camera plus the four files it produced."""

    camera: CameraView
    camera_path: Path
    rgb_path: Path
    depth_path: Path
    mask_path: Path

    def load_rgb(self) -> RgbImage:
        return read_ppm(self.rgb_path)

    def load_depth(self) -> DepthImage:
        return load_depth(self.depth_path, self.mask_path)

    def load_mask(self) -> np.ndarray:
        return read_pgm(self.mask_path) == 255


@dataclass(frozen=True)
class SceneDataset:
    object_id: str
    mesh_path: Path
    train: tuple[ViewRecord, ...]
    test: tuple[ViewRecord, ...]
    root: Path

    @property
    def topdown_test_index(self) -> int:
        """Index of the unique top-down test view."""
        hits = [i for i, rec in enumerate(self.test)
                if abs(rec.camera.elevation - math.pi / 2) <= _TOPDOWN_TOL]
        if len(hits) != 1:
            raise ParseError(
                f"dataset {self.object_id}: expected exactly one top-down "
                f"test view, found {len(hits)}")
        return hits[0]

    def load_mesh(self) -> TriangleMesh:
        return load_obj(self.mesh_path)


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 20
    n_test: int = 10
    radius: float = 0.6
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    min_elevation: float = DEFAULT_MIN_ELEVATION
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    bit_depth: int = 16
    background: tuple[int, int, int] = (0, 0, 0)
    light_dir: tuple[float, float, float] = DEFAULT_LIGHT


def _render_split(mesh: TriangleMesh, views: list[CameraView], split_dir: Path,
                  config: DatasetConfig) -> list[ViewRecord]:
    split_dir.mkdir(parents=True, exist_ok=True)
    records = []
    intr = config.intrinsics
    for i, view in enumerate(views):
        stem = split_dir / f"view_{i:03d}"
        depth, rgb = render_depth_rgb(mesh, view, config.light_dir, config.background)
        quant = quantize_depth(depth, intr.z_near, intr.z_far, config.bit_depth)

        rgb_path = stem.with_suffix(".rgb.ppm")
        depth_path = stem.with_suffix(".depth.pgm")
        mask_path = stem.with_suffix(".mask.pgm")
        camera_path = stem.with_suffix(".camera.json")
        write_ppm(rgb_path, rgb)
        # the stored validity mask doubles as the carving silhouette
        save_quantized_depth(quant, depth_path, mask_path)
        camera_path.write_text(json.dumps(camera_to_json(view), indent=1) + "\n")
        records.append(ViewRecord(view, camera_path, rgb_path, depth_path, mask_path))
    return records


def generate_object_dataset(mesh: TriangleMesh, out_dir, seed: int,
                            config: DatasetConfig | None = None,
                            object_id: str = "object") -> SceneDataset:
    """Render the train/test view sets for one mesh and write the manifest.

    Train and test camera seeds derive from (seed, split) so the splits
    never share a pose; the test split keeps one exact top-down view and is
    re-colorized with a separate seed.
    """
    config = config or DatasetConfig()
    if mesh.num_faces == 0:
        raise EmptyMesh("cannot build a dataset from an empty mesh")
    root = Path(out_dir) / object_id
    root.mkdir(parents=True, exist_ok=True)

    mesh_path = root / "mesh.obj"
    train_mesh = colorize_mesh(mesh, seed)
    save_obj(train_mesh, mesh_path)

    train_views = sample_hemisphere_cameras(
        config.n_train, config.radius, config.center,
        seed=derive_seed(seed, "train"), include_topdown=False,
        min_elevation=config.min_elevation, intrinsics=config.intrinsics)
    test_views = sample_hemisphere_cameras(
        config.n_test, config.radius, config.center,
        seed=derive_seed(seed, "test"), include_topdown=True,
        min_elevation=config.min_elevation, intrinsics=config.intrinsics)

    train = _render_split(train_mesh, train_views, root / "train", config)
    test_mesh = colorize_mesh(mesh, derive_seed(seed, "test-color"))
    test = _render_split(test_mesh, test_views, root / "test", config)

    dataset = SceneDataset(object_id=object_id, mesh_path=mesh_path,
                           train=tuple(train), test=tuple(test), root=root)
    write_manifest(dataset, root / "manifest.json")
    return dataset


def select_input_views(dataset: SceneDataset, k: int, seed: int,
                       require_topdown: bool = True) -> list[int]:
    """Pick k distinct test-view indices; top-down first when required.

    The remaining k-1 indices are drawn without replacement, deterministic
    per seed.
    """
    n = len(dataset.test)
    if k > n:
        raise InsufficientViews(f"asked for {k} views, dataset has {n}")
    if k < 1:
        raise InsufficientViews("need at least one view")
    rng = np.random.default_rng(derive_seed(seed, "input-views"))
    if require_topdown:
        first = dataset.topdown_test_index
        rest = [i for i in range(n) if i != first]
        picked = rng.permutation(len(rest))[:k - 1]
        return [first] + [rest[i] for i in picked]
    return [int(i) for i in rng.permutation(n)[:k]]


def write_manifest(dataset: SceneDataset, path) -> None:
    """Manifest JSON with paths relative to the manifest's directory."""
    path = Path(path)
    base = path.parent

    def entry(rec: ViewRecord) -> dict:
        return {
            "camera": str(rec.camera_path.relative_to(base)),
            "rgb": str(rec.rgb_path.relative_to(base)),
            "depth": str(rec.depth_path.relative_to(base)),
            "mask": str(rec.mask_path.relative_to(base)),
        }

    doc = {
        "object_id": dataset.object_id,
        "mesh": str(dataset.mesh_path.relative_to(base)),
        "train": [entry(r) for r in dataset.train],
        "test": [entry(r) for r in dataset.test],
    }
    path.write_text(json.dumps(doc, indent=1) + "\n")


def read_manifest(path) -> SceneDataset:
    """Load and validate a manifest; errors name the offending path/field."""
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc

    def load_split(name: str) -> list[ViewRecord]:
        records = []
        try:
            entries = doc[name]
        except KeyError as exc:
            raise ParseError(f"{path}: missing field '{name}'") from exc
        for i, entry in enumerate(entries):
            try:
                paths = {key: base / entry[key]
                         for key in ("camera", "rgb", "depth", "mask")}
            except (KeyError, TypeError) as exc:
                raise ParseError(
                    f"{path}: {name}[{i}] missing field {exc}") from exc
            for key, p in paths.items():
                if not p.exists():
                    raise ParseError(f"{path}: {name}[{i}].{key} -> missing file {p}")
            camera = camera_from_json(json.loads(paths["camera"].read_text()))
            records.append(ViewRecord(camera, paths["camera"], paths["rgb"],
                                      paths["depth"], paths["mask"]))
        return records

    try:
        object_id = doc["object_id"]
        mesh_rel = doc["mesh"]
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc}") from exc
    mesh_path = base / mesh_rel
    if not mesh_path.exists():
        raise ParseError(f"{path}: mesh -> missing file {mesh_path}")

    dataset = SceneDataset(object_id=object_id, mesh_path=mesh_path,
                           train=tuple(load_split("train")),
                           test=tuple(load_split("test")), root=base)
    validate_dataset(dataset, manifest_path=path)
    return dataset


def validate_dataset(dataset: SceneDataset, manifest_path="manifest") -> None:
    """Structural checks: image dims match cameras, one top-down test view."""
    for name, split in (("train", dataset.train), ("test", dataset.test)):
        for i, rec in enumerate(split):
            intr = rec.camera.intrinsics
            mask = read_pgm(rec.mask_path)
            if mask.shape != (intr.height, intr.width):
                raise ParseError(
                    f"{manifest_path}: {name}[{i}] mask is {mask.shape}, "
                    f"camera expects {(intr.height, intr.width)}")
    topdown = [i for i, rec in enumerate(dataset.test)
               if abs(rec.camera.elevation - math.pi / 2) <= _TOPDOWN_TOL]
    if len(topdown) != 1:
        raise ParseError(
            f"{manifest_path}: expected exactly one top-down test view, "
            f"found {len(topdown)}")
