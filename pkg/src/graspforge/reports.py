"""Evaluation protocols and report emission (CSV tables, PNG figures,
grayscale diagnostic difference maps).

Two protocols are reproduced structurally:

  * Reconstruction error vs. number of input views ("Above" = error at the
    top-down test view, "Dataset" = mean over all test views).  Input views
    are drawn from the test split with the top-down view always first, and
    both silhouette and depth evidence of the inputs are carved.
  * Grasp quality from the top-down view alone vs. a five-view set
    (top-down plus four cameras on the hemisphere's base circle).  Keeping
    the top-down view in the multi-view set makes the multi-view quality
    >= the top-down quality by construction.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dataset import SceneDataset, select_input_views  # noqa: E402
from .errors import ParseError  # noqa: E402
from .geometry import CameraIntrinsics, DEFAULT_INTRINSICS, view_looking_at  # noqa: E402
from .grasp import (  # noqa: E402
    Grasp,
    GripperSpec,
    PlannerConfig,
    plan_grasp_multiview,
    plan_grasp_single_view,
)
from .images import DepthImage, write_pgm  # noqa: E402
from .mesh import TriangleMesh  # noqa: E402
from .reconstruct import (  # noqa: E402
    carve_depth,
    carve_silhouette,
    init_grid,
    reconstruction_error,
    render_depth_from_grid,
)
from .render import render_depth  # noqa: E402


@dataclass(frozen=True)
class EvalRow:
    label: str
    metric: str
    value: float | None  # None renders as N/A


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    runtimes_ms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        keys = [(r.label, r.metric) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (label, metric) rows in report")
        for r in self.rows:
            if r.value is not None and not math.isfinite(r.value):
                raise ValueError(f"non-finite value in row {r.label}/{r.metric}")

    def value(self, label: str, metric: str) -> float | None:
        for r in self.rows:
            if r.label == label and r.metric == metric:
                return r.value
        raise KeyError((label, metric))


# --- reconstruction-vs-shots protocol ---

def run_table1_eval(dataset: SceneDataset, shots: list[int], seed: int,
                    grid_side: float = 0.3, grid_resolution: int = 64,
                    threshold: float = 0.5, grid_center=(0.0, 0.0, 0.0),
                    debug_identity: bool = False,
                    diff_dir=None) -> EvalReport:
    """Reconstruction error for each shot count over the test split.

    For every k in shots, the top-down test view plus k-1 seeded test views
    are carved (silhouette + depth evidence) into a fresh grid, predictions
    are re-rendered at all test views, and two error rows emerge: the
    top-down view ("Above") and the mean over the split ("Dataset").
    With debug_identity the predictions are replaced by ground truth, which
    must zero the table.
    """
    test_views = [rec.camera for rec in dataset.test]
    masks = [rec.load_mask() for rec in dataset.test]
    gt = [rec.load_depth() for rec in dataset.test]
    intr = test_views[0].intrinsics
    topdown = dataset.topdown_test_index

    rows: list[EvalRow] = []
    runtimes: dict[str, float] = {}
    for k in shots:
        start = time.perf_counter()
        inputs = select_input_views(dataset, k, seed, require_topdown=True)
        if debug_identity:
            preds = gt
        else:
            grid = init_grid(grid_center, grid_side, grid_resolution)
            for i in inputs:
                grid = carve_silhouette(grid, masks[i], test_views[i])
                grid = carve_depth(grid, gt[i], test_views[i])
            preds = [render_depth_from_grid(grid, v, threshold) for v in test_views]
        errors = [reconstruction_error(p, g, intr.z_near, intr.z_far)
                  for p, g in zip(preds, gt)]
        rows.append(EvalRow("Above", f"{k}-shot", errors[topdown]))
        rows.append(EvalRow("Dataset", f"{k}-shot", float(np.mean(errors))))
        runtimes[f"{k}-shot"] = (time.perf_counter() - start) * 1e3
        if diff_dir is not None:
            out = Path(diff_dir)
            out.mkdir(parents=True, exist_ok=True)
            name = f"{dataset.object_id}_{k}shot_topdown_diff.pgm"
            write_difference_map(preds[topdown], gt[topdown],
                                 intr.z_near, intr.z_far, out / name)
    return EvalReport(tuple(rows), runtimes)


# --- top-down vs multi-view grasp protocol ---

def table2_views(radius: float = 0.6, center=(0.0, 0.0, 0.0),
                 intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS):
    """The five planner views: top-down first, then four cameras evenly
    spaced on the hemisphere's base circle."""
    center = np.asarray(center, dtype=np.float64)
    views = [view_looking_at(center + [0.0, 0.0, radius], center, intrinsics)]
    for azimuth in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2):
        eye = center + radius * np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
        views.append(view_looking_at(eye, center, intrinsics))
    return views


def run_table2_eval(objects: list[tuple[str, TriangleMesh]], gripper: GripperSpec,
                    seed: int, radius: float = 0.6,
                    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                    planner: PlannerConfig | None = None) -> EvalReport:
    """Per object: best grasp quality from the top-down view alone and from
    the five-view set; None marks a view set with no grasp."""
    planner = planner or PlannerConfig(seed=seed)
    rows: list[EvalRow] = []
    runtimes: dict[str, float] = {}
    views = table2_views(radius, intrinsics=intrinsics)
    for object_id, mesh in objects:
        start = time.perf_counter()
        depths = [render_depth(mesh, v) for v in views]
        single = plan_grasp_single_view(depths[0], views[0], gripper, planner,
                                        view_index=0)
        multi = plan_grasp_multiview(depths, views, gripper, planner)
        rows.append(EvalRow(object_id, "topdown_Q",
                            single.quality if isinstance(single, Grasp) else None))
        rows.append(EvalRow(object_id, "multiview_Q",
                            multi.quality if isinstance(multi, Grasp) else None))
        runtimes[object_id] = (time.perf_counter() - start) * 1e3
    return EvalReport(tuple(rows), runtimes)


# --- CSV emission/parsing ---

def _fmt(value: float | None) -> str:
    return "N/A" if value is None else f"{value:.6f}"


def write_table1_csv(report: EvalReport, path) -> None:
    metrics = []
    for r in report.rows:
        if r.metric not in metrics:
            metrics.append(r.metric)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row"] + metrics)
        for label in ("Above", "Dataset"):
            writer.writerow([label] + [_fmt(report.value(label, m)) for m in metrics])


def read_table1_csv(path) -> dict[tuple[str, str], float]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        out = {}
        for row in reader:
            for metric, cell in zip(header[1:], row[1:]):
                out[(row[0], metric)] = float(cell)
    return out


def write_table2_csv(report: EvalReport, path) -> None:
    objects = []
    for r in report.rows:
        if r.label not in objects:
            objects.append(r.label)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["object", "topdown_Q", "multiview_Q", "winner"])
        for obj in objects:
            td = report.value(obj, "topdown_Q")
            mv = report.value(obj, "multiview_Q")
            if td is None and mv is None:
                winner = "none"
            elif td is None or (mv is not None and mv >= td):
                winner = "multiview"
            else:
                winner = "topdown"
            writer.writerow([obj, _fmt(td), _fmt(mv), winner])


def read_table2_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_plan_csv(results: list[tuple[str, int, float, object]], path) -> None:
    """One row per view plus a final row repeating the winner.

    results: (object_id, view_index, elevation_rad, Grasp-or-NoGraspFound);
    the winner is the max-quality grasp, ties to the lowest view index.
    """
    def row_of(object_id, view_index, elevation, outcome):
        if isinstance(outcome, Grasp):
            g = outcome
            return [object_id, view_index, f"{math.degrees(elevation):.3f}", 1,
                    f"{g.quality:.6f}", f"{g.position[0]:.6f}", f"{g.position[1]:.6f}",
                    f"{g.position[2]:.6f}", f"{g.phi:.6f}", f"{g.theta:.6f}",
                    f"{g.width:.6f}"]
        return [object_id, view_index, f"{math.degrees(elevation):.3f}", 0,
                "", "", "", "", "", "", ""]

    winner = None
    for object_id, view_index, elevation, outcome in results:
        if isinstance(outcome, Grasp) and (winner is None
                                           or outcome.quality > winner[3].quality):
            winner = (object_id, view_index, elevation, outcome)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["object", "view_index", "elevation_deg", "found", "Q",
                         "px", "py", "pz", "phi_rad", "theta_rad", "width_m"])
        for item in results:
            writer.writerow(row_of(*item))
        if winner is not None:
            writer.writerow(row_of(*winner))


# --- figures and diagnostic maps ---

def write_table1_figure(report: EvalReport, path) -> None:
    metrics = []
    for r in report.rows:
        if r.metric not in metrics:
            metrics.append(r.metric)
    shots = [int(m.split("-")[0]) for m in metrics]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label, marker in (("Above", "o"), ("Dataset", "s")):
        ax.plot(shots, [report.value(label, m) for m in metrics],
                marker=marker, label=label)
    ax.set_xlabel("input views")
    ax.set_ylabel("mean normalized depth error")
    ax.set_xticks(shots)
    ax.set_ylim(bottom=0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_table2_figure(report: EvalReport, path) -> None:
    objects = []
    for r in report.rows:
        if r.label not in objects:
            objects.append(r.label)
    td = [report.value(o, "topdown_Q") or 0.0 for o in objects]
    mv = [report.value(o, "multiview_Q") or 0.0 for o in objects]
    x = np.arange(len(objects))
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(objects)), 3.2))
    ax.bar(x - 0.2, td, width=0.4, label="top-down")
    ax.bar(x + 0.2, mv, width=0.4, label="multi-view")
    ax.set_xticks(x)
    ax.set_xticklabels(objects, rotation=20, ha="right")
    ax.set_ylabel("grasp quality Q")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_difference_map(pred: DepthImage, gt: DepthImage,
                         z_near: float, z_far: float, path) -> None:
    """|pred - gt| as an 8-bit PGM; validity disagreements show as white.

    Gray levels map the normalized error range [0, 0.1] onto [0, 255] with
    saturation, a fixed scale so maps are comparable across runs.
    """
    span = z_far - z_near
    both = pred.valid & gt.valid
    err = np.abs(pred.data - gt.data) / span
    gray = np.zeros(pred.data.shape, dtype=np.uint8)
    gray[both] = np.clip(err[both] / 0.1 * 255.0, 0, 255).astype(np.uint8)
    gray[pred.valid ^ gt.valid] = 255
    write_pgm(path, gray)


def load_planner_setup(config_path) -> tuple[GripperSpec, PlannerConfig]:
    """Parse the planner config JSON; errors name the offending field."""
    import json

    try:
        doc = json.loads(Path(config_path).read_text())
    except OSError as exc:
        raise ParseError(f"{config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{config_path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{config_path}: expected a JSON object")
    try:
        gripper = GripperSpec(**doc.get("gripper", {}))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{config_path}: gripper: {exc}") from exc
    planner_fields = dict(doc.get("planner", {}))
    if "seed" in doc:
        planner_fields["seed"] = doc["seed"]
    try:
        planner = PlannerConfig(**planner_fields)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{config_path}: planner: {exc}") from exc
    return gripper, planner
