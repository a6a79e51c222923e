"""Command-line entry point.

Subcommands: gen-data (render a per-object dataset), plan (multi-view grasp
planning from a manifest, on ground-truth or predicted depth), table1
(reconstruction error vs. shot count), table2 (top-down vs. multi-view
grasp quality).  Report commands write CSV plus a PNG figure; predicted
depth paths also drop grayscale difference maps.

Exit codes: 0 success, 1 no grasp found anywhere (plan), 2 usage or
input/output failure.  GRASPFORGE_SEED provides the default seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .dataset import (
    DatasetConfig,
    generate_object_dataset,
    read_manifest,
    select_input_views,
)
from .errors import GraspForgeError
from .grasp import Grasp, GripperSpec, PlannerConfig, plan_grasp_single_view
from .mesh import load_obj
from .reconstruct import (
    carve_depth,
    carve_silhouette,
    init_grid,
    render_depth_from_grid,
    save_grid,
)
from .reports import (
    load_planner_setup,
    run_table1_eval,
    run_table2_eval,
    write_difference_map,
    write_plan_csv,
    write_table1_csv,
    write_table1_figure,
    write_table2_csv,
    write_table2_figure,
)

EXIT_OK = 0
EXIT_NO_GRASP = 1
EXIT_ERROR = 2


def _default_seed() -> int:
    return int(os.environ.get("GRASPFORGE_SEED", "0"))


def _planner_setup(config_path, seed_arg):
    """Gripper/planner from the config file (or defaults), with the seed
    overridden by --seed or GRASPFORGE_SEED when either is present."""
    if config_path:
        gripper, planner = load_planner_setup(config_path)
    else:
        gripper, planner = GripperSpec(), PlannerConfig()
    if seed_arg is not None:
        planner = replace(planner, seed=seed_arg)
    elif "GRASPFORGE_SEED" in os.environ:
        planner = replace(planner, seed=_default_seed())
    return gripper, planner


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspforge",
        description="synthetic multi-view rendering, reconstruction and "
                    "grasp planning")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="render a per-object dataset")
    gen.add_argument("--mesh", required=True, help="input OBJ file")
    gen.add_argument("--out", required=True, help="output root directory")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--views-train", type=int, default=20)
    gen.add_argument("--views-test", type=int, default=10)
    gen.add_argument("--radius", type=float, default=0.6)
    gen.add_argument("--object-id", default=None,
                     help="defaults to the mesh file stem")

    plan = sub.add_parser("plan", help="plan a multi-view grasp from a manifest")
    plan.add_argument("--manifest", required=True)
    plan.add_argument("--views", type=int, default=5,
                      help="number of test views to plan over (top-down first)")
    plan.add_argument("--mode", choices=("gt", "predicted"), default="gt")
    plan.add_argument("--config", default=None,
                      help="JSON with gripper/planner parameters")
    plan.add_argument("--out", required=True, help="output CSV path")
    plan.add_argument("--seed", type=int, default=None)
    plan.add_argument("--grid-res", type=int, default=64)
    plan.add_argument("--grid-side", type=float, default=0.3)
    plan.add_argument("--save-grid", default=None,
                      help="optionally store the carved voxel grid (predicted mode)")

    t1 = sub.add_parser("table1", help="reconstruction error vs shot count")
    t1.add_argument("--manifest", action="append", required=True,
                    help="repeatable; one evaluation per dataset")
    t1.add_argument("--shots", default="1,3,9",
                    help="comma-separated input view counts")
    t1.add_argument("--out", required=True, help="output directory")
    t1.add_argument("--seed", type=int, default=None)
    t1.add_argument("--grid-res", type=int, default=64)
    t1.add_argument("--grid-side", type=float, default=0.3)
    t1.add_argument("--debug-identity", action="store_true",
                    help="score ground truth against itself (plumbing check)")

    t2 = sub.add_parser("table2", help="top-down vs multi-view grasp quality")
    t2.add_argument("--mesh", action="append", required=True,
                    help="repeatable; one row per object")
    t2.add_argument("--out", required=True, help="output directory")
    t2.add_argument("--seed", type=int, default=None)
    t2.add_argument("--radius", type=float, default=0.6)
    t2.add_argument("--config", default=None)
    return parser


def _cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    mesh_path = Path(args.mesh)
    mesh = load_obj(mesh_path)
    object_id = args.object_id or mesh_path.stem
    config = DatasetConfig(n_train=args.views_train, n_test=args.views_test,
                           radius=args.radius)
    dataset = generate_object_dataset(mesh, args.out, seed, config, object_id)
    print(f"wrote {len(dataset.train)} train / {len(dataset.test)} test views "
          f"under {dataset.root}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    gripper, planner = _planner_setup(args.config, args.seed)
    dataset = read_manifest(args.manifest)
    indices = select_input_views(dataset, args.views, planner.seed,
                                 require_topdown=True)
    views = [dataset.test[i].camera for i in indices]
    gt_depths = [dataset.test[i].load_depth() for i in indices]
    intr = views[0].intrinsics

    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)

    if args.mode == "predicted":
        grid = init_grid((0.0, 0.0, 0.0), args.grid_side, args.grid_res)
        for idx, view, depth in zip(indices, views, gt_depths):
            grid = carve_silhouette(grid, dataset.test[idx].load_mask(), view)
            grid = carve_depth(grid, depth, view)
        if args.save_grid:
            save_grid(grid, args.save_grid)
        depths = [render_depth_from_grid(grid, v) for v in views]
        diff_dir = Path(args.out).parent
        for i, (pred, gt) in enumerate(zip(depths, gt_depths)):
            name = f"{dataset.object_id}_view{i:03d}_diff.pgm"
            write_difference_map(pred, gt, intr.z_near, intr.z_far,
                                 diff_dir / name)
    else:
        depths = gt_depths

    results = []
    found_any = False
    for i, (depth, view) in enumerate(zip(depths, views)):
        outcome = plan_grasp_single_view(depth, view, gripper, planner,
                                         view_index=i)
        found_any = found_any or isinstance(outcome, Grasp)
        results.append((dataset.object_id, i, view.elevation, outcome))
    write_plan_csv(results, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK if found_any else EXIT_NO_GRASP


def _cmd_table1(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    shots = [int(tok) for tok in args.shots.split(",") if tok]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for manifest in args.manifest:
        dataset = read_manifest(manifest)
        report = run_table1_eval(dataset, shots, seed,
                                 grid_side=args.grid_side,
                                 grid_resolution=args.grid_res,
                                 debug_identity=args.debug_identity,
                                 diff_dir=out_dir)
        write_table1_csv(report, out_dir / f"table1_{dataset.object_id}.csv")
        write_table1_figure(report, out_dir / f"table1_{dataset.object_id}.png")
        print(f"table1[{dataset.object_id}]: "
              + ", ".join(f"{k}={v:.0f}ms" for k, v in report.runtimes_ms.items()))
    return EXIT_OK


def _cmd_table2(args) -> int:
    gripper, planner = _planner_setup(args.config, args.seed)
    objects = []
    for mesh_path in args.mesh:
        path = Path(mesh_path)
        objects.append((path.stem, load_obj(path)))
    report = run_table2_eval(objects, gripper, planner.seed, radius=args.radius,
                             planner=planner)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table2_csv(report, out_dir / "table2.csv")
    write_table2_figure(report, out_dir / "table2.png")
    print(f"wrote {out_dir / 'table2.csv'}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "plan": _cmd_plan,
    "table1": _cmd_table1,
    "table2": _cmd_table2,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GraspForgeError, OSError) as exc:
        print(f"graspforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
