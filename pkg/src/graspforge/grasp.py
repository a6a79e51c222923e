"""Antipodal parallel-jaw grasp planning on depth images.

Candidates are pairs of valid pixels.  The contact normal at a pixel comes
from central differences of the unprojected surface where the full
neighborhood is valid, and from the silhouette gradient (in the image
plane) at depth-boundary pixels; the boundary case is what makes flat
objects graspable across their silhouette, exactly like jaws closing on
the visible extent of a slab.

Quality is the analytic functional q_angle * q_width gated by friction-cone
force closure and a swept-finger collision test against the observed
surface.  The cross-entropy refiner resamples grasp centers/angles from
elite candidates and re-derives contacts at silhouette exits.

Everything is deterministic for a fixed seed; per-view planner seeds are
derived from (seed, view_index) so multi-view planning is order-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateProjection,
    DimensionMismatch,
    EmptyInput,
    EmptyPool,
    NonUnitInput,
)
from .geometry import CameraView, pixels_to_camera, unproject_pixel
from .images import DepthImage

_UNIT_TOL = 1e-9
_AXIS_PLANE_TOL = 1e-9

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class GripperSpec:
    """Parallel-jaw gripper geometry and friction."""

    max_width: float = 0.05
    finger_radius: float = 0.005
    friction_mu: float = 0.5
    # Lateral clearance added outside each contact when placing the swept
    # finger cylinders; keeps convex surfaces from self-colliding.
    collision_clearance: float = 0.001

    def __post_init__(self):
        if self.max_width <= 0:
            raise ValueError("max_width must be positive")
        if self.friction_mu < 0:
            raise ValueError("friction_mu must be >= 0")
        if self.finger_radius < 0 or self.collision_clearance < 0:
            raise ValueError("finger geometry must be non-negative")


@dataclass(frozen=True)
class GraspCandidate:
    """A contact pair in one view's image; geometry in the camera frame.

    contact_a/b are (u, v, depth); axis is the unit camera-frame direction
    from contact a to contact b.  normal_a/b are the contact normals used
    for scoring (stored so hand-constructed candidates are scoreable).
    """

    contact_a: tuple[float, float, float]
    contact_b: tuple[float, float, float]
    axis: np.ndarray
    width: float
    center_px: tuple[float, float]
    center_depth: float
    normal_a: np.ndarray
    normal_b: np.ndarray

    def __post_init__(self):
        for name in ("axis", "normal_a", "normal_b"):
            vec = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            if abs(np.linalg.norm(vec) - 1.0) > 1e-6:
                raise ValueError(f"{name} must be unit length")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)
        if self.width <= 0:
            raise ValueError("width must be positive")


@dataclass(frozen=True)
class Grasp:
    """World-frame grasp: position, table-plane angle phi in [0, pi),
    approach elevation theta in [0, pi/2], quality in [0, 1]."""

    position: np.ndarray
    phi: float
    theta: float
    quality: float
    width: float
    source_view: int = 0

    def __post_init__(self):
        p = np.array(self.position, dtype=np.float64).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        if not (0.0 <= self.phi < math.pi):
            raise ValueError("phi must lie in [0, pi)")
        if not (0.0 <= self.theta <= math.pi / 2):
            raise ValueError("theta must lie in [0, pi/2]")
        if not (0.0 <= self.quality <= 1.0):
            raise ValueError("quality must lie in [0, 1]")


@dataclass(frozen=True)
class NoGraspFound:
    """First-class 'no grasp' outcome (mirrors an N/A table entry)."""

    reason: str = ""


@dataclass(frozen=True)
class PlannerConfig:
    num_candidates: int = 100
    cem_iters: int = 3
    population: int = 100
    elite_frac: float = 0.1
    seed: int = 0
    table_normal: tuple[float, float, float] = (0.0, 0.0, 1.0)


def derive_view_seed(seed: int, view_index: int) -> int:
    """Stable per-view RNG seed from (seed, view_index)."""
    return int(np.random.SeedSequence([seed, view_index]).generate_state(1)[0])


# --- normals ---

def estimate_normals(depth: DepthImage, view: CameraView) -> np.ndarray:
    """Unit surface normals (camera frame) per pixel, NaN where undefined.

    Central differences of the unprojected 4-neighborhood, oriented toward
    the camera (n_z < 0).  Pixels whose neighborhood touches an invalid or
    out-of-image pixel get no normal.
    """
    h, w = depth.data.shape
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    pts = pixels_to_camera(uu, vv, depth.data, view.intrinsics)
    valid = depth.valid

    normals = np.full((h, w, 3), np.nan)
    if h < 3 or w < 3:
        return normals
    core_valid = (valid[1:-1, 1:-1] & valid[1:-1, :-2] & valid[1:-1, 2:]
                  & valid[:-2, 1:-1] & valid[2:, 1:-1])
    ddu = pts[1:-1, 2:] - pts[1:-1, :-2]
    ddv = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n = np.cross(ddu, ddv)
    norm = np.linalg.norm(n, axis=2)
    ok = core_valid & (norm > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = n / norm[:, :, None]
    n[n[:, :, 2] > 0] *= -1.0
    normals[1:-1, 1:-1][ok] = n[ok]
    return normals


def contact_normal(depth: DepthImage, view: CameraView, u: int, v: int) -> np.ndarray | None:
    """Contact normal for grasp sampling at pixel (u, v), or None.

    Interior pixels use the same central-difference normal as
    estimate_normals.  Pixels on a validity boundary instead take the
    in-image-plane silhouette gradient (Sobel of the validity mask),
    pointing out of the object; out-of-image neighbors count as invalid.
    """
    h, w = depth.data.shape
    if not (0 <= u < w and 0 <= v < h) or depth.data[v, u] <= 0.0:
        return None
    valid = depth.valid

    def ok(vv: int, uu: int) -> bool:
        return 0 <= uu < w and 0 <= vv < h and valid[vv, uu]

    if ok(v, u - 1) and ok(v, u + 1) and ok(v - 1, u) and ok(v + 1, u):
        us = np.array([u - 1.0, u + 1.0, u, u])
        vs = np.array([v, v, v - 1.0, v + 1.0])
        ds = depth.data[vs.astype(int), us.astype(int)]
        p = pixels_to_camera(us, vs, ds, view.intrinsics)
        n = np.cross(p[1] - p[0], p[3] - p[2])
        norm = np.linalg.norm(n)
        if norm == 0.0:
            return None
        n = n / norm
        return -n if n[2] > 0 else n

    patch = np.zeros((3, 3))
    for dv in (-1, 0, 1):
        for du in (-1, 0, 1):
            patch[dv + 1, du + 1] = 1.0 if ok(v + dv, u + du) else 0.0
    gx = float(np.sum(_SOBEL_X * patch))
    gy = float(np.sum(_SOBEL_Y * patch))
    norm = math.hypot(gx, gy)
    if norm == 0.0:
        return None
    # gradient points into the object; the contact normal points out
    return np.array([-gx / norm, -gy / norm, 0.0])


# --- candidates and scoring ---

def candidate_from_pixels(depth: DepthImage, view: CameraView, gripper: GripperSpec,
                          pixel_a: tuple[int, int], pixel_b: tuple[int, int],
                          ) -> GraspCandidate | None:
    """Build a candidate from two valid pixels, or None when impossible
    (invalid pixels, no normal, zero separation, width over the jaw limit)."""
    ua, va = int(pixel_a[0]), int(pixel_a[1])
    ub, vb = int(pixel_b[0]), int(pixel_b[1])
    if (ua, va) == (ub, vb):
        return None
    h, w = depth.data.shape
    if not (0 <= ua < w and 0 <= va < h and 0 <= ub < w and 0 <= vb < h):
        return None
    da = depth.data[va, ua]
    db = depth.data[vb, ub]
    if da <= 0.0 or db <= 0.0:
        return None
    pa = pixels_to_camera(float(ua), float(va), da, view.intrinsics)
    pb = pixels_to_camera(float(ub), float(vb), db, view.intrinsics)
    width = float(np.linalg.norm(pb - pa))
    if width <= 1e-9 or width > gripper.max_width:
        return None
    axis = (pb - pa) / width
    n_a = contact_normal(depth, view, ua, va)
    n_b = contact_normal(depth, view, ub, vb)
    if n_a is None or n_b is None:
        return None
    return GraspCandidate(
        contact_a=(float(ua), float(va), float(da)),
        contact_b=(float(ub), float(vb), float(db)),
        axis=axis, width=width,
        center_px=((ua + ub) / 2.0, (va + vb) / 2.0),
        center_depth=(da + db) / 2.0,
        normal_a=n_a, normal_b=n_b,
    )


def _require_unit(name: str, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(vec) - 1.0) > _UNIT_TOL:
        raise NonUnitInput(f"{name} must be unit length")
    return vec


def antipodal_angles(n_a: np.ndarray, n_b: np.ndarray, axis: np.ndarray,
                     ) -> tuple[float, float]:
    """Deviation of each contact normal from the (signed) grasp axis."""
    alpha_a = math.acos(float(np.clip(-np.dot(n_a, axis), -1.0, 1.0)))
    alpha_b = math.acos(float(np.clip(np.dot(n_b, axis), -1.0, 1.0)))
    return alpha_a, alpha_b


def check_force_closure(n_a, n_b, axis, mu: float) -> bool:
    """True iff both normals lie within atan(mu) of the signed grasp axis."""
    n_a = _require_unit("n_a", n_a)
    n_b = _require_unit("n_b", n_b)
    axis = _require_unit("axis", axis)
    cone = math.atan(mu)
    alpha_a, alpha_b = antipodal_angles(n_a, n_b, axis)
    return alpha_a <= cone and alpha_b <= cone


class _Scene:
    """Per-(depth, view) caches reused across many score evaluations."""

    def __init__(self, depth: DepthImage, view: CameraView):
        self.depth = depth
        self.view = view
        ys, xs = np.nonzero(depth.valid)
        self.points = pixels_to_camera(xs.astype(np.float64), ys.astype(np.float64),
                                       depth.data[ys, xs], view.intrinsics)

    def finger_blocked(self, tip: np.ndarray, radius: float) -> bool:
        """Any observed surface inside the swept cylinder above the tip?"""
        lat2 = (self.points[:, 0] - tip[0]) ** 2 + (self.points[:, 1] - tip[1]) ** 2
        return bool(np.any((lat2 <= radius * radius)
                           & (self.points[:, 2] < tip[2] - 1e-12)))


def _score_candidate(c: GraspCandidate, scene: _Scene, gripper: GripperSpec) -> float:
    cone = math.atan(gripper.friction_mu)
    alpha_a, alpha_b = antipodal_angles(c.normal_a, c.normal_b, c.axis)
    worst = max(alpha_a, alpha_b)
    if worst > cone:
        return 0.0

    # Swept-jaw collision: finger cylinders approach along the optical axis
    # toward tips placed just outside each contact along the grasp axis.
    offset = gripper.finger_radius + gripper.collision_clearance
    pa = pixels_to_camera(c.contact_a[0], c.contact_a[1], c.contact_a[2],
                          scene.view.intrinsics)
    pb = pixels_to_camera(c.contact_b[0], c.contact_b[1], c.contact_b[2],
                          scene.view.intrinsics)
    tip_a = pa - offset * c.axis
    tip_b = pb + offset * c.axis
    if scene.finger_blocked(tip_a, gripper.finger_radius) \
            or scene.finger_blocked(tip_b, gripper.finger_radius):
        return 0.0

    q_angle = 1.0 if cone == 0.0 else 1.0 - worst / cone
    q_width = 1.0 - c.width / gripper.max_width
    return q_angle * q_width


def score_grasp(c: GraspCandidate, depth: DepthImage, view: CameraView,
                gripper: GripperSpec) -> float:
    """Quality in [0, 1]: q_angle * q_width, zero without force closure or
    with a finger sweep colliding against the observed surface."""
    return _score_candidate(c, _Scene(depth, view), gripper)


def enumerate_candidates(depth: DepthImage, view: CameraView,
                         gripper: GripperSpec) -> list[GraspCandidate]:
    """Candidates for every unordered valid pixel pair (raster order).

    Quadratic in the number of valid pixels; intended for small images and
    brute-force verification.
    """
    ys, xs = np.nonzero(depth.valid)
    pixels = list(zip(xs.tolist(), ys.tolist()))
    out = []
    for i in range(len(pixels)):
        for j in range(i + 1, len(pixels)):
            c = candidate_from_pixels(depth, view, gripper, pixels[i], pixels[j])
            if c is not None:
                out.append(c)
    return out


def sample_antipodal_candidates(depth: DepthImage, view: CameraView,
                                gripper: GripperSpec, n: int, seed: int,
                                ) -> list[GraspCandidate]:
    """Up to n distinct antipodal candidates from random valid-pixel pairs.

    A pair qualifies when its width fits the jaws and both contact normals
    lie inside the friction cone around the grasp axis.  Deterministic per
    seed; an empty result simply means the geometry admits no pair.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ys, xs = np.nonzero(depth.valid)
    m = len(xs)
    if m < 2:
        return []
    rng = np.random.default_rng(seed)
    cone = math.atan(gripper.friction_mu)
    out: list[GraspCandidate] = []
    seen: set[tuple[int, int]] = set()
    attempts = max(60 * n, 600)
    for _ in range(attempts):
        i, j = rng.integers(0, m, size=2)
        if i == j:
            continue
        if i > j:
            i, j = j, i
        key = (int(i), int(j))
        if key in seen:
            continue
        seen.add(key)
        c = candidate_from_pixels(depth, view, gripper,
                                  (int(xs[i]), int(ys[i])),
                                  (int(xs[j]), int(ys[j])))
        if c is None:
            continue
        alpha_a, alpha_b = antipodal_angles(c.normal_a, c.normal_b, c.axis)
        if alpha_a <= cone and alpha_b <= cone:
            out.append(c)
            if len(out) == n:
                break
    return out


# --- cross-entropy refinement ---

# Standard deviation floors for the (u, v, angle, depth) search distribution.
_CEM_STD_FLOOR = np.array([0.5, 0.5, 0.05, 0.002])


def _candidate_params(c: GraspCandidate) -> np.ndarray:
    du = c.contact_b[0] - c.contact_a[0]
    dv = c.contact_b[1] - c.contact_a[1]
    angle = math.atan2(dv, du) % math.pi
    return np.array([c.center_px[0], c.center_px[1], angle, c.center_depth])


def _march_to_boundary(valid: np.ndarray, u0: int, v0: int,
                       du: float, dv: float, max_steps: int) -> tuple[int, int] | None:
    """Last valid pixel along (du, dv) before validity ends.

    None when the march leaves the image while still on valid pixels (the
    silhouette exit is unseen) or exceeds max_steps.
    """
    h, w = valid.shape
    last = (u0, v0)
    for s in range(1, max_steps + 1):
        u = int(math.floor(u0 + s * du + 0.5))
        v = int(math.floor(v0 + s * dv + 0.5))
        if not (0 <= u < w and 0 <= v < h):
            return None
        if not valid[v, u]:
            return last
        last = (u, v)
    return None


def _derive_candidate(depth: DepthImage, view: CameraView, gripper: GripperSpec,
                      params: np.ndarray) -> GraspCandidate | None:
    """Re-derive antipodal contacts for a sampled (u, v, angle, depth) point:
    walk both ways from the center to the silhouette exits."""
    u0 = int(math.floor(params[0] + 0.5))
    v0 = int(math.floor(params[1] + 0.5))
    h, w = depth.data.shape
    if not (0 <= u0 < w and 0 <= v0 < h) or depth.data[v0, u0] <= 0.0:
        return None
    angle = float(params[2])
    du, dv = math.cos(angle), math.sin(angle)
    max_steps = int(math.ceil(max(view.intrinsics.fx, view.intrinsics.fy)
                              * gripper.max_width / view.intrinsics.z_near)) + 2
    valid = depth.valid
    a = _march_to_boundary(valid, u0, v0, -du, -dv, max_steps)
    b = _march_to_boundary(valid, u0, v0, du, dv, max_steps)
    if a is None or b is None or a == b:
        return None
    return candidate_from_pixels(depth, view, gripper, a, b)


def _best_index(scores: np.ndarray) -> int:
    """Argmax with ties resolved to the lowest index."""
    return int(np.argmax(scores))


def cem_refine(depth: DepthImage, view: CameraView, gripper: GripperSpec,
               pool: list[GraspCandidate], iters: int = 3, population: int = 100,
               elite_frac: float = 0.1, seed: int = 0,
               score_fn=None) -> tuple[GraspCandidate, float]:
    """Cross-entropy refinement over (u, v, in-plane angle, depth).

    Each iteration fits a diagonal Gaussian to the elite fraction, resamples,
    re-derives antipodal contacts and rescores.  The best candidate ever seen
    (including the initial pool) is returned, so the result never scores
    below the pool maximum.  iters=0 reduces to the pool argmax with ties
    broken by lowest index.  Deterministic per seed.
    """
    if not pool:
        raise EmptyPool("cem_refine needs at least one candidate")
    if score_fn is None:
        scene = _Scene(depth, view)
        score_fn = lambda c: _score_candidate(c, scene, gripper)  # noqa: E731

    scores = np.array([score_fn(c) for c in pool])
    best_i = _best_index(scores)
    best_c, best_q = pool[best_i], float(scores[best_i])
    if iters == 0:
        return best_c, best_q

    rng = np.random.default_rng(seed)
    gen = list(pool)
    gen_scores = scores
    for _ in range(iters):
        order = np.lexsort((np.arange(len(gen_scores)), -gen_scores))
        n_elite = max(1, int(round(elite_frac * len(gen))))
        elite = np.stack([_candidate_params(gen[i]) for i in order[:n_elite]])
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), _CEM_STD_FLOOR)
        samples = rng.normal(mean, std, size=(population, 4))
        new_gen, new_scores = [], []
        for row in samples:
            c = _derive_candidate(depth, view, gripper, row)
            if c is None:
                continue
            q = score_fn(c)
            new_gen.append(c)
            new_scores.append(q)
            if q > best_q:
                best_c, best_q = c, q
        if not new_gen:
            break
        gen = new_gen
        gen_scores = np.array(new_scores)
    return best_c, best_q


# --- world-frame conversion and planners ---

def grasp_to_world(c: GraspCandidate, quality: float, view: CameraView,
                   table_normal=(0.0, 0.0, 1.0), source_view: int = 0) -> Grasp:
    """Convert an image-frame candidate into the world grasp (p, phi, theta).

    theta is the view's elevation (the approach rides the optical axis);
    phi is the table-plane angle of the projected grasp axis, measured from
    world +x, folded into [0, pi).  Raises DegenerateProjection when the
    grasp axis is parallel to the table normal.
    """
    normal = _require_unit("table_normal", table_normal)
    position = unproject_pixel(c.center_px[0], c.center_px[1], c.center_depth, view)
    axis_world = view.pose.rotation.T @ c.axis
    in_plane = axis_world - (axis_world @ normal) * normal
    if np.linalg.norm(in_plane) <= _AXIS_PLANE_TOL:
        raise DegenerateProjection("grasp axis is parallel to the table normal")

    x_ref = np.array([1.0, 0.0, 0.0])
    x_ref = x_ref - (x_ref @ normal) * normal
    x_norm = np.linalg.norm(x_ref)
    if x_norm <= _AXIS_PLANE_TOL:
        raise DegenerateProjection("table normal is parallel to world +x")
    x_ref /= x_norm
    y_ref = np.cross(normal, x_ref)
    phi = math.atan2(float(in_plane @ y_ref), float(in_plane @ x_ref)) % math.pi
    if phi >= math.pi:  # float mod of a tiny negative angle folds to pi itself
        phi = 0.0
    return Grasp(position=position, phi=phi, theta=view.elevation,
                 quality=quality, width=c.width, source_view=source_view)


def _expressible(c: GraspCandidate, view: CameraView, normal: np.ndarray) -> bool:
    axis_world = view.pose.rotation.T @ c.axis
    in_plane = axis_world - (axis_world @ normal) * normal
    return np.linalg.norm(in_plane) > _AXIS_PLANE_TOL


def plan_grasp_single_view(depth: DepthImage, view: CameraView,
                           gripper: GripperSpec, config: PlannerConfig | None = None,
                           view_index: int = 0) -> Grasp | NoGraspFound:
    """Sample -> CEM refine -> world grasp for one depth image.

    NoGraspFound when no candidate exists or nothing scores above zero.
    Candidates whose grasp axis is parallel to the table normal cannot be
    expressed as (p, phi, theta) and are scored zero here.
    """
    config = config or PlannerConfig()
    normal = _require_unit("table_normal", config.table_normal)
    seed = derive_view_seed(config.seed, view_index)
    pool = sample_antipodal_candidates(depth, view, gripper,
                                       config.num_candidates, seed)
    if not pool:
        return NoGraspFound("no antipodal candidates")

    scene = _Scene(depth, view)

    def planner_score(c: GraspCandidate) -> float:
        if not _expressible(c, view, normal):
            return 0.0
        return _score_candidate(c, scene, gripper)

    best_c, best_q = cem_refine(depth, view, gripper, pool,
                                iters=config.cem_iters,
                                population=config.population,
                                elite_frac=config.elite_frac,
                                seed=seed, score_fn=planner_score)
    if best_q <= 0.0:
        return NoGraspFound("no candidate with positive quality")
    return grasp_to_world(best_c, best_q, view, normal, source_view=view_index)


def plan_grasp_multiview(depths: list[DepthImage], views: list[CameraView],
                         gripper: GripperSpec, config: PlannerConfig | None = None,
                         ) -> Grasp | NoGraspFound:
    """Best single-view grasp across all views (argmax quality, ties to the
    lowest view index); NoGraspFound only when every view fails."""
    if len(depths) == 0 or len(views) == 0:
        raise EmptyInput("need at least one depth image and view")
    if len(depths) != len(views):
        raise DimensionMismatch(f"{len(depths)} depths vs {len(views)} views")
    config = config or PlannerConfig()

    best: Grasp | None = None
    for i, (depth, view) in enumerate(zip(depths, views)):
        result = plan_grasp_single_view(depth, view, gripper, config, view_index=i)
        if isinstance(result, Grasp) and (best is None or result.quality > best.quality):
            best = result
    return best if best is not None else NoGraspFound("all views failed")
