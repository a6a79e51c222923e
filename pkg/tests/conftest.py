import numpy as np
import pytest

from graspforge.dataset import DatasetConfig, generate_object_dataset
from graspforge.geometry import view_looking_at
from graspforge.mesh import make_box, make_cylinder, make_uv_sphere
from graspforge.render import render_depth

# One seed for every deterministic artifact the suite builds.
SUITE_SEED = 11

FIXTURE_MESHES = {
    "sphere": lambda: make_uv_sphere(0.05),
    "thinbox": lambda: make_box(0.1, 0.1, 0.03),
    "cylinder": lambda: make_cylinder(0.03, 0.08),
    # squat cylinder; third convex fixture for the shot-count evaluation
    "puck": lambda: make_cylinder(0.035, 0.03),
}


@pytest.fixture(scope="session")
def sphere_mesh():
    return FIXTURE_MESHES["sphere"]()


@pytest.fixture(scope="session")
def thinbox_mesh():
    return FIXTURE_MESHES["thinbox"]()


@pytest.fixture(scope="session")
def cylinder_mesh():
    return FIXTURE_MESHES["cylinder"]()


@pytest.fixture(scope="session")
def topdown_view():
    return view_looking_at((0.0, 0.0, 0.6), (0.0, 0.0, 0.0))


@pytest.fixture(scope="session")
def sphere_topdown_depth(sphere_mesh, topdown_view):
    return render_depth(sphere_mesh, topdown_view)


@pytest.fixture(scope="session")
def fixture_datasets(tmp_path_factory):
    """Rendered datasets for the three convex fixtures, built once."""
    root = tmp_path_factory.mktemp("datasets")
    out = {}
    for name, build in FIXTURE_MESHES.items():
        out[name] = generate_object_dataset(build(), root, SUITE_SEED,
                                            DatasetConfig(), object_id=name)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(SUITE_SEED)
