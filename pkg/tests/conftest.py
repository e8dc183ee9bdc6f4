import numpy as np
import pytest

from featurescope.fixtures import case_study_collection, write_case_study_manifest
from featurescope.model import (
    AtomFrame,
    FeatureTable,
    SystemCollection,
    SystemRecord,
    VolumetricGrid,
)

DATA_DIR = __file__.rsplit("/", 1)[0] + "/data"


@pytest.fixture(scope="session")
def case_coll():
    return case_study_collection()


@pytest.fixture(scope="session")
def case_manifest(tmp_path_factory):
    dest = tmp_path_factory.mktemp("case_study")
    return write_case_study_manifest(dest)


def small_grid(values, side=None, step=0.5, features=None):
    """Cubic grid helper; values length fixes the side unless given."""
    values = np.asarray(values, dtype=np.float64)
    if side is None:
        side = round(values.size ** (1 / 3))
    return VolumetricGrid(
        origin=np.zeros(3),
        basis=np.eye(3) * step,
        shape=(side, side, side),
        values=values,
        features=features,
    )


def make_table(**cols):
    names = tuple(cols)
    arrays = tuple(np.asarray(v, dtype=np.float64) for v in cols.values())
    return FeatureTable(names=names, units=(None,) * len(names), columns=arrays)


def atoms_collection(**cols):
    """One-system collection with the given atom feature columns."""
    table = make_table(**cols)
    frame = AtomFrame(
        positions=np.zeros((table.n_points, 3)),
        elements=("C",) * table.n_points,
        features=table,
    )
    return SystemCollection([SystemRecord(system_id="s", atoms=frame)])


def two_system_collection():
    """Tiny two-system pool: atoms + voxels, distinct values per system."""
    rng = np.random.default_rng(5)

    def system(sid, n_atoms, side, offset):
        table = make_table(
            e=offset + rng.standard_normal(n_atoms),
            q=rng.standard_normal(n_atoms),
        )
        atoms = AtomFrame(
            positions=rng.uniform(0, 3, (n_atoms, 3)),
            elements=("C",) * n_atoms,
            features=table,
        )
        n_vox = side**3
        density = np.abs(rng.standard_normal(n_vox)) + 0.01
        vox = make_table(
            density=density,
            err=offset + rng.standard_normal(n_vox),
        )
        grid = small_grid(density, side=side, features=vox)
        return SystemRecord(system_id=sid, atoms=atoms, grid=grid)

    return SystemCollection([system("s1", 4, 3, 0.0), system("s2", 6, 4, 2.0)])
