"""Synthetic dataset generators for tests, benchmarks, and demos.

Two families:

* a three-system molecular fixture whose voxel features form three
  well-separated clusters, so tail brushes have a closed-form answer;
* a single-system million-voxel manifest for latency benchmarks.

Both can be materialized as manifest directories (cube + CSV sidecars)
that reload bit-exactly, or built in memory without touching disk.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .ingest.cube import write_cube
from .model import AtomFrame, FeatureTable, SystemCollection, SystemRecord, VolumetricGrid

N_AUX = 45  # filler columns so the voxel schema reaches 47 + density

# Cluster means: the top cluster is separated from the middle one by
# 10 sigma on both axes, so a brush at the midpoint selects it exactly
# (mislabel odds ~1e-23 per point).
_ERROR_MEANS = (0.10, 0.40, 0.90)
_ERROR_SIGMA = 0.02
_DERIV_SLOPE = 0.9
_DERIV_SIGMA = 0.01
_LOG_DENSITY_MEANS = (-1.5, -0.8, -0.2)
_LOG_DENSITY_SIGMA = 0.25

# Fraction of voxels in each cluster, per system.  Every system keeps a
# healthy share of the top cluster.
_CLUSTER_WEIGHTS = {
    "co2": (0.50, 0.20, 0.30),
    "n2o": (0.25, 0.50, 0.25),
    "hcooh": (0.30, 0.30, 0.40),
}

_MOLECULES = {
    "co2": (
        ("C", "O", "O"),
        [(0.0, 0.0, 0.0), (0.0, 0.0, 1.16), (0.0, 0.0, -1.16)],
    ),
    "n2o": (
        ("N", "N", "O"),
        [(0.0, 0.0, -1.13), (0.0, 0.0, 0.0), (0.0, 0.0, 1.19)],
    ),
    "hcooh": (
        ("C", "O", "O", "H", "H"),
        [
            (0.000, 0.398, 0.0),
            (1.180, 0.655, 0.0),
            (-0.870, 1.426, 0.0),
            (-0.576, -0.541, 0.0),
            (-1.789, 1.093, 0.0),
        ],
    ),
}


def tail_threshold(axis: str) -> float:
    """Midpoint between the middle and top cluster on the given axis."""
    if axis == "error":
        return 0.5 * (_ERROR_MEANS[1] + _ERROR_MEANS[2])
    if axis == "derivative":
        return 0.5 * _DERIV_SLOPE * (_ERROR_MEANS[1] + _ERROR_MEANS[2])
    raise ValueError(f"no tail threshold for axis {axis!r}")


def _aux_names():
    return tuple(f"aux{i:02d}" for i in range(N_AUX))


def _case_study_system(system_id: str, seed: int, side: int) -> SystemRecord:
    rng = np.random.Generator(np.random.Philox([seed, _system_index(system_id)]))
    n = side**3

    labels = rng.choice(3, size=n, p=_CLUSTER_WEIGHTS[system_id])
    error = rng.normal(np.take(_ERROR_MEANS, labels), _ERROR_SIGMA)
    derivative = _DERIV_SLOPE * error + rng.normal(0.0, _DERIV_SIGMA, size=n)
    density = 10.0 ** rng.normal(
        np.take(_LOG_DENSITY_MEANS, labels), _LOG_DENSITY_SIGMA
    )

    aux = rng.standard_normal((n, N_AUX))
    aux += 0.15 * labels[:, None] * np.linspace(-1.0, 1.0, N_AUX)

    names = ("density", "error", "derivative", *_aux_names())
    columns = (density, error, derivative, *(aux[:, i].copy() for i in range(N_AUX)))
    table = FeatureTable(names=names, units=(None,) * len(names), columns=columns)

    step = 0.25
    grid = VolumetricGrid(
        origin=np.zeros(3),
        basis=np.eye(3) * step,
        shape=(side, side, side),
        values=table.column("density"),
        features=table,
    )

    elements, coords = _MOLECULES[system_id]
    positions = np.asarray(coords, dtype=np.float64) + 0.5 * side * step
    atom_table = FeatureTable(
        names=("error", "charge"),
        units=(None, None),
        columns=(
            rng.normal(0.3, 0.1, size=len(elements)),
            rng.normal(0.0, 0.3, size=len(elements)),
        ),
    )
    frame = AtomFrame(positions=positions, elements=elements, features=atom_table)
    return SystemRecord(system_id=system_id, atoms=frame, grid=grid)


def _system_index(system_id: str) -> int:
    return list(_CLUSTER_WEIGHTS).index(system_id)


def case_study_collection(seed: int = 7, side: int = 16) -> SystemCollection:
    """Three systems, side^3 voxels each, 47 voxel features + density."""
    return SystemCollection(
        [_case_study_system(sid, seed, side) for sid in _CLUSTER_WEIGHTS]
    )


def _feature_csv_bytes(table: FeatureTable, names) -> bytes:
    out = io.StringIO()
    out.write(",".join(names))
    out.write("\n")
    data = np.column_stack([table.column(n) for n in names])
    # %.17g survives the round-trip parser bit-exactly
    frame = pd.DataFrame(data)
    frame.to_csv(out, float_format="%.17g", header=False, index=False)
    return out.getvalue().encode("ascii")


def write_case_study_manifest(dest_dir, seed: int = 7, side: int = 16) -> Path:
    """Materialize the case-study fixture as a manifest directory.

    Reloading the returned manifest yields a collection bitwise equal to
    ``case_study_collection(seed, side)``.
    """
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid in _CLUSTER_WEIGHTS:
        record = _case_study_system(sid, seed, side)
        cube = write_cube(record.grid, record.atoms, comment=f"{sid} fixture")
        (dest / f"{sid}.cube").write_bytes(cube)
        voxel_names = [n for n in record.grid.features.names if n != "density"]
        (dest / f"{sid}_vox.csv").write_bytes(
            _feature_csv_bytes(record.grid.features, voxel_names)
        )
        (dest / f"{sid}_atoms.csv").write_bytes(
            _feature_csv_bytes(record.atoms.features, record.atoms.features.names)
        )
        entries.append(
            {
                "system_id": sid,
                "volumetric_file": f"{sid}.cube",
                "voxel_features": f"{sid}_vox.csv",
                "atom_features": f"{sid}_atoms.csv",
            }
        )
    path = dest / "manifest.json"
    path.write_text(json.dumps({"manifest_version": 1, "systems": entries}, indent=1))
    return path


def bench_grid(side: int = 100, seed: int = 2024) -> VolumetricGrid:
    """side^3 voxels with a smooth positive density (three blobs)."""
    rng = np.random.Generator(np.random.Philox([seed, 99]))
    step = 10.0 / side
    axes = (np.arange(side) + 0.5) * step
    x, y, z = np.meshgrid(axes, axes, axes, indexing="ij")
    pos = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    density = np.full(pos.shape[0], 1e-4)
    for _ in range(3):
        center = rng.uniform(2.0, 8.0, size=3)
        width = rng.uniform(0.8, 1.6)
        amp = rng.uniform(0.5, 2.0)
        d2 = ((pos - center) ** 2).sum(axis=1)
        density += amp * np.exp(-d2 / (2.0 * width**2))

    return VolumetricGrid(
        origin=np.zeros(3),
        basis=np.eye(3) * step,
        shape=(side, side, side),
        values=density,
    )


def write_bench_manifest(dest_dir, side: int = 100, n_aux: int = 46, seed: int = 2024) -> Path:
    """One system, side^3 voxels, ``n_aux`` sidecar columns + density.

    Defaults produce 10^6 points x 47 features.  The sidecar is written
    at reduced precision (%.7g): benchmarks care about shape, not bits.
    """
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    grid = bench_grid(side, seed)
    empty = AtomFrame(positions=np.zeros((0, 3)), elements=())
    (dest / "bench.cube").write_bytes(write_cube(grid, empty, comment="bench fixture"))

    rng = np.random.Generator(np.random.Philox([seed, 7]))
    n = grid.n_voxels
    names = [f"f{i:02d}" for i in range(n_aux)]
    data = rng.standard_normal((n, n_aux))
    data *= rng.uniform(0.5, 3.0, size=n_aux)
    data += rng.uniform(-2.0, 2.0, size=n_aux)
    with open(dest / "bench_vox.csv", "w") as fh:
        fh.write(",".join(names))
        fh.write("\n")
        pd.DataFrame(data).to_csv(
            fh, float_format="%.7g", header=False, index=False, chunksize=200_000
        )

    path = dest / "manifest.json"
    path.write_text(
        json.dumps(
            {
                "manifest_version": 1,
                "systems": [
                    {
                        "system_id": "bench",
                        "volumetric_file": "bench.cube",
                        "voxel_features": "bench_vox.csv",
                        "use_cube_atoms": False,
                    }
                ],
            }
        )
    )
    return path
