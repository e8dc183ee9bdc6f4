"""Density-proportional point clouds and planar slices of volumetric grids.

A grid's scalar field is rendered as a cloud of M points whose local
density tracks the field: per-voxel counts come from one multinomial
draw over the whole grid (exact total, predictable buffer sizes), and
each point is jittered uniformly inside its voxel to avoid lattice
moire. Each point remembers its source voxel, so per-voxel features are
readable per point without copying columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFieldError, RangeError
from .model import VolumetricGrid

# Jitter stays this far (in fractional voxel units) from voxel faces so
# positions_to_linear round-trips through floating point exactly.
JITTER_MARGIN = 1e-6

_AXIS_NAMES = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


@dataclass(frozen=True)
class PointCloud:
    """Sampled points for one grid: positions plus provenance."""

    positions: np.ndarray
    source_voxel: np.ndarray
    seed: int
    n_clamped: int = 0

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        source = np.asarray(self.source_voxel, dtype=np.int64).reshape(-1)
        if positions.shape[0] != source.shape[0]:
            raise RangeError(
                f"positions ({positions.shape[0]}) and source_voxel ({source.shape[0]}) disagree"
            )
        for arr in (positions, source):
            arr.flags.writeable = False
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "source_voxel", source)

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class SlicePlane:
    """A slab of whole voxel layers perpendicular to one grid axis."""

    axis: int
    index: int
    thickness: int = 1

    def __post_init__(self):
        if self.axis not in _AXIS_NAMES:
            raise RangeError(f"axis must be x, y, z or 0, 1, 2, got {self.axis!r}")
        object.__setattr__(self, "axis", _AXIS_NAMES[self.axis])
        if self.index < 0:
            raise RangeError(f"layer index must be non-negative, got {self.index}")
        if self.thickness < 1:
            raise RangeError(f"thickness must be at least 1, got {self.thickness}")


def sample_point_cloud(grid: VolumetricGrid, target_count: int, seed: int) -> PointCloud:
    """Draw exactly target_count points distributed like the grid's field.

    Per-voxel counts are multinomial with p_i proportional to the field
    value (negatives clamped to zero and counted in the result's
    n_clamped); each point is uniform inside its voxel. Deterministic
    for a fixed (grid, target_count, seed).
    """
    if target_count < 0:
        raise RangeError(f"target_count must be non-negative, got {target_count}")
    seed = int(seed)

    values = grid.values
    negative = values < 0
    n_clamped = int(np.count_nonzero(negative))
    weights = np.where(negative, 0.0, values)

    if target_count == 0:
        return PointCloud(
            positions=np.empty((0, 3)),
            source_voxel=np.empty(0, dtype=np.int64),
            seed=seed,
            n_clamped=n_clamped,
        )

    total = float(weights.sum())
    if not total > 0.0:
        raise DegenerateFieldError(
            "cannot sample a point cloud: field is zero everywhere after clamping"
        )

    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.multinomial(target_count, weights / total)

    occupied = np.flatnonzero(counts)
    voxels = np.repeat(occupied, counts[occupied])
    ijk = grid.linear_to_ijk(voxels)

    # u in [margin, 1-margin) keeps each point strictly interior.
    u = rng.random((target_count, 3))
    u = JITTER_MARGIN + (1.0 - 2.0 * JITTER_MARGIN) * u
    positions = (ijk + u) @ grid.basis + grid.origin

    return PointCloud(positions=positions, source_voxel=voxels, seed=seed, n_clamped=n_clamped)


def slice_points(grid: VolumetricGrid, plane: SlicePlane) -> np.ndarray:
    """Linear indices of every voxel inside the slab, sorted ascending.

    Composable with selection masks by intersection.
    """
    extent = grid.shape[plane.axis]
    if plane.index + plane.thickness > extent:
        raise RangeError(
            f"slice [{plane.index}, {plane.index + plane.thickness}) exceeds "
            f"axis extent {extent}"
        )
    ranges = [np.arange(n) for n in grid.shape]
    ranges[plane.axis] = np.arange(plane.index, plane.index + plane.thickness)
    nx, ny, nz = grid.shape
    ix, iy, iz = ranges
    linear = (ix[:, None, None] * ny + iy[None, :, None]) * nz + iz[None, None, :]
    return linear.reshape(-1)
