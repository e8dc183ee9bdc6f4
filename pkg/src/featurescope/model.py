"""Shared data model: feature tables, systems, pooled indexing, bonds.

All types here are immutable after construction (arrays are marked
read-only), so they can be shared freely between plots, selection state
and server threads without copies or locks.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .elements import COVALENT_RADII, ATOMIC_NUMBERS
from .errors import CatalogError, RangeError, SchemaError, ShapeError

ATOMS = "atoms"
VOXELS = "voxels"
DATA_KINDS = (ATOMS, VOXELS)

COLOR_MAPS = ("viridis", "magma", "plasma", "inferno", "turbo", "coolwarm", "greys")


def _readonly(a, dtype=np.float64):
    """Return ``a`` as a read-only array of ``dtype``, copying only when needed.

    Already read-only arrays and views of them pass through unchanged, so
    slices of pooled storage stay zero-copy.
    """
    out = np.asarray(a, dtype=dtype)
    if out.flags.writeable:
        if out is a or out.base is not None:
            out = out.copy()
        out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FeatureTable:
    """Columnar store of N points x F named feature columns (float64).

    Each column is stored exactly once; plots and views hold references,
    never copies.  Non-finite values are allowed and tracked per column
    through ``finite_counts``.
    """

    names: tuple[str, ...]
    units: tuple[str | None, ...]
    columns: tuple[np.ndarray, ...]
    n_points: int = field(init=False)
    finite_counts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if len(self.units) != len(self.names):
            raise SchemaError("units list must match column names")
        if len(self.columns) != len(self.names):
            raise SchemaError("column list must match column names")
        if len(set(self.names)) != len(self.names):
            dupes = sorted({n for n in self.names if self.names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        cols = tuple(_readonly(c) for c in self.columns)
        lengths = {c.shape for c in cols}
        if any(c.ndim != 1 for c in cols):
            raise ShapeError("feature columns must be 1-D")
        if len(lengths) > 1:
            raise ShapeError(f"feature columns have unequal lengths: {sorted(lengths)}")
        n = cols[0].shape[0] if cols else 0
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "n_points", n)
        object.__setattr__(
            self, "finite_counts", tuple(int(np.isfinite(c).sum()) for c in cols)
        )

    @classmethod
    def empty(cls, n_points):
        """A table with no columns but a definite row count."""
        t = cls(names=(), units=(), columns=())
        object.__setattr__(t, "n_points", int(n_points))
        return t

    @classmethod
    def from_columns(cls, named_columns, units=None):
        names = tuple(name for name, _ in named_columns)
        cols = tuple(col for _, col in named_columns)
        if units is None:
            units = tuple(None for _ in names)
        return cls(names=names, units=tuple(units), columns=cols)

    def __contains__(self, name):
        return name in self.names

    def column(self, name):
        try:
            return self.columns[self.names.index(name)]
        except ValueError:
            raise SchemaError(f"no feature column named {name!r}") from None

    def unit(self, name):
        return self.units[self.names.index(name)]


@dataclass(frozen=True)
class Cell:
    """Periodic lattice: row vectors of ``matrix`` are the cell vectors."""

    matrix: np.ndarray
    pbc: tuple[bool, bool, bool] = (True, True, True)

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.shape != (3, 3):
            raise ShapeError("cell matrix must be 3x3")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "pbc", tuple(bool(p) for p in self.pbc))


@dataclass(frozen=True)
class AtomFrame:
    """Irregular-grid data: atom positions (Angstrom), symbols, features."""

    positions: np.ndarray
    elements: tuple[str, ...]
    cell: Cell | None = None
    features: FeatureTable = None

    def __post_init__(self):
        pos = _readonly(self.positions)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ShapeError("positions must be an (N, 3) array")
        elements = tuple(self.elements)
        if len(elements) != pos.shape[0]:
            raise ShapeError(
                f"{pos.shape[0]} positions but {len(elements)} element symbols"
            )
        unknown = sorted({e for e in elements if e not in COVALENT_RADII})
        if unknown:
            raise CatalogError(
                f"element symbol {unknown[0]!r} has no covalent radius in the catalog"
                + (f" (also unknown: {', '.join(unknown[1:])})" if len(unknown) > 1 else "")
            )
        features = self.features
        if features is None:
            features = FeatureTable.empty(pos.shape[0])
        if features.n_points != pos.shape[0]:
            raise ShapeError(
                f"feature table has {features.n_points} rows for {pos.shape[0]} atoms"
            )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "features", features)

    @property
    def n_atoms(self):
        return self.positions.shape[0]

    @property
    def atomic_numbers(self):
        return np.array([ATOMIC_NUMBERS[e] for e in self.elements], dtype=np.uint16)


@dataclass(frozen=True)
class VolumetricGrid:
    """Regular-grid data: origin, voxel step vectors, scalar values, features.

    The linear voxel index runs z-fastest (cube-file order):
    ``i = (ix * ny + iy) * nz + iz``.  Voxel centers sit at
    ``origin + (ix + 1/2) b1 + (iy + 1/2) b2 + (iz + 1/2) b3`` where the
    rows of ``basis`` are the step vectors b1, b2, b3.
    """

    origin: np.ndarray
    basis: np.ndarray
    shape: tuple[int, int, int]
    values: np.ndarray
    features: FeatureTable = None

    def __post_init__(self):
        origin = _readonly(self.origin)
        basis = _readonly(self.basis)
        if origin.shape != (3,):
            raise ShapeError("origin must be a 3-vector")
        if basis.shape != (3, 3):
            raise ShapeError("basis must be a 3x3 matrix of voxel step vectors")
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3 or any(n <= 0 for n in shape):
            raise ShapeError(f"grid shape must be three positive integers, got {shape}")
        if abs(np.linalg.det(basis)) <= 0.0:
            raise ShapeError("voxel basis is singular (voxel volume would be zero)")
        values = _readonly(self.values)
        n = shape[0] * shape[1] * shape[2]
        if values.ndim != 1 or values.shape[0] != n:
            raise ShapeError(
                f"values length {values.shape} does not match grid shape {shape} ({n} voxels)"
            )
        features = self.features
        if features is None:
            features = FeatureTable.empty(n)
        if features.n_points != n:
            raise ShapeError(
                f"feature table has {features.n_points} rows for {n} voxels"
            )
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "features", features)

    @property
    def n_voxels(self):
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def voxel_volume(self):
        return float(abs(np.linalg.det(self.basis)))

    def linear_to_ijk(self, linear):
        """Decompose linear voxel indices into (ix, iy, iz), z fastest."""
        linear = np.asarray(linear)
        nx, ny, nz = self.shape
        if np.any((linear < 0) | (linear >= self.n_voxels)):
            raise RangeError(f"voxel index out of range for {self.n_voxels} voxels")
        iz = linear % nz
        iy = (linear // nz) % ny
        ix = linear // (ny * nz)
        return np.stack([ix, iy, iz], axis=-1)

    def ijk_to_linear(self, ijk):
        ijk = np.asarray(ijk)
        nx, ny, nz = self.shape
        if np.any((ijk < 0) | (ijk >= np.array(self.shape))):
            raise RangeError(f"voxel coordinate out of range for shape {self.shape}")
        return (ijk[..., 0] * ny + ijk[..., 1]) * nz + ijk[..., 2]

    def voxel_centers(self, linear):
        """Cartesian centers (Angstrom) of the given linear voxel indices."""
        ijk = self.linear_to_ijk(linear)
        return (ijk + 0.5) @ self.basis + self.origin

    def positions_to_linear(self, positions):
        """Map Cartesian positions back to the linear index of their voxel."""
        frac = (np.atleast_2d(positions) - self.origin) @ np.linalg.inv(self.basis)
        ijk = np.floor(frac).astype(np.int64)
        return self.ijk_to_linear(ijk)


@dataclass(frozen=True)
class BondList:
    """Unordered, deduplicated atom-index pairs within one frame."""

    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        if pairs.size and np.any(pairs[:, 0] == pairs[:, 1]):
            raise ShapeError("bond list contains a self-bond")
        pairs = np.unique(pairs, axis=0) if pairs.size else pairs
        pairs.flags.writeable = False
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return self.pairs.shape[0]

    def as_set(self):
        return {(int(i), int(j)) for i, j in self.pairs}


@dataclass(frozen=True)
class EncodingSpec:
    """Double encoding for one 3D view: which columns drive size and color."""

    size_feature: str | None = None
    color_feature: str | None = None
    color_map: str = "viridis"
    size_range: tuple[float, float] = (0.3, 1.0)
    transparency: float = 0.0
    point_density_scale: float = 1.0

    def __post_init__(self):
        if self.color_map not in COLOR_MAPS:
            raise SchemaError(
                f"unknown color map {self.color_map!r}; available: {', '.join(COLOR_MAPS)}"
            )
        lo, hi = self.size_range
        if not (lo <= hi):
            raise ShapeError("size_range low must not exceed high")

    def validate_against(self, table: FeatureTable):
        for name in (self.size_feature, self.color_feature):
            if name is not None and name not in table:
                raise SchemaError(f"encoding references missing column {name!r}")


@dataclass(frozen=True)
class SystemRecord:
    system_id: str
    atoms: AtomFrame | None = None
    grid: VolumetricGrid | None = None

    def __post_init__(self):
        if self.atoms is None and self.grid is None:
            raise ShapeError(f"system {self.system_id!r} has no data")

    def table(self, kind):
        if kind == ATOMS:
            return None if self.atoms is None else self.atoms.features
        if kind == VOXELS:
            return None if self.grid is None else self.grid.features
        raise SchemaError(f"unknown data kind {kind!r}")


def _check_uniform_schema(kind, with_kind):
    first_id, first = with_kind[0]
    for sys_id, table in with_kind[1:]:
        if table.names != first.names:
            only_a = sorted(set(first.names) - set(table.names))
            only_b = sorted(set(table.names) - set(first.names))
            detail = []
            if only_a:
                detail.append(f"only in {first_id!r}: {only_a}")
            if only_b:
                detail.append(f"only in {sys_id!r}: {only_b}")
            if not detail:
                detail.append(
                    f"{first_id!r} order {list(first.names)} vs {sys_id!r} order {list(table.names)}"
                )
            raise SchemaError(
                f"{kind} feature schemas differ between systems "
                f"{first_id!r} and {sys_id!r}: " + "; ".join(detail)
            )


class SystemCollection:
    """Ordered systems plus pooled, globally indexed feature storage.

    Pooling concatenates each feature column across systems exactly once;
    the per-system tables handed back by :meth:`system` are zero-copy views
    into that pooled storage.  Global index ``g`` of a kind decomposes as
    ``offsets[s] <= g < offsets[s + 1]`` for pool position ``s``.
    """

    def __init__(self, systems):
        records = tuple(systems)
        ids = [r.system_id for r in records]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"duplicate system ids: {sorted(set(i for i in ids if ids.count(i) > 1))}")
        self._pools = {}
        pooled_records = list(records)
        for kind in DATA_KINDS:
            with_kind = [
                (r.system_id, r.table(kind)) for r in records if r.table(kind) is not None
            ]
            if not with_kind:
                continue
            _check_uniform_schema(kind, with_kind)
            names = with_kind[0][1].names
            units = with_kind[0][1].units
            counts = [t.n_points for _, t in with_kind]
            offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            pooled_cols = tuple(
                _readonly(np.concatenate([t.column(n) for _, t in with_kind]))
                for n in names
            )
            pooled = FeatureTable(names=names, units=units, columns=pooled_cols)
            if not names:
                pooled = FeatureTable.empty(int(offsets[-1]))
            self._pools[kind] = _Pool(
                table=pooled,
                offsets=offsets,
                system_ids=tuple(sid for sid, _ in with_kind),
            )
            # Rebind each system's feature table to a view of the pooled
            # columns so every value is stored exactly once.
            for slot, (sid, _) in enumerate(with_kind):
                idx = ids.index(sid)
                rec = pooled_records[idx]
                lo, hi = int(offsets[slot]), int(offsets[slot + 1])
                view = FeatureTable(
                    names=names,
                    units=units,
                    columns=tuple(c[lo:hi] for c in pooled.columns),
                )
                if not names:
                    view = FeatureTable.empty(hi - lo)
                if kind == ATOMS:
                    pooled_records[idx] = dataclasses.replace(
                        rec, atoms=dataclasses.replace(rec.atoms, features=view)
                    )
                else:
                    pooled_records[idx] = dataclasses.replace(
                        rec, grid=dataclasses.replace(rec.grid, features=view)
                    )
        self.systems = tuple(pooled_records)
        self._by_id = {r.system_id: r for r in self.systems}

    # -- lookup ----------------------------------------------------------

    @property
    def system_ids(self):
        return tuple(r.system_id for r in self.systems)

    def system(self, system_id):
        try:
            return self._by_id[system_id]
        except KeyError:
            raise RangeError(f"no system with id {system_id!r}") from None

    def kinds(self):
        return tuple(k for k in DATA_KINDS if k in self._pools)

    def has_kind(self, kind):
        return kind in self._pools

    def _pool(self, kind):
        if kind not in DATA_KINDS:
            raise SchemaError(f"unknown data kind {kind!r}")
        pool = self._pools.get(kind)
        if pool is None:
            return _Pool(FeatureTable.empty(0), np.zeros(1, dtype=np.int64), ())
        return pool

    # -- ColumnSource protocol (shared with selection/analytics) ----------

    def n_points(self, kind):
        return self._pool(kind).table.n_points

    def column_names(self, kind):
        return self._pool(kind).table.names

    def has_column(self, kind, name):
        return name in self._pool(kind).table

    def column(self, kind, name):
        """Pooled column across all systems of ``kind`` (zero extra copy)."""
        return self._pool(kind).table.column(name)

    def pooled_table(self, kind):
        return self._pool(kind).table

    # -- global <-> local indexing ----------------------------------------

    def pooled_offsets(self, kind):
        return self._pool(kind).offsets

    def pooled_system_ids(self, kind):
        """System ids that contribute points of ``kind``, in pool order."""
        return self._pool(kind).system_ids

    def system_slice(self, kind, system_id):
        """(start, stop) of a system's points inside the pooled arrays."""
        pool = self._pool(kind)
        try:
            slot = pool.system_ids.index(system_id)
        except ValueError:
            raise RangeError(
                f"system {system_id!r} has no {kind} data"
            ) from None
        return int(pool.offsets[slot]), int(pool.offsets[slot + 1])


@dataclass(frozen=True)
class _Pool:
    table: FeatureTable
    offsets: np.ndarray
    system_ids: tuple[str, ...]


def resolve_global_index(collection, kind, g):
    """Map a pooled global index to ``(system_id, local_index)``."""
    pool = collection._pool(kind)
    total = int(pool.offsets[-1])
    g = int(g)
    if not 0 <= g < total:
        raise RangeError(f"global {kind} index {g} out of range [0, {total})")
    slot = int(np.searchsorted(pool.offsets, g, side="right")) - 1
    return pool.system_ids[slot], g - int(pool.offsets[slot])


def recompose_global_index(collection, kind, system_id, local):
    """Inverse of :func:`resolve_global_index`."""
    lo, hi = collection.system_slice(kind, system_id)
    local = int(local)
    if not 0 <= local < hi - lo:
        raise RangeError(
            f"local index {local} out of range [0, {hi - lo}) for system {system_id!r}"
        )
    return lo + local


def _pair_distances_minimum_image(positions, cell):
    """All-pairs distances under the minimum-image convention.

    Scans the 3x3x3 block of neighbor images along periodic axes, which is
    exact whenever bond cutoffs are below half the cell extent.
    """
    delta = positions[:, None, :] - positions[None, :, :]
    if cell is None or not any(cell.pbc):
        return np.sqrt(np.sum(delta * delta, axis=-1))
    axes = [i for i in range(3) if cell.pbc[i]]
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * len(axes)), indexing="ij"))
    offsets = offsets.reshape(len(axes), -1).T
    shifts = np.zeros((offsets.shape[0], 3))
    shifts[:, axes] = offsets
    image_vectors = shifts @ cell.matrix
    best = None
    for vec in image_vectors:
        d2 = np.sum((delta + vec) ** 2, axis=-1)
        best = d2 if best is None else np.minimum(best, d2)
    return np.sqrt(best)


def infer_bonds(frame: AtomFrame, tolerance: float = 1.2) -> BondList:
    """Detect bonds: pair (i, j) bonds iff dist <= tolerance * (r_i + r_j).

    Distances use the minimum-image convention when the frame has a
    periodic cell.  Radii come from the covalent-radius catalog; an
    unknown symbol raises ``CatalogError`` naming it (also enforced at
    frame construction).
    """
    if tolerance <= 0:
        raise ShapeError(f"bond tolerance must be positive, got {tolerance}")
    n = frame.n_atoms
    if n < 2:
        return BondList(np.empty((0, 2), dtype=np.int64))
    radii = np.array([COVALENT_RADII[e] for e in frame.elements])
    dist = _pair_distances_minimum_image(frame.positions, frame.cell)
    threshold = tolerance * (radii[:, None] + radii[None, :])
    i, j = np.nonzero(np.triu(dist <= threshold, k=1))
    return BondList(np.column_stack([i, j]))
