"""Brush state and the global selected-point masks.

A brush is an axis-aligned rectangle over two transformed feature
columns. Brushes constrain every data kind whose pooled schema carries
both columns; a kind no active brush constrains stays all-selected, so
brushing atom features never blanks out the voxel cloud.

States are immutable snapshots. Every mutation returns a new state with
a strictly larger version and masks recomputed from scratch; at million
point scale a full scan is cheaper than delta bookkeeping, and
idempotent recompute keeps snapshots trivially consistent.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytics import AxisSpec, apply_transform, histogram2d, normalize_transform
from .errors import RangeError, SchemaError, WriteError
from .model import ATOMS, DATA_KINDS, VOXELS

COMBINE_MODES = ("intersection", "union")


@dataclass(frozen=True)
class Brush:
    """Closed rectangle [x_lo, x_hi] x [y_lo, y_hi] in transformed coords."""

    brush_id: str
    plot_id: str
    x_column: str
    y_column: str
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    x_transform: tuple[str, ...] = ()
    y_transform: tuple[str, ...] = ()
    active: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x_transform", normalize_transform(self.x_transform))
        object.__setattr__(self, "y_transform", normalize_transform(self.y_transform))
        x_range = (float(self.x_range[0]), float(self.x_range[1]))
        y_range = (float(self.y_range[0]), float(self.y_range[1]))
        if x_range[0] > x_range[1] or y_range[0] > y_range[1]:
            raise RangeError(f"brush {self.brush_id!r} has inverted range")
        object.__setattr__(self, "x_range", x_range)
        object.__setattr__(self, "y_range", y_range)


class DerivedColumnSource:
    """A pooled source extended with computed columns (PCA axes etc.).

    Delegates everything to the base source; the extra columns are
    brushable and plottable exactly like stored features.
    """

    def __init__(self, base, derived=None):
        self._base = base
        self._derived = {}
        if derived:
            for kind, cols in derived.items():
                for name, values in cols.items():
                    self._add(kind, name, values)

    def _add(self, kind, name, values):
        if kind not in DATA_KINDS:
            raise SchemaError(f"unknown data kind {kind!r}")
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self._base.n_points(kind):
            raise SchemaError(
                f"derived column {name!r} has {values.shape[0]} rows, "
                f"{kind} pool has {self._base.n_points(kind)}"
            )
        if self._base.has_column(kind, name):
            raise SchemaError(f"derived column {name!r} collides with a stored column")
        values.flags.writeable = False
        self._derived.setdefault(kind, {})[name] = values

    def with_columns(self, kind, named_columns) -> "DerivedColumnSource":
        merged = {k: dict(v) for k, v in self._derived.items()}
        out = DerivedColumnSource(self._base)
        out._derived = merged
        for name, values in named_columns.items():
            out._add(kind, name, values)
        return out

    def derived_names(self, kind):
        return tuple(self._derived.get(kind, {}))

    # -- ColumnSource protocol --------------------------------------------

    def n_points(self, kind):
        return self._base.n_points(kind)

    def column_names(self, kind):
        return self._base.column_names(kind) + self.derived_names(kind)

    def has_column(self, kind, name):
        return self._base.has_column(kind, name) or name in self._derived.get(kind, {})

    def column(self, kind, name):
        extra = self._derived.get(kind, {})
        if name in extra:
            return extra[name]
        return self._base.column(kind, name)

    def __getattr__(self, attr):
        if attr in ("_base", "_derived"):
            raise AttributeError(attr)
        return getattr(self._base, attr)


def _brush_kinds(source, brush):
    kinds = tuple(
        k
        for k in DATA_KINDS
        if source.has_kind(k)
        and source.has_column(k, brush.x_column)
        and source.has_column(k, brush.y_column)
    )
    if not kinds:
        raise SchemaError(
            f"brush {brush.brush_id!r} references columns "
            f"({brush.x_column!r}, {brush.y_column!r}) absent from every data kind"
        )
    return kinds


def _brush_mask(source, kind, brush):
    x = apply_transform(source.column(kind, brush.x_column), brush.x_transform)
    y = apply_transform(source.column(kind, brush.y_column), brush.y_transform)
    # non-finite transformed values are never selected
    mask = (x >= brush.x_range[0]) & (x <= brush.x_range[1])
    mask &= (y >= brush.y_range[0]) & (y <= brush.y_range[1])
    return mask


@dataclass(frozen=True, eq=False)
class SelectionState:
    """Immutable snapshot: brushes, combine mode, per-kind masks, version."""

    source: object = dataclasses.field(repr=False)
    brushes: tuple[Brush, ...] = ()
    combine_mode: str = "intersection"
    version: int = 0

    def __post_init__(self):
        if self.combine_mode not in COMBINE_MODES:
            raise SchemaError(
                f"combine_mode must be one of {COMBINE_MODES}, got {self.combine_mode!r}"
            )
        masks = _recompute_masks(self.source, self.brushes, self.combine_mode)
        object.__setattr__(self, "_masks", masks)

    def mask(self, kind) -> np.ndarray:
        if kind not in DATA_KINDS:
            raise SchemaError(f"unknown data kind {kind!r}")
        return self._masks[kind]

    def selected_count(self, kind) -> int:
        return int(np.count_nonzero(self.mask(kind)))

    @property
    def active_brushes(self) -> tuple[Brush, ...]:
        return tuple(b for b in self.brushes if b.active)


def _recompute_masks(source, brushes, combine_mode):
    masks = {}
    for kind in DATA_KINDS:
        n = source.n_points(kind) if source.has_kind(kind) else 0
        masks[kind] = np.ones(n, dtype=bool)

    active = [b for b in brushes if b.active]
    for kind in DATA_KINDS:
        relevant = [
            b
            for b in active
            if source.has_kind(kind)
            and source.has_column(kind, b.x_column)
            and source.has_column(kind, b.y_column)
        ]
        if not relevant:
            continue  # unconstrained kinds stay all-selected
        combined = None
        for b in relevant:
            m = _brush_mask(source, kind, b)
            if combined is None:
                combined = m
            elif combine_mode == "intersection":
                combined &= m
            else:
                combined |= m
        masks[kind] = combined
    for m in masks.values():
        m.flags.writeable = False
    return masks


def initial_state(source) -> SelectionState:
    """The neutral all-selected state, version 0."""
    return SelectionState(source=source)


def _bump(state, **changes) -> SelectionState:
    changes.setdefault("version", state.version + 1)
    return dataclasses.replace(state, **changes)


def apply_brush(state: SelectionState, brush: Brush) -> SelectionState:
    """Add a brush, or replace the one with the same brush_id."""
    _brush_kinds(state.source, brush)  # schema check up front
    brushes = tuple(b for b in state.brushes if b.brush_id != brush.brush_id) + (brush,)
    return _bump(state, brushes=brushes)


def remove_brush(state: SelectionState, brush_id: str) -> SelectionState:
    if all(b.brush_id != brush_id for b in state.brushes):
        raise RangeError(f"no brush with id {brush_id!r}")
    return _bump(state, brushes=tuple(b for b in state.brushes if b.brush_id != brush_id))


def clear_brushes(state: SelectionState) -> SelectionState:
    return _bump(state, brushes=())


def set_combine_mode(state: SelectionState, mode: str) -> SelectionState:
    if mode not in COMBINE_MODES:
        raise SchemaError(f"combine_mode must be one of {COMBINE_MODES}, got {mode!r}")
    return _bump(state, combine_mode=mode)


def with_derived_columns(state: SelectionState, kind, named_columns) -> SelectionState:
    """Attach computed columns (new state; existing brushes are kept)."""
    base = state.source
    if isinstance(base, DerivedColumnSource):
        source = base.with_columns(kind, named_columns)
    else:
        source = DerivedColumnSource(base, {kind: dict(named_columns)})
    return _bump(state, source=source)


def selected_in_system(state: SelectionState, kind, system_id) -> np.ndarray:
    """Local indices of the selected points inside one system."""
    lo, hi = state.source.system_slice(kind, system_id)
    return np.flatnonzero(state.mask(kind)[lo:hi])


def brush_projection(state: SelectionState, plot_spec):
    """The target plot's bins, counting only currently selected points.

    plot_spec: dict or object with kind, x, y, bins and optional range,
    as accepted by histogram2d. Bin edges are derived exactly as the
    target plot derives them (over all rows), so the projected counts
    overlay bin-for-bin; n_dropped counts rows unselected, non-finite,
    or out of range.
    """
    if isinstance(plot_spec, dict):
        kind = plot_spec["kind"]
        x_spec = AxisSpec.of(plot_spec["x"])
        y_spec = AxisSpec.of(plot_spec["y"])
        bins = plot_spec.get("bins", 128)
        rng = plot_spec.get("range")
    else:
        kind = plot_spec.kind
        x_spec = AxisSpec.of(plot_spec.x)
        y_spec = AxisSpec.of(plot_spec.y)
        bins = getattr(plot_spec, "bins", 128)
        rng = getattr(plot_spec, "range", None)

    base = histogram2d(state.source, kind, x_spec, y_spec, bins=bins, range=rng)
    if rng is None and not base.all_dropped:
        rng = (
            (float(base.x_edges[0]), float(base.x_edges[-1])),
            (float(base.y_edges[0]), float(base.y_edges[-1])),
        )
    selected = _MaskedSource(state.source, kind, state.mask(kind))
    if rng is None:
        return dataclasses.replace(base, n_dropped=state.source.n_points(kind))
    proj = histogram2d(selected, kind, x_spec, y_spec, bins=bins, range=rng)
    # report drops against the full pool, not the masked row count
    return dataclasses.replace(
        proj, n_dropped=int(state.source.n_points(kind) - proj.counts.sum())
    )


class _MaskedSource:
    """Row-filtered view of one kind of a pooled source."""

    def __init__(self, base, kind, mask):
        self._base = base
        self._kind = kind
        self._mask = mask

    def n_points(self, kind):
        return int(np.count_nonzero(self._mask)) if kind == self._kind else 0

    def column_names(self, kind):
        return self._base.column_names(kind)

    def has_column(self, kind, name):
        return self._base.has_column(kind, name)

    def column(self, kind, name):
        col = self._base.column(kind, name)
        return col[self._mask] if kind == self._kind else col[:0]


def _fmt(v: float) -> str:
    return format(v, ".17g")


def export_selection(state: SelectionState, kind, destination) -> int:
    """Write the selected points of one kind as CSV, return the row count.

    Columns: system_id, local_index, x, y, z, then every feature column
    of the kind. Floats carry 17 significant digits so re-imported
    values are bit-exact. Atom rows use atom positions; voxel rows use
    voxel centers.
    """
    source = state.source
    if not source.has_kind(kind):
        raise SchemaError(f"collection has no {kind!r} data")
    mask = state.mask(kind)
    table = source.pooled_table(kind)
    names = table.names

    rows_written = 0
    close_after = False
    if isinstance(destination, (str, Path)):
        try:
            fh = open(destination, "w", newline="")
        except OSError as exc:
            raise WriteError(f"cannot open {str(destination)!r} for writing: {exc}")
        close_after = True
    else:
        fh = destination

    try:
        header = ["system_id", "local_index", "x", "y", "z", *names]
        fh.write(",".join(header) + "\n")
        for system_id in source.pooled_system_ids(kind):
            lo, hi = source.system_slice(kind, system_id)
            local = np.flatnonzero(mask[lo:hi])
            if local.size == 0:
                continue
            record = source.system(system_id)
            if kind == ATOMS:
                xyz = record.atoms.positions[local]
            else:
                xyz = record.grid.voxel_centers(local)
            cols = [table.column(n)[lo:hi][local] for n in names]
            for row_i in range(local.size):
                parts = [system_id, str(int(local[row_i]))]
                parts.extend(_fmt(c) for c in xyz[row_i])
                parts.extend(_fmt(col[row_i]) for col in cols)
                fh.write(",".join(parts) + "\n")
            rows_written += int(local.size)
    except OSError as exc:
        raise WriteError(f"export failed while writing: {exc}")
    finally:
        if close_after:
            fh.close()
    return rows_written
