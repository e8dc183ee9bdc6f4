"""Saving and restoring complete view sessions.

A session is a canonical JSON document (sorted keys, compact
separators, UTF-8) carrying everything needed to rebuild the view over
the same data: plot specs, per-system visual encodings, point-cloud
sampling parameters, brushes with combine mode, and camera poses. Data
is referenced by manifest path plus content hashes, never embedded.

Brush coordinates are stored in transformed space, exactly what the
user saw; changing a plot's transform therefore invalidates its brushes
visibly instead of silently sliding them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from .analytics import DEFAULT_BINS, AxisSpec, pca_column_names, pca_fit, pca_project_source
from .errors import (
    CompatibilityError,
    ParseError,
    RangeError,
    SchemaError,
    UnsupportedVersionError,
)
from .model import COLOR_MAPS, DATA_KINDS, EncodingSpec
from .selection import (
    COMBINE_MODES,
    Brush,
    SelectionState,
    initial_state,
    set_combine_mode,
    with_derived_columns,
)

SESSION_VERSION = 1

PLOT_TYPES = ("scatter2d", "correlation", "pca")

_MANIFEST_FILE_KEYS = ("atoms_file", "volumetric_file", "atom_features", "voxel_features")


@dataclass(frozen=True)
class PlotSpec:
    """One 2D panel: a scatter heatmap, correlation matrix, or PCA view."""

    plot_id: str
    plot_type: str
    kind: str
    x: AxisSpec | None = None
    y: AxisSpec | None = None
    columns: tuple[str, ...] | None = None
    bins: tuple[int, int] = (DEFAULT_BINS, DEFAULT_BINS)
    range: tuple | None = None
    color_map: str = "viridis"
    k: int = 2
    standardized: bool = True

    def __post_init__(self):
        if self.plot_type not in PLOT_TYPES:
            raise SchemaError(f"unknown plot type {self.plot_type!r}")
        if self.kind not in DATA_KINDS:
            raise SchemaError(f"unknown data kind {self.kind!r}")
        if self.color_map not in COLOR_MAPS:
            raise SchemaError(f"unknown color map {self.color_map!r}")
        if isinstance(self.bins, int):
            object.__setattr__(self, "bins", (self.bins, self.bins))
        else:
            object.__setattr__(self, "bins", (int(self.bins[0]), int(self.bins[1])))
        if self.plot_type == "scatter2d":
            if self.x is None or self.y is None:
                raise SchemaError(f"plot {self.plot_id!r}: scatter2d needs x and y axes")
            object.__setattr__(self, "x", AxisSpec.of(self.x))
            object.__setattr__(self, "y", AxisSpec.of(self.y))
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))
        if self.range is not None:
            (xlo, xhi), (ylo, yhi) = self.range
            object.__setattr__(
                self,
                "range",
                ((float(xlo), float(xhi)), (float(ylo), float(yhi))),
            )
        object.__setattr__(self, "k", int(self.k))

    def pca_output_names(self, collection=None) -> tuple[str, ...]:
        if self.plot_type != "pca":
            return ()
        columns = self.columns
        if columns is None:
            if collection is None:
                return ()
            columns = collection.column_names(self.kind)
        return pca_column_names(self.kind, columns, self.k, self.standardized)


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for field in ("position", "target", "up"):
            v = getattr(self, field)
            if len(v) != 3:
                raise SchemaError(f"camera {field} must have 3 components")
            object.__setattr__(self, field, tuple(float(c) for c in v))


@dataclass(frozen=True)
class CloudParams:
    target_count: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "target_count", int(self.target_count))
        object.__setattr__(self, "seed", int(self.seed))
        if self.target_count < 0:
            raise SchemaError("cloud target_count must be non-negative")


@dataclass(frozen=True)
class ViewSession:
    """Everything needed to rebuild the view, minus the data itself."""

    manifest_path: str
    plots: tuple[PlotSpec, ...] = ()
    encodings: tuple[tuple[str, EncodingSpec], ...] = ()
    cloud_params: tuple[tuple[str, CloudParams], ...] = ()
    brushes: tuple[Brush, ...] = ()
    combine_mode: str = "intersection"
    camera: tuple[tuple[str, CameraPose], ...] = ()
    manifest_sha256: str | None = None
    file_hashes: tuple[tuple[str, str], ...] = ()
    session_version: int = SESSION_VERSION

    def __post_init__(self):
        if self.combine_mode not in COMBINE_MODES:
            raise SchemaError(f"unknown combine mode {self.combine_mode!r}")
        object.__setattr__(self, "plots", tuple(self.plots))
        object.__setattr__(self, "brushes", tuple(self.brushes))
        object.__setattr__(self, "encodings", tuple((str(k), v) for k, v in dict(self.encodings).items()))
        object.__setattr__(self, "cloud_params", tuple((str(k), v) for k, v in dict(self.cloud_params).items()))
        object.__setattr__(self, "camera", tuple((str(k), v) for k, v in dict(self.camera).items()))


def _sha256_file(path: Path) -> str | None:
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        return None


def capture(
    manifest_path,
    state: SelectionState | None = None,
    plots=(),
    encodings=None,
    cloud_params=None,
    camera=None,
) -> ViewSession:
    """Assemble a session snapshot, hashing the manifest and its files."""
    manifest_path = Path(manifest_path)
    manifest_sha = _sha256_file(manifest_path)
    file_hashes = []
    if manifest_sha is not None:
        try:
            doc = json.loads(manifest_path.read_text())
            for entry in doc.get("systems", []):
                for key in _MANIFEST_FILE_KEYS:
                    rel = entry.get(key)
                    if rel:
                        digest = _sha256_file(manifest_path.parent / rel)
                        if digest is not None:
                            file_hashes.append((rel, digest))
        except (json.JSONDecodeError, AttributeError):
            pass
    return ViewSession(
        manifest_path=str(manifest_path),
        plots=tuple(plots),
        encodings=tuple((encodings or {}).items()),
        cloud_params=tuple(
            (k, v if isinstance(v, CloudParams) else CloudParams(*v))
            for k, v in (cloud_params or {}).items()
        ),
        brushes=state.brushes if state is not None else (),
        combine_mode=state.combine_mode if state is not None else "intersection",
        camera=tuple((camera or {}).items()),
        manifest_sha256=manifest_sha,
        file_hashes=tuple(sorted(set(file_hashes))),
    )


# -- document encoding ------------------------------------------------------


def _axis_doc(axis: AxisSpec):
    return {"column": axis.column, "transform": list(axis.transform)}


def _plot_doc(p: PlotSpec):
    doc = {
        "plot_id": p.plot_id,
        "type": p.plot_type,
        "kind": p.kind,
        "bins": list(p.bins),
        "color_map": p.color_map,
    }
    if p.x is not None:
        doc["x"] = _axis_doc(p.x)
    if p.y is not None:
        doc["y"] = _axis_doc(p.y)
    if p.columns is not None:
        doc["columns"] = list(p.columns)
    if p.range is not None:
        doc["range"] = [list(p.range[0]), list(p.range[1])]
    if p.plot_type == "pca":
        doc["k"] = p.k
        doc["standardized"] = p.standardized
    return doc


def _brush_doc(b: Brush):
    return {
        "brush_id": b.brush_id,
        "plot_id": b.plot_id,
        "x_column": b.x_column,
        "y_column": b.y_column,
        "x_transform": list(b.x_transform),
        "y_transform": list(b.y_transform),
        "x_range": list(b.x_range),
        "y_range": list(b.y_range),
        "active": b.active,
    }


def _encoding_doc(e: EncodingSpec):
    return {
        "size_feature": e.size_feature,
        "color_feature": e.color_feature,
        "color_map": e.color_map,
        "size_range": list(e.size_range),
        "transparency": e.transparency,
        "point_density_scale": e.point_density_scale,
    }


def save_session(session: ViewSession) -> bytes:
    """Serialize canonically: identical sessions give identical bytes."""
    doc = {
        "session_version": session.session_version,
        "manifest": {
            "path": session.manifest_path,
            "sha256": session.manifest_sha256,
            "files": {rel: digest for rel, digest in session.file_hashes},
        },
        "plots": [_plot_doc(p) for p in session.plots],
        "encodings": {sid: _encoding_doc(e) for sid, e in session.encodings},
        "cloud": {
            sid: {"target_count": c.target_count, "seed": c.seed}
            for sid, c in session.cloud_params
        },
        "selection": {
            "combine_mode": session.combine_mode,
            "brushes": [_brush_doc(b) for b in session.brushes],
        },
        "camera": {
            vid: {
                "position": list(c.position),
                "target": list(c.target),
                "up": list(c.up),
            }
            for vid, c in session.camera
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


# -- document decoding ------------------------------------------------------


def _parse_axis(doc, where):
    try:
        return AxisSpec(column=doc["column"], transform=tuple(doc.get("transform", ())))
    except (KeyError, TypeError, SchemaError) as exc:
        raise ParseError(f"session {where}: bad axis spec: {exc}")


def _parse_plot(doc, i):
    where = f"plots[{i}]"
    try:
        x = _parse_axis(doc["x"], where) if "x" in doc else None
        y = _parse_axis(doc["y"], where) if "y" in doc else None
        rng = doc.get("range")
        if rng is not None:
            rng = ((rng[0][0], rng[0][1]), (rng[1][0], rng[1][1]))
        return PlotSpec(
            plot_id=doc["plot_id"],
            plot_type=doc["type"],
            kind=doc["kind"],
            x=x,
            y=y,
            columns=tuple(doc["columns"]) if doc.get("columns") is not None else None,
            bins=tuple(doc.get("bins", (DEFAULT_BINS, DEFAULT_BINS))),
            range=rng,
            color_map=doc.get("color_map", "viridis"),
            k=doc.get("k", 2),
            standardized=doc.get("standardized", True),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, SchemaError) as exc:
        raise ParseError(f"session {where}: {exc}")


def _parse_brush(doc, i):
    try:
        return Brush(
            brush_id=doc["brush_id"],
            plot_id=doc.get("plot_id", ""),
            x_column=doc["x_column"],
            y_column=doc["y_column"],
            x_range=tuple(doc["x_range"]),
            y_range=tuple(doc["y_range"]),
            x_transform=tuple(doc.get("x_transform", ())),
            y_transform=tuple(doc.get("y_transform", ())),
            active=bool(doc.get("active", True)),
        )
    except (KeyError, TypeError, ValueError, RangeError, SchemaError) as exc:
        raise ParseError(f"session selection.brushes[{i}]: {exc}")


def _parse_encoding(doc, sid):
    try:
        return EncodingSpec(
            size_feature=doc.get("size_feature"),
            color_feature=doc.get("color_feature"),
            color_map=doc.get("color_map", "viridis"),
            size_range=tuple(doc.get("size_range", (0.3, 1.0))),
            transparency=float(doc.get("transparency", 0.0)),
            point_density_scale=float(doc.get("point_density_scale", 1.0)),
        )
    except (KeyError, TypeError, ValueError, SchemaError) as exc:
        raise ParseError(f"session encodings[{sid!r}]: {exc}")


def _parse_camera(doc, vid):
    try:
        return CameraPose(
            position=tuple(doc["position"]),
            target=tuple(doc.get("target", (0.0, 0.0, 0.0))),
            up=tuple(doc.get("up", (0.0, 0.0, 1.0))),
        )
    except (KeyError, TypeError, ValueError, SchemaError) as exc:
        raise ParseError(f"session camera[{vid!r}]: {exc}")


def validate_session(session: ViewSession, collection):
    """Check every referenced column, system, and view against the data."""
    derivable = set()
    for p in session.plots:
        for name in p.pca_output_names(collection):
            derivable.add((p.kind, name))

    def available(kind, col):
        return collection.has_kind(kind) and (
            collection.has_column(kind, col) or (kind, col) in derivable
        )

    missing = set()
    unpairable = []
    for p in session.plots:
        cols = []
        if p.plot_type == "scatter2d":
            cols = [p.x.column, p.y.column]
        elif p.columns is not None:
            cols = list(p.columns)
        for c in cols:
            if not available(p.kind, c):
                missing.add(c)

    for b in session.brushes:
        # a brush needs both its columns inside at least one shared kind
        if any(
            available(kind, b.x_column) and available(kind, b.y_column)
            for kind in DATA_KINDS
        ):
            continue
        found_any = False
        for col in (b.x_column, b.y_column):
            if any(available(kind, col) for kind in DATA_KINDS):
                found_any = True
            else:
                missing.add(col)
        if found_any and not missing:
            unpairable.append(b.brush_id)

    if missing:
        raise CompatibilityError(
            "session references columns missing from the collection: "
            + ", ".join(sorted(missing))
        )
    if unpairable:
        raise CompatibilityError(
            "brushes pair columns that never share a data kind: "
            + ", ".join(sorted(unpairable))
        )

    known = set(collection.system_ids)
    for sid, enc in session.encodings:
        if sid not in known:
            raise CompatibilityError(f"session encodes unknown system {sid!r}")
        record = collection.system(sid)
        for kind in DATA_KINDS:
            table = record.table(kind)
            if table is not None:
                try:
                    enc.validate_against(table)
                    break
                except SchemaError:
                    continue
        else:
            raise CompatibilityError(
                f"session encoding for {sid!r} references columns absent from its tables"
            )
    for sid, _ in session.cloud_params:
        if sid not in known:
            raise CompatibilityError(f"session has cloud params for unknown system {sid!r}")


def load_session(data: bytes, collection) -> ViewSession:
    """Parse and validate a saved session against a loaded collection."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"session document is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ParseError("session document must be a JSON object")

    version = doc.get("session_version")
    if not isinstance(version, int):
        raise ParseError("session document is missing an integer session_version")
    if version > SESSION_VERSION:
        raise UnsupportedVersionError(
            f"session_version {version} is newer than the supported {SESSION_VERSION}"
        )
    if version < 1:
        raise ParseError(f"session_version must be at least 1, got {version}")

    manifest = doc.get("manifest") or {}
    manifest_path = manifest.get("path", "")
    manifest_sha = manifest.get("sha256")
    file_hashes = tuple(sorted((manifest.get("files") or {}).items()))

    selection = doc.get("selection") or {}
    combine_mode = selection.get("combine_mode", "intersection")
    if combine_mode not in COMBINE_MODES:
        raise ParseError(f"session selection: unknown combine mode {combine_mode!r}")

    try:
        session = ViewSession(
            manifest_path=manifest_path,
            plots=tuple(_parse_plot(p, i) for i, p in enumerate(doc.get("plots", ()))),
            encodings=tuple(
                (sid, _parse_encoding(e, sid))
                for sid, e in (doc.get("encodings") or {}).items()
            ),
            cloud_params=tuple(
                (sid, CloudParams(c.get("target_count", 0), c.get("seed", 0)))
                for sid, c in (doc.get("cloud") or {}).items()
            ),
            brushes=tuple(
                _parse_brush(b, i) for i, b in enumerate(selection.get("brushes", ()))
            ),
            combine_mode=combine_mode,
            camera=tuple(
                (vid, _parse_camera(c, vid)) for vid, c in (doc.get("camera") or {}).items()
            ),
            manifest_sha256=manifest_sha,
            file_hashes=file_hashes,
            session_version=version,
        )
    except ParseError:
        raise
    except (AttributeError, TypeError, SchemaError) as exc:
        raise ParseError(f"session document is malformed: {exc}")

    validate_session(session, collection)
    _warn_on_hash_mismatch(session)
    return session


def _warn_on_hash_mismatch(session: ViewSession):
    path = Path(session.manifest_path)
    if session.manifest_sha256:
        actual = _sha256_file(path)
        if actual is None:
            warnings.warn(f"session manifest {session.manifest_path!r} is not readable")
        elif actual != session.manifest_sha256:
            warnings.warn(
                f"manifest {session.manifest_path!r} content differs from the saved session hash"
            )
    for rel, saved in session.file_hashes:
        actual = _sha256_file(path.parent / rel)
        if actual is not None and actual != saved:
            warnings.warn(f"data file {rel!r} content differs from the saved session hash")


def derived_models(session: ViewSession, collection) -> dict:
    """Fit every PCA plot in the session, keyed by fingerprint."""
    models = {}
    for p in session.plots:
        if p.plot_type != "pca":
            continue
        columns = p.columns if p.columns is not None else collection.column_names(p.kind)
        model = pca_fit(collection, p.kind, columns, p.k, standardized=p.standardized)
        models[model.fingerprint()] = model
    return models


def selection_state(session: ViewSession, collection, models=None) -> SelectionState:
    """Rebuild the live selection: derived columns, combine mode, brushes.

    Every PCA plot is refit so its projected axes are brushable right
    away; masks then recompute exactly as they did when the session was
    saved.
    """
    state = initial_state(collection)

    if models is None:
        models = derived_models(session, collection)
    for model in models.values():
        proj = pca_project_source(model, collection)
        names = model.output_names()
        state = with_derived_columns(
            state, model.kind, {name: proj[:, i] for i, name in enumerate(names)}
        )

    if session.combine_mode != state.combine_mode:
        state = set_combine_mode(state, session.combine_mode)
    if session.brushes:
        state = dataclasses.replace(
            state, brushes=session.brushes, version=state.version + 1
        )
    return state
