"""HTTP + WebSocket surface over one loaded collection.

One collection per process. Reads are pure and cacheable; every
mutation (brush changes, session restore) runs under a single lock,
bumps the selection version, and fans a {selection_version,
data_version} notice out to push subscribers. Subscribers that stop
draining are dropped with a reconnect hint rather than ever blocking a
mutation.

Big payloads (atom positions, point clouds, feature columns) travel as
binary tiles; see wire.py for the exact layout.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .. import session as session_mod
from ..analytics import AxisSpec, histogram2d, correlation_matrix, pca_fit, pca_project_source
from ..cloud import sample_point_cloud
from ..errors import EngineError, ParseError, RangeError, SchemaError
from ..ingest import load_manifest
from ..model import DATA_KINDS, infer_bonds
from ..selection import (
    Brush,
    apply_brush,
    brush_projection,
    clear_brushes,
    export_selection,
    initial_state,
    remove_brush,
    set_combine_mode,
    with_derived_columns,
)
from .wire import encode_tile, mask_to_runs

_STATUS_BY_CODE = {
    "range_error": 404,
    "compatibility_error": 409,
    "unsupported_version_error": 409,
    "degenerate_field_error": 422,
    "degeneracy_error": 422,
    "insufficient_data_error": 422,
}

_CACHE_SLOTS = 64
_QUEUE_SLOTS = 32


class _Subscriber:
    __slots__ = ("queue", "dropped")

    def __init__(self):
        self.queue = asyncio.Queue(maxsize=_QUEUE_SLOTS)
        self.dropped = False


class ApiSession:
    """The single mutable owner: selection state plus view bookkeeping."""

    def __init__(self, manifest_path, collection):
        self.manifest_path = str(manifest_path)
        self.collection = collection
        self.state = initial_state(collection)
        self.data_version = 1
        self.plots = ()
        self.encodings = {}
        self.cloud_params = {}
        self.camera = {}
        self.lock = asyncio.Lock()
        self.pca_models = {}  # fingerprint -> PCAModel, fitted via GET /api/plot/pca
        self._subscribers = []
        self._cache = OrderedDict()

    # -- caching -----------------------------------------------------------

    def cached(self, key):
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
        return hit

    def remember(self, key, value):
        self._cache[key] = value
        if len(self._cache) > _CACHE_SLOTS:
            self._cache.popitem(last=False)
        return value

    # -- push fan-out --------------------------------------------------------

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber()
        self._subscribers.append(sub)
        sub.queue.put_nowait(self.versions())
        return sub

    def unsubscribe(self, sub):
        sub.dropped = True
        if sub in self._subscribers:
            self._subscribers.remove(sub)

    def versions(self):
        return {
            "type": "versions",
            "selection_version": self.state.version,
            "data_version": self.data_version,
        }

    def broadcast(self):
        note = self.versions()
        for sub in list(self._subscribers):
            try:
                sub.queue.put_nowait(note)
            except asyncio.QueueFull:
                # slow subscriber: cut it loose, never block a mutation
                self.unsubscribe(sub)

    # -- derived columns ----------------------------------------------------

    def register_model(self, model):
        self.pca_models[model.fingerprint()] = model

    def ensure_derived(self, columns):
        """Make pca:* columns brushable; returns True if state changed."""
        needed = {}
        for name in columns:
            if not name.startswith("pca:"):
                continue
            if any(
                self.state.source.has_column(kind, name)
                for kind in DATA_KINDS
                if self.state.source.has_kind(kind)
            ):
                continue
            parts = name.split(":")
            fingerprint = parts[1] if len(parts) == 3 else None
            model = self.pca_models.get(fingerprint)
            if model is None:
                raise SchemaError(
                    f"column {name!r} refers to a projection that has not been "
                    "fitted; fetch its /api/plot/pca first"
                )
            needed[fingerprint] = model
        changed = False
        for model in needed.values():
            proj = pca_project_source(model, self.collection)
            named = {n: proj[:, i] for i, n in enumerate(model.output_names())}
            self.state = with_derived_columns(self.state, model.kind, named)
            changed = True
        if changed:
            self.data_version += 1
        return changed


# -- query helpers ------------------------------------------------------------


def _parse_chain(raw):
    if not raw:
        return ()
    return tuple(t for t in raw.split(",") if t)


def _parse_bins(raw):
    if raw is None:
        return 128
    parts = raw.split(",")
    try:
        if len(parts) == 1:
            return int(parts[0])
        if len(parts) == 2:
            return (int(parts[0]), int(parts[1]))
    except ValueError:
        pass
    raise ParseError(f"bins must be an integer or bx,by pair, got {raw!r}")


def _parse_range(params):
    got = [params.get(k) for k in ("xmin", "xmax", "ymin", "ymax")]
    if all(v is None for v in got):
        return None
    if any(v is None for v in got):
        raise ParseError("range needs all four of xmin, xmax, ymin, ymax")
    try:
        xmin, xmax, ymin, ymax = (float(v) for v in got)
    except ValueError as exc:
        raise ParseError(f"range values must be numbers: {exc}")
    return ((xmin, xmax), (ymin, ymax))


def _require(params, *names):
    missing = [n for n in names if not params.get(n)]
    if missing:
        raise ParseError(f"missing query parameter(s): {', '.join(missing)}")
    return [params[n] for n in names]


def _json_matrix(arr):
    """Nested lists with NaN mapped to null (strict JSON)."""
    out = []
    for row in np.atleast_2d(arr):
        out.append([None if not np.isfinite(v) else float(v) for v in row])
    return out


def _hist_doc(hist, extra=None):
    doc = {
        "x_column": hist.x_column,
        "y_column": hist.y_column,
        "x_transform": list(hist.x_transform),
        "y_transform": list(hist.y_transform),
        "bins": list(hist.bins),
        "x_edges": [float(v) for v in hist.x_edges],
        "y_edges": [float(v) for v in hist.y_edges],
        "counts": [int(v) for v in hist.counts.ravel()],
        "n_dropped": hist.n_dropped,
        "all_dropped": hist.all_dropped,
    }
    if extra:
        doc.update(extra)
    return doc


def _parse_brush_doc(doc):
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
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed brush document: {exc}")


def create_app(manifest_path=None, collection=None, ui_dir=None) -> FastAPI:
    """Build the service around one manifest (or a prebuilt collection)."""
    if collection is None:
        if manifest_path is None:
            raise RangeError("create_app needs a manifest path or a collection")
        collection = load_manifest(manifest_path)
    api = ApiSession(manifest_path or "", collection)

    app = FastAPI(title="featurescope", docs_url=None, redoc_url=None)
    app.state.api = api

    @app.exception_handler(EngineError)
    async def _engine_error(_request: Request, exc: EngineError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(
            status_code=status,
            content={"error": {"code": exc.code, "message": str(exc)}},
        )

    # -- schema ---------------------------------------------------------------

    @app.get("/api/schema")
    async def schema():
        systems = []
        for rec in collection.systems:
            entry = {"system_id": rec.system_id}
            entry["n_atoms"] = rec.atoms.n_atoms if rec.atoms is not None else None
            if rec.grid is not None:
                entry["grid_shape"] = list(rec.grid.shape)
                entry["n_voxels"] = rec.grid.n_voxels
            else:
                entry["grid_shape"] = None
                entry["n_voxels"] = None
            systems.append(entry)
        kinds = {}
        for kind in collection.kinds():
            table = collection.pooled_table(kind)
            derived = [
                name
                for name in api.state.source.column_names(kind)
                if name not in table.names
            ]
            kinds[kind] = {
                "n_points": table.n_points,
                "columns": [
                    {"name": n, "unit": u} for n, u in zip(table.names, table.units)
                ],
                "derived": derived,
            }
        return {
            "manifest_path": api.manifest_path,
            "systems": systems,
            "kinds": kinds,
            "selection_version": api.state.version,
            "data_version": api.data_version,
        }

    # -- binary tiles -----------------------------------------------------------

    def _octets(tile: bytes) -> Response:
        return Response(content=tile, media_type="application/octet-stream")

    @app.get("/api/systems/{system_id}/atoms")
    async def atoms_tile(system_id: str):
        rec = collection.system(system_id)
        if rec.atoms is None:
            raise RangeError(f"system {system_id!r} has no atoms")
        key = ("atoms_tile", system_id)
        hit = api.cached(key)
        if hit is None:
            frame = rec.atoms
            bonds = infer_bonds(frame)
            hit = api.remember(
                key,
                encode_tile(
                    [
                        ("positions", frame.positions.astype("<f4")),
                        ("atomic_numbers", frame.atomic_numbers.astype("<u2")),
                        ("bonds", bonds.pairs.astype("<u4")),
                    ]
                ),
            )
        return _octets(hit)

    @app.get("/api/systems/{system_id}/cloud")
    async def cloud_tile(system_id: str, count: int | None = None, seed: int | None = None):
        rec = collection.system(system_id)
        if rec.grid is None:
            raise RangeError(f"system {system_id!r} has no volumetric grid")
        stored = api.cloud_params.get(system_id)
        if count is None:
            count = stored.target_count if stored is not None else 100_000
        if seed is None:
            seed = stored.seed if stored is not None else 0
        key = ("cloud_tile", system_id, int(count), int(seed))
        hit = api.cached(key)
        if hit is None:
            pc = sample_point_cloud(rec.grid, int(count), int(seed))
            hit = api.remember(
                key,
                encode_tile(
                    [
                        ("positions", pc.positions.astype("<f4")),
                        ("source_voxel", pc.source_voxel.astype("<u4")),
                    ]
                ),
            )
        return _octets(hit)

    @app.get("/api/columns/{kind}/{name}")
    async def column_tile(kind: str, name: str, system: str | None = None):
        source = api.state.source
        if not source.has_kind(kind) or not source.has_column(kind, name):
            raise SchemaError(f"no {kind} column named {name!r}")
        values = source.column(kind, name)
        if system is not None:
            lo, hi = collection.system_slice(kind, system)
            values = values[lo:hi]
        return _octets(encode_tile([("values", np.asarray(values).astype("<f4"))]))

    # -- plot products ------------------------------------------------------------

    @app.get("/api/plot/histogram")
    async def plot_histogram(request: Request):
        params = request.query_params
        kind, x, y = _require(params, "kind", "x", "y")
        x_spec = AxisSpec(x, _parse_chain(params.get("x_transform")))
        y_spec = AxisSpec(y, _parse_chain(params.get("y_transform")))
        bins = _parse_bins(params.get("bins"))
        rng = _parse_range(params)
        selected = params.get("selected", "").lower() in ("1", "true", "yes")

        spec_key = json.dumps(
            {
                "kind": kind,
                "x": [x, list(x_spec.transform)],
                "y": [y, list(y_spec.transform)],
                "bins": bins if isinstance(bins, int) else list(bins),
                "range": rng,
                "selected": selected,
            },
            sort_keys=True,
        )
        versions = (api.data_version, api.state.version if selected else None)
        key = ("histogram", spec_key, versions)
        hit = api.cached(key)
        if hit is None:
            if selected:
                hist = brush_projection(
                    api.state,
                    {"kind": kind, "x": x_spec, "y": y_spec, "bins": bins, "range": rng},
                )
            else:
                hist = histogram2d(api.state.source, kind, x_spec, y_spec, bins=bins, range=rng)
            hit = api.remember(
                key,
                _hist_doc(
                    hist,
                    {
                        "selected": selected,
                        "selection_version": api.state.version,
                        "data_version": api.data_version,
                    },
                ),
            )
        return hit

    @app.get("/api/plot/correlation")
    async def plot_correlation(request: Request):
        params = request.query_params
        (kind,) = _require(params, "kind")
        columns = params.get("columns")
        names = tuple(c for c in columns.split(",") if c) if columns else None
        key = ("correlation", kind, names, api.data_version)
        hit = api.cached(key)
        if hit is None:
            cm = correlation_matrix(api.state.source, kind, names)
            hit = api.remember(
                key,
                {
                    "kind": kind,
                    "columns": list(cm.column_names),
                    "r": _json_matrix(cm.r),
                    "degenerate": [bool(v) for v in cm.degenerate],
                    "insufficient": [[bool(v) for v in row] for row in cm.insufficient],
                    "data_version": api.data_version,
                },
            )
        return hit

    @app.get("/api/plot/pca")
    async def plot_pca(request: Request):
        params = request.query_params
        (kind,) = _require(params, "kind")
        columns = params.get("columns")
        names = (
            tuple(c for c in columns.split(",") if c)
            if columns
            else collection.column_names(kind)
        )
        try:
            k = int(params.get("k", 2))
            ax = int(params.get("ax", 0))
            ay = int(params.get("ay", min(1, k - 1)))
        except ValueError as exc:
            raise ParseError(f"k, ax, ay must be integers: {exc}")
        standardized = params.get("standardized", "true").lower() not in ("0", "false", "no")
        bins = _parse_bins(params.get("bins"))
        selected = params.get("selected", "").lower() in ("1", "true", "yes")
        if not 0 <= ax < k or not 0 <= ay < k:
            raise RangeError(f"axes ({ax}, {ay}) out of range for k = {k}")

        model_key = ("pca_model", kind, names, k, standardized, api.data_version)
        model = api.cached(model_key)
        if model is None:
            model = api.remember(
                model_key, pca_fit(api.state.source, kind, names, k, standardized=standardized)
            )
            api.register_model(model)

        out_names = model.output_names()
        proj_key = ("pca_proj", model.fingerprint(), api.data_version)
        proj = api.cached(proj_key)
        if proj is None:
            proj = api.remember(proj_key, pca_project_source(model, api.state.source))

        # bin the chosen pair of projected axes like any scatter heatmap
        class _ProjSource:
            def n_points(self, _kind):
                return proj.shape[0]

            def has_kind(self, _kind):
                return _kind == kind

            def has_column(self, _kind, name):
                return name in out_names

            def column_names(self, _kind):
                return out_names

            def column(self, _kind, name):
                return proj[:, out_names.index(name)]

        src = _ProjSource()
        hist = histogram2d(src, kind, out_names[ax], out_names[ay], bins=bins)
        extra = {
            "fingerprint": model.fingerprint(),
            "columns": list(model.column_names),
            "output_columns": list(out_names),
            "k": model.k,
            "standardized": model.standardized,
            "explained_variance": [float(v) for v in model.explained_variance],
            "explained_variance_ratio": [float(v) for v in model.explained_variance_ratio],
            "components": _json_matrix(model.components),
            "mean": [float(v) for v in model.mean],
            "scale": [float(v) for v in model.scale],
            "n_rows_used": model.n_rows_used,
            "ax": ax,
            "ay": ay,
            "data_version": api.data_version,
            "selection_version": api.state.version,
        }
        if selected:
            mask = api.state.mask(kind)
            sel = proj[mask]
            sel_hist = histogram2d(
                _masked_proj_source(sel, out_names, kind),
                kind,
                out_names[ax],
                out_names[ay],
                bins=bins,
                range=(
                    (float(hist.x_edges[0]), float(hist.x_edges[-1])),
                    (float(hist.y_edges[0]), float(hist.y_edges[-1])),
                ),
            )
            extra["selected_counts"] = [int(v) for v in sel_hist.counts.ravel()]
        return _hist_doc(hist, extra)

    def _masked_proj_source(rows, out_names, kind):
        class _S:
            def n_points(self, _kind):
                return rows.shape[0]

            def has_kind(self, _kind):
                return _kind == kind

            def has_column(self, _kind, name):
                return name in out_names

            def column_names(self, _kind):
                return out_names

            def column(self, _kind, name):
                return rows[:, out_names.index(name)]

        return _S()

    # -- selection ----------------------------------------------------------------

    def _selection_doc():
        return {
            "selection_version": api.state.version,
            "data_version": api.data_version,
            "combine_mode": api.state.combine_mode,
            "brushes": [b.brush_id for b in api.state.brushes],
            "selected": {
                kind: api.state.selected_count(kind) for kind in collection.kinds()
            },
        }

    @app.post("/api/selection/brush")
    async def selection_brush(request: Request):
        try:
            doc = await request.json()
        except json.JSONDecodeError as exc:
            raise ParseError(f"request body is not valid JSON: {exc}")
        op = doc.get("op", "apply")
        async with api.lock:
            if op == "apply":
                brush = _parse_brush_doc(doc.get("brush") or {})
                api.ensure_derived((brush.x_column, brush.y_column))
                api.state = apply_brush(api.state, brush)
            elif op == "remove":
                brush_id = doc.get("brush_id")
                if not brush_id:
                    raise ParseError("remove needs a brush_id")
                api.state = remove_brush(api.state, brush_id)
            elif op == "clear":
                api.state = clear_brushes(api.state)
            elif op == "combine_mode":
                api.state = set_combine_mode(api.state, doc.get("mode", ""))
            else:
                raise ParseError(f"unknown selection op {op!r}")
            api.broadcast()
            return _selection_doc()

    @app.get("/api/selection")
    async def selection_info():
        return _selection_doc()

    @app.get("/api/selection/mask")
    async def selection_mask(kind: str, system: str | None = None):
        if kind not in DATA_KINDS:
            raise SchemaError(f"unknown data kind {kind!r}")
        mask = api.state.mask(kind)
        if system is not None:
            lo, hi = collection.system_slice(kind, system)
            mask = mask[lo:hi]
        return {
            "kind": kind,
            "system": system,
            "n": int(mask.size),
            "runs": mask_to_runs(mask),
            "selection_version": api.state.version,
        }

    # -- export and sessions ---------------------------------------------------------

    @app.post("/api/export")
    async def export(request: Request):
        try:
            doc = await request.json()
        except json.JSONDecodeError as exc:
            raise ParseError(f"request body is not valid JSON: {exc}")
        kind = doc.get("kind")
        path = doc.get("path")
        if kind not in DATA_KINDS:
            raise SchemaError(f"export needs kind in {DATA_KINDS}, got {kind!r}")
        if not path:
            raise ParseError("export needs a destination path")
        rows = export_selection(api.state, kind, path)
        return {"rows": rows, "path": str(path), "kind": kind}

    def _plots_for_capture():
        """Stored plots, plus synthesized pca specs for brushed projections.

        A brush on pca:* axes is only restorable if the session carries
        the plot that defines them, so the capture stays self-contained
        even when the viewer never registered its panel list.
        """
        plots = list(api.plots)
        covered = set()
        for p in plots:
            if p.plot_type == "pca":
                covered.update(p.pca_output_names(collection))
        needed = {}
        for b in api.state.brushes:
            for col in (b.x_column, b.y_column):
                if col.startswith("pca:") and col not in covered:
                    fingerprint = col.split(":")[1]
                    model = api.pca_models.get(fingerprint)
                    if model is not None:
                        needed[fingerprint] = model
        for fingerprint, model in needed.items():
            plots.append(
                session_mod.PlotSpec(
                    plot_id=f"pca-{fingerprint}",
                    plot_type="pca",
                    kind=model.kind,
                    columns=model.column_names,
                    k=model.k,
                    standardized=model.standardized,
                )
            )
        return tuple(plots)

    @app.get("/api/session")
    async def get_session():
        snapshot = session_mod.capture(
            api.manifest_path,
            state=api.state,
            plots=_plots_for_capture(),
            encodings=api.encodings,
            cloud_params=api.cloud_params,
            camera=api.camera,
        )
        return Response(
            content=session_mod.save_session(snapshot), media_type="application/json"
        )

    @app.put("/api/session")
    async def put_session(request: Request):
        body = await request.body()
        loaded = session_mod.load_session(body, collection)
        async with api.lock:
            models = session_mod.derived_models(loaded, collection)
            restored = session_mod.selection_state(loaded, collection, models=models)
            # the rebuilt state restarts its own counter; the process-wide
            # version must keep moving forward or push consumers would
            # discard every note after a restore
            api.state = dataclasses.replace(restored, version=api.state.version + 1)
            for model in models.values():
                api.register_model(model)
            api.plots = loaded.plots
            api.encodings = dict(loaded.encodings)
            api.cloud_params = dict(loaded.cloud_params)
            api.camera = dict(loaded.camera)
            api.data_version += 1
            api.broadcast()
            return _selection_doc()

    # -- push channel -------------------------------------------------------------

    @app.websocket("/api/events")
    async def events(ws: WebSocket):
        await ws.accept()
        sub = api.subscribe()
        try:
            while True:
                note = await sub.queue.get()
                await ws.send_json(note)
                if sub.dropped:
                    await ws.send_json({"type": "reconnect", "reason": "subscriber too slow"})
                    break
        except WebSocketDisconnect:
            pass
        finally:
            api.unsubscribe(sub)

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="viewer")

    return app


def serve(manifest_path, host="127.0.0.1", port=8077, open_browser=False, ui_dir=None):
    """Load the manifest and run the service until interrupted."""
    import socket

    import uvicorn

    app = create_app(manifest_path, ui_dir=ui_dir)

    # fail fast with a clear message instead of uvicorn's late bind error
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise RangeError(f"cannot bind {host}:{port}: {exc}")
    finally:
        probe.close()

    if open_browser:
        import threading
        import webbrowser

        threading.Timer(0.8, webbrowser.open, (f"http://{host}:{port}/",)).start()

    uvicorn.run(app, host=host, port=port, log_level="warning")
