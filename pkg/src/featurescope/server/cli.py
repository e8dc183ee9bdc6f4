"""Command-line entry point: serve, export, stats, bench."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click
import numpy as np

from ..analytics import correlation_matrix, histogram2d, pca_fit
from ..errors import EngineError
from ..ingest import load_manifest
from ..selection import Brush, apply_brush, export_selection, initial_state
from ..session import load_session, selection_state


def _fail(exc: EngineError):
    click.echo(f"error [{exc.code}]: {exc}", err=True)
    sys.exit(1)


@click.group()
def cli():
    """Explore per-atom and per-voxel features across systems."""


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", envvar="FEATURESCOPE_HOST", show_default=True)
@click.option("--port", default=8077, envvar="FEATURESCOPE_PORT", show_default=True, type=int)
@click.option("--no-browser", is_flag=True, help="Do not open a browser tab.")
@click.option(
    "--ui-dir",
    default=None,
    envvar="FEATURESCOPE_UI",
    type=click.Path(file_okay=False),
    help="Directory of built viewer assets to serve at /.",
)
def serve(manifest, host, port, no_browser, ui_dir):
    """Serve MANIFEST over HTTP for the viewer."""
    from .app import serve as run_server

    try:
        run_server(
            manifest, host=host, port=port, open_browser=not no_browser, ui_dir=ui_dir
        )
    except EngineError as exc:
        _fail(exc)


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--session", "session_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, writable=True))
@click.option("--kind", default="atoms", type=click.Choice(["atoms", "voxels"]), show_default=True)
def export(manifest, session_file, out_path, kind):
    """Apply a saved session's selection headlessly and write it as CSV."""
    try:
        collection = load_manifest(manifest)
        loaded = load_session(Path(session_file).read_bytes(), collection)
        state = selection_state(loaded, collection)
        rows = export_selection(state, kind, out_path)
    except EngineError as exc:
        _fail(exc)
        return
    click.echo(f"wrote {rows} rows to {out_path}")


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
def stats(manifest):
    """Print systems, shapes, and per-column summaries."""
    try:
        collection = load_manifest(manifest)
    except EngineError as exc:
        _fail(exc)
        return
    click.echo(f"systems: {len(collection.systems)}")
    for rec in collection.systems:
        bits = []
        if rec.atoms is not None:
            bits.append(f"{rec.atoms.n_atoms} atoms")
        if rec.grid is not None:
            nx, ny, nz = rec.grid.shape
            bits.append(f"grid {nx}x{ny}x{nz}")
        click.echo(f"  {rec.system_id}: " + ", ".join(bits))
    for kind in collection.kinds():
        table = collection.pooled_table(kind)
        click.echo(f"{kind}: {table.n_points} points, {len(table.names)} columns")
        for name in table.names:
            col = table.column(name)
            finite = col[np.isfinite(col)]
            unit = table.unit(name)
            suffix = f" [{unit}]" if unit else ""
            if finite.size:
                click.echo(
                    f"  {name}{suffix}: min {finite.min():.6g}, "
                    f"max {finite.max():.6g}, mean {finite.mean():.6g}, "
                    f"finite {finite.size}/{col.size}"
                )
            else:
                click.echo(f"  {name}{suffix}: no finite values")


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--repeats", default=3, show_default=True, type=int)
def bench(manifest, repeats):
    """Time the interactive-path operations on MANIFEST's data."""
    try:
        collection = load_manifest(manifest)
    except EngineError as exc:
        _fail(exc)
        return

    kind = None
    for candidate in collection.kinds():
        if collection.n_points(candidate) > 0 and len(collection.column_names(candidate)) >= 2:
            if kind is None or collection.n_points(candidate) > collection.n_points(kind):
                kind = candidate
    if kind is None:
        click.echo("error [schema_error]: no kind with at least 2 columns to bench", err=True)
        sys.exit(1)

    names = collection.column_names(kind)
    x, y = names[0], names[1]
    n = collection.n_points(kind)
    click.echo(f"bench target: kind={kind}, n={n}, columns={len(names)}")

    def clock(label, fn):
        best = min(_time_once(fn) for _ in range(max(1, repeats)))
        click.echo(f"  {label}: {best * 1000:.1f} ms")
        return best

    xv = collection.column(kind, x)
    lo, hi = float(np.nanquantile(xv, 0.25)), float(np.nanquantile(xv, 0.75))
    yv = collection.column(kind, y)
    ylo, yhi = float(np.nanmin(yv)), float(np.nanmax(yv))
    state = initial_state(collection)
    brush = Brush("bench", "bench", x, y, (lo, hi), (ylo, yhi))

    clock("brush mask recompute", lambda: apply_brush(state, brush))
    clock("histogram 128x128", lambda: histogram2d(collection, kind, x, y, bins=128))
    clock(
        f"correlation {len(names)}x{len(names)}",
        lambda: correlation_matrix(collection, kind, names),
    )
    clock("pca k=2", lambda: pca_fit(collection, kind, names, 2, standardized=False))


def _time_once(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    cli(prog_name="featurescope")


if __name__ == "__main__":
    main()
