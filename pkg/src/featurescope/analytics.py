"""Plot products over pooled feature columns.

Three products, all pure functions of (source, spec): binned 2D scatter
heatmaps, Pearson correlation matrices, and PCA projections. A source is
anything with the pooled-column methods of SystemCollection (n_points,
column_names, has_column, column), so the same code runs over raw and
derived columns.

Non-finite handling differs per product and is always counted rather
than silent: histograms drop-and-count, correlation is pairwise-complete,
PCA is row-complete.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneracyError,
    DimensionError,
    InsufficientDataError,
    RangeError,
    SchemaError,
)

TRANSFORM_IDS = ("identity", "log10", "abs", "negate")

DEFAULT_BINS = 128

# Rows per block for the streaming mean/covariance passes. Keeps the
# working set near 50 MB at F = 47 regardless of N.
_CHUNK_ROWS = 1 << 17


def normalize_transform(transform) -> tuple[str, ...]:
    """Validate a transform chain; accepts None, one id, or a sequence."""
    if transform is None:
        return ()
    if isinstance(transform, str):
        transform = (transform,)
    chain = tuple(transform)
    for t in chain:
        if t not in TRANSFORM_IDS:
            raise SchemaError(
                f"unknown transform {t!r}; expected one of {', '.join(TRANSFORM_IDS)}"
            )
    return tuple(t for t in chain if t != "identity")


def apply_transform(values, transform):
    """Apply a transform chain elementwise.

    Domain violations (log10 of a non-positive value) become NaN so the
    caller can count them as dropped.
    """
    chain = normalize_transform(transform)
    out = np.asarray(values, dtype=np.float64)
    if chain:
        out = out.copy()
    for t in chain:
        if t == "log10":
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.where(out > 0, np.log10(np.where(out > 0, out, 1.0)), np.nan)
        elif t == "abs":
            np.abs(out, out=out)
        elif t == "negate":
            np.negative(out, out=out)
    return out


@dataclass(frozen=True)
class AxisSpec:
    """One plot axis: a column name plus an optional transform chain."""

    column: str
    transform: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transform", normalize_transform(self.transform))

    @classmethod
    def of(cls, spec):
        if isinstance(spec, cls):
            return spec
        if isinstance(spec, str):
            return cls(column=spec)
        if isinstance(spec, dict):
            return cls(column=spec["column"], transform=spec.get("transform", ()))
        raise SchemaError(f"cannot interpret {spec!r} as an axis spec")


def _readonly(a):
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Histogram2D:
    """Binned counts of two transformed columns over the pooled rows."""

    x_column: str
    y_column: str
    x_transform: tuple[str, ...]
    y_transform: tuple[str, ...]
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray
    n_dropped: int
    all_dropped: bool = False

    def __post_init__(self):
        x_edges = _readonly(np.asarray(self.x_edges, dtype=np.float64))
        y_edges = _readonly(np.asarray(self.y_edges, dtype=np.float64))
        counts = _readonly(np.asarray(self.counts, dtype=np.int64))
        if np.any(np.diff(x_edges) <= 0) or np.any(np.diff(y_edges) <= 0):
            raise RangeError("histogram edges must be strictly increasing")
        if counts.shape != (x_edges.size - 1, y_edges.size - 1):
            raise RangeError(
                f"counts shape {counts.shape} does not match "
                f"{x_edges.size - 1}x{y_edges.size - 1} bins"
            )
        if counts.size and counts.min() < 0:
            raise RangeError("histogram counts must be non-negative")
        object.__setattr__(self, "x_edges", x_edges)
        object.__setattr__(self, "y_edges", y_edges)
        object.__setattr__(self, "counts", counts)

    @property
    def bins(self) -> tuple[int, int]:
        return (self.x_edges.size - 1, self.y_edges.size - 1)

    @property
    def n_binned(self) -> int:
        return int(self.counts.sum())


def _auto_edges(finite_values, nbins):
    lo = float(finite_values.min())
    hi = float(finite_values.max())
    # pad the top so the max lands inside the final bin even when lo == hi
    pad = 1e-9 * max(abs(lo), abs(hi))
    if pad == 0.0:
        pad = 1e-9
    return np.linspace(lo, hi + pad, nbins + 1)


def _bin_indices(values, edges):
    """Half-open [lo, hi) bins, final bin closed; -1 or nbins = outside."""
    idx = np.searchsorted(edges, values, side="right") - 1
    nbins = edges.size - 1
    on_top = values == edges[-1]
    idx[on_top] = nbins - 1
    return idx


def _normalize_bins(bins):
    if isinstance(bins, (int, np.integer)):
        bins = (int(bins), int(bins))
    bx, by = int(bins[0]), int(bins[1])
    if bx < 1 or by < 1:
        raise RangeError(f"bins must be at least 1 per axis, got {(bx, by)}")
    return bx, by


def histogram2d(source, kind, x_spec, y_spec, bins=DEFAULT_BINS, range=None) -> Histogram2D:
    """Count pooled rows on a (bx, by) grid of the two transformed axes.

    Count conservation: counts.sum() + n_dropped equals the pooled row
    count. Dropped rows are those that are non-finite after transforms
    or, when an explicit range is given, that fall outside it. When
    everything drops and no range was given, the result carries
    all_dropped=True and placeholder [0, 1] edges.
    """
    x_spec = AxisSpec.of(x_spec)
    y_spec = AxisSpec.of(y_spec)
    bx, by = _normalize_bins(bins)
    n_total = source.n_points(kind)

    x = apply_transform(source.column(kind, x_spec.column), x_spec.transform)
    y = apply_transform(source.column(kind, y_spec.column), y_spec.transform)
    finite = np.isfinite(x) & np.isfinite(y)

    all_dropped = False
    if range is not None:
        (xlo, xhi), (ylo, yhi) = range
        if not (xhi > xlo and yhi > ylo):
            raise RangeError(f"range must have hi > lo per axis, got {range!r}")
        x_edges = np.linspace(float(xlo), float(xhi), bx + 1)
        y_edges = np.linspace(float(ylo), float(yhi), by + 1)
    elif not finite.any():
        all_dropped = True
        x_edges = np.linspace(0.0, 1.0, bx + 1)
        y_edges = np.linspace(0.0, 1.0, by + 1)
    else:
        x_edges = _auto_edges(x[finite], bx)
        y_edges = _auto_edges(y[finite], by)

    if all_dropped:
        counts = np.zeros((bx, by), dtype=np.int64)
    else:
        xf = x[finite]
        yf = y[finite]
        ix = _bin_indices(xf, x_edges)
        iy = _bin_indices(yf, y_edges)
        inside = (ix >= 0) & (ix < bx) & (iy >= 0) & (iy < by)
        flat = ix[inside] * by + iy[inside]
        counts = np.bincount(flat, minlength=bx * by).reshape(bx, by)

    n_dropped = int(n_total - counts.sum())
    return Histogram2D(
        x_column=x_spec.column,
        y_column=y_spec.column,
        x_transform=x_spec.transform,
        y_transform=y_spec.transform,
        x_edges=x_edges,
        y_edges=y_edges,
        counts=counts,
        n_dropped=n_dropped,
        all_dropped=all_dropped,
    )


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pairwise-complete Pearson coefficients over pooled columns.

    degenerate marks zero-variance columns (their off-diagonal entries
    are 0 by convention); insufficient marks pairs with fewer than two
    complete observations (their entries are NaN).
    """

    column_names: tuple[str, ...]
    r: np.ndarray
    degenerate: np.ndarray
    insufficient: np.ndarray

    def __post_init__(self):
        f = len(self.column_names)
        r = _readonly(np.asarray(self.r, dtype=np.float64))
        degenerate = _readonly(np.asarray(self.degenerate, dtype=bool))
        insufficient = _readonly(np.asarray(self.insufficient, dtype=bool))
        if r.shape != (f, f) or degenerate.shape != (f,) or insufficient.shape != (f, f):
            raise RangeError("correlation matrix field shapes disagree")
        if not np.allclose(r, r.T, atol=1e-12, equal_nan=True):
            raise RangeError("correlation matrix must be symmetric")
        finite = np.isfinite(r)
        if finite.any() and np.abs(r[finite]).max() > 1 + 1e-12:
            raise RangeError("correlation coefficients must lie in [-1, 1]")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "degenerate", degenerate)
        object.__setattr__(self, "insufficient", insufficient)


def _column_matrix_chunks(columns, row_mask=None):
    """Yield dense (rows, F) float64 blocks gathered from pooled columns."""
    n = columns[0].shape[0]
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        block = np.column_stack([c[start:stop] for c in columns])
        if row_mask is not None:
            block = block[row_mask[start:stop]]
        if block.shape[0]:
            yield block


def _streaming_cov(columns, means, row_mask=None):
    """Sum of outer products of centered rows, one block at a time."""
    f = len(columns)
    acc = np.zeros((f, f), dtype=np.float64)
    count = 0
    for block in _column_matrix_chunks(columns, row_mask):
        block = block - means
        acc += block.T @ block
        count += block.shape[0]
    return acc, count


def correlation_matrix(source, kind, columns=None) -> CorrelationMatrix:
    """Pearson correlation over pairwise-complete pooled rows.

    All-finite data takes a single streaming matrix pass; columns with
    missing values fall back to per-pair masked evaluation. Coefficients
    are clipped to [-1, 1] to absorb roundoff.
    """
    names = tuple(columns) if columns is not None else source.column_names(kind)
    if not names:
        raise SchemaError("correlation needs at least one column")
    cols = [np.asarray(source.column(kind, name), dtype=np.float64) for name in names]
    f = len(names)

    finite_masks = [np.isfinite(c) for c in cols]
    n_finite = np.array([int(m.sum()) for m in finite_masks])
    degenerate = np.zeros(f, dtype=bool)
    for i, c in enumerate(cols):
        if n_finite[i]:
            sub = c[finite_masks[i]]
            degenerate[i] = sub.min() == sub.max()

    r = np.full((f, f), np.nan)
    insufficient = np.zeros((f, f), dtype=bool)

    if all(int(m.sum()) == c.shape[0] for m, c in zip(finite_masks, cols)) and cols[0].shape[0] >= 2:
        means = np.array([c.mean() for c in cols])
        acc, n = _streaming_cov(cols, means)
        cov = acc / (n - 1)
        std = np.sqrt(np.diag(cov))
        safe = np.where(std > 0, std, 1.0)
        r = cov / np.outer(safe, safe)
        r[degenerate, :] = 0.0
        r[:, degenerate] = 0.0
    else:
        for i in range(f):
            for j in range(i + 1, f):
                m = finite_masks[i] & finite_masks[j]
                n = int(m.sum())
                if n < 2:
                    insufficient[i, j] = insufficient[j, i] = True
                    continue
                xi = cols[i][m]
                xj = cols[j][m]
                dxi = xi - xi.mean()
                dxj = xj - xj.mean()
                vi = float(dxi @ dxi)
                vj = float(dxj @ dxj)
                if vi == 0.0 or vj == 0.0:
                    r[i, j] = r[j, i] = 0.0
                else:
                    r[i, j] = r[j, i] = float(dxi @ dxj) / np.sqrt(vi * vj)
        for i in range(f):
            if n_finite[i] < 2:
                insufficient[i, i] = True

    np.clip(r, -1.0, 1.0, out=r)
    r = (r + r.T) / 2.0
    for i in range(f):
        if n_finite[i] >= 2:
            r[i, i] = 1.0
        else:
            r[i, i] = np.nan
            insufficient[i, i] = True
    r[insufficient] = np.nan
    return CorrelationMatrix(
        column_names=names, r=r, degenerate=degenerate, insufficient=insufficient
    )


@dataclass(frozen=True)
class PCAModel:
    """Top-k eigenpairs of the (optionally standardized) covariance."""

    kind: str
    column_names: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    standardized: bool
    n_rows_used: int

    def __post_init__(self):
        mean = _readonly(np.asarray(self.mean, dtype=np.float64))
        scale = _readonly(np.asarray(self.scale, dtype=np.float64))
        comps = _readonly(np.asarray(self.components, dtype=np.float64))
        ev = _readonly(np.asarray(self.explained_variance, dtype=np.float64))
        k, f = comps.shape
        if mean.shape != (f,) or scale.shape != (f,) or ev.shape != (k,):
            raise RangeError("PCA model field shapes disagree")
        gram = comps @ comps.T
        if not np.allclose(gram, np.eye(k), atol=1e-10):
            raise RangeError("PCA components must be orthonormal")
        if np.any(np.diff(ev) > 1e-12) or (ev.size and ev[-1] < -1e-12):
            raise RangeError("explained variance must be non-negative and descending")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "explained_variance", ev)

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def fingerprint(self) -> str:
        """Stable id for derived-column naming and session references."""
        return pca_fingerprint(self.kind, self.column_names, self.k, self.standardized)

    def output_names(self) -> tuple[str, ...]:
        """Names under which the projected axes are brushable."""
        return pca_column_names(self.kind, self.column_names, self.k, self.standardized)


def pca_fingerprint(kind, columns, k, standardized) -> str:
    """Deterministic id of a PCA spec, independent of the fitted data."""
    doc = {
        "kind": kind,
        "columns": list(columns),
        "k": int(k),
        "standardized": bool(standardized),
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:10]


def pca_column_names(kind, columns, k, standardized) -> tuple[str, ...]:
    fp = pca_fingerprint(kind, columns, k, standardized)
    return tuple(f"pca:{fp}:{i}" for i in range(int(k)))


def pca_fit(source, kind, columns, k, standardized: bool = True) -> PCAModel:
    """Fit PCA over the rows of the selected pooled columns.

    Rows with any non-finite value are excluded from the fit. The sign
    convention (largest-magnitude entry of each component positive)
    keeps saved sessions reproducible.
    """
    names = tuple(columns)
    if not names:
        raise SchemaError("PCA needs at least one column")
    f = len(names)
    k = int(k)
    if k < 1:
        raise DimensionError(f"k must be at least 1, got {k}")
    if k > f:
        raise DimensionError(f"k = {k} exceeds the {f} selected columns")
    cols = [np.asarray(source.column(kind, name), dtype=np.float64) for name in names]

    row_mask = np.ones(cols[0].shape[0], dtype=bool)
    for c in cols:
        row_mask &= np.isfinite(c)
    n = int(row_mask.sum())
    if n < k + 1:
        raise InsufficientDataError(
            f"PCA with k = {k} needs at least {k + 1} finite rows, found {n}"
        )

    use_mask = None if n == cols[0].shape[0] else row_mask
    if use_mask is None:
        means = np.array([c.mean() for c in cols])
    else:
        means = np.array([c[row_mask].mean() for c in cols])

    acc, n_seen = _streaming_cov(cols, means, use_mask)
    cov = acc / (n_seen - 1)

    scale = np.ones(f)
    if standardized:
        std = np.sqrt(np.diag(cov))
        dead = np.flatnonzero(std == 0)
        if dead.size:
            offenders = ", ".join(names[i] for i in dead)
            raise DegeneracyError(
                f"cannot standardize zero-variance column(s): {offenders}"
            )
        scale = std
        cov = cov / np.outer(std, std)

    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:k]
    ev = np.maximum(eigenvalues[order], 0.0)
    comps = eigenvectors[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            np.negative(row, out=row)

    return PCAModel(
        kind=kind,
        column_names=names,
        mean=means,
        scale=scale,
        components=comps,
        explained_variance=ev,
        total_variance=float(np.trace(cov)),
        standardized=standardized,
        n_rows_used=n,
    )


def pca_project(model: PCAModel, points):
    """Project rows into the model's k-dim space.

    Accepts one F-vector or an (n, F) matrix; rows with non-finite
    entries project to NaN rows.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    f = model.mean.shape[0]
    if pts.shape[1] != f:
        raise DimensionError(f"points have {pts.shape[1]} columns, model expects {f}")
    finite = np.isfinite(pts).all(axis=1)
    out = np.full((pts.shape[0], model.k), np.nan)
    if finite.any():
        centered = (pts[finite] - model.mean) / model.scale
        out[finite] = centered @ model.components.T
    return out[0] if single else out


def pca_project_source(model: PCAModel, source) -> np.ndarray:
    """Project a pooled source through the model, block by block."""
    cols = [np.asarray(source.column(model.kind, n), dtype=np.float64) for n in model.column_names]
    n = cols[0].shape[0]
    out = np.full((n, model.k), np.nan)
    comps_t = model.components.T
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        block = np.column_stack([c[start:stop] for c in cols])
        finite = np.isfinite(block).all(axis=1)
        if finite.any():
            centered = (block[finite] - model.mean) / model.scale
            sub = out[start:stop]
            sub[finite] = centered @ comps_t
    return out
