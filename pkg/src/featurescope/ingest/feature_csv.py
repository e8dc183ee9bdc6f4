"""Sidecar feature-table CSV reader.

Fingerprint pipelines emit plain tabular output: a header row of column
names followed by a numeric body.  Parsing the body is delegated to
pandas' C engine (tables reach 10^6 x 47 in practice); header validation
and the row-count contract stay here.
"""

from __future__ import annotations

import io

import numpy as np
import pandas as pd

from ..errors import ParseError, SchemaError, ShapeError
from ..model import FeatureTable


def parse_feature_csv(data: bytes, expected_rows: int) -> FeatureTable:
    """Parse CSV bytes into a FeatureTable of exactly ``expected_rows`` rows.

    Empty cells become NaN (reflected in the table's per-column finite
    counts).  A duplicate header name is a schema error; a row count other
    than ``expected_rows`` is a shape error.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    newline = data.find(b"\n")
    header_line = (data[:newline] if newline != -1 else data).decode("utf-8-sig").strip()
    if not header_line:
        raise ParseError("feature CSV is missing its header row", location="line 1")
    names = [h.strip() for h in header_line.split(",")]
    if any(not n for n in names):
        raise SchemaError("feature CSV header has an empty column name")
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate feature CSV header names: {dupes}")

    body = data[newline + 1 :] if newline != -1 else b""
    try:
        frame = pd.read_csv(
            io.BytesIO(body),
            header=None,
            names=names,
            dtype=np.float64,
            na_values=[""],
            skip_blank_lines=True,
            # the default float parser can be 1 ulp off; exports must
            # re-import bit-exactly
            float_precision="round_trip",
        )
    except (ValueError, pd.errors.ParserError) as exc:
        raise ParseError(f"feature CSV body failed to parse: {exc}") from None

    if len(frame) != expected_rows:
        raise ShapeError(
            f"feature CSV has {len(frame)} rows, expected {expected_rows}"
        )
    columns = []
    for name in names:
        col = np.ascontiguousarray(frame[name].to_numpy(dtype=np.float64))
        col.flags.writeable = False
        columns.append((name, col))
    return FeatureTable.from_columns(columns)
