"""Binary tile and mask encodings shared with the viewer.

Tile layout (all integers little-endian, documented in
``docs/wire-format.md``):

    u32 section_count
    repeat section_count times:
        u32 byte_length
        byte_length bytes of payload

Section 0 is a UTF-8 JSON header: {"sections": [{"name", "dtype",
"shape"}, ...]} describing the remaining sections in order. Array
payloads are C-order and little-endian; dtype strings use numpy codes
("<f4", "<u2", "<u4").

Selection masks travel as run lengths alternating unselected/selected,
always starting with the unselected count (possibly 0). The run sum
equals the mask length.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ParseError, ShapeError

_U32 = struct.Struct("<I")

# dtypes the viewer decoder understands
WIRE_DTYPES = ("<f4", "<f8", "<u2", "<u4", "<i4", "<i8")


def _wire_dtype(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<")
    code = dt.str
    if code not in WIRE_DTYPES:
        raise ShapeError(f"dtype {arr.dtype} is not wire-encodable")
    return code


def encode_tile(sections) -> bytes:
    """Pack named arrays into one length-prefixed binary tile."""
    metas = []
    payloads = []
    for name, arr in sections:
        arr = np.ascontiguousarray(arr)
        code = _wire_dtype(arr)
        metas.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        payloads.append(arr.astype(code, copy=False).tobytes())
    header = json.dumps({"sections": metas}, sort_keys=True, separators=(",", ":")).encode()
    parts = [_U32.pack(len(payloads) + 1), _U32.pack(len(header)), header]
    for blob in payloads:
        parts.append(_U32.pack(len(blob)))
        parts.append(blob)
    return b"".join(parts)


def decode_tile(data: bytes) -> dict:
    """Inverse of encode_tile; validates every declared length."""
    view = memoryview(data)
    if len(view) < 4:
        raise ParseError("tile shorter than its section count")
    (count,) = _U32.unpack_from(view, 0)
    offset = 4
    raw = []
    for i in range(count):
        if offset + 4 > len(view):
            raise ParseError(f"tile truncated before section {i} length")
        (length,) = _U32.unpack_from(view, offset)
        offset += 4
        if offset + length > len(view):
            raise ParseError(f"tile section {i} declares {length} bytes past the end")
        raw.append(bytes(view[offset : offset + length]))
        offset += length
    if offset != len(view):
        raise ParseError(f"tile has {len(view) - offset} trailing bytes")
    if not raw:
        raise ParseError("tile has no header section")
    try:
        header = json.loads(raw[0])
        metas = header["sections"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"tile header is malformed: {exc}")
    if len(metas) != len(raw) - 1:
        raise ParseError(
            f"tile header describes {len(metas)} sections, payload has {len(raw) - 1}"
        )
    out = {}
    for meta, blob in zip(metas, raw[1:]):
        dtype = np.dtype(meta["dtype"])
        shape = tuple(meta["shape"])
        expected = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        if expected != len(blob):
            raise ParseError(
                f"section {meta['name']!r} declares shape {shape} "
                f"({expected} bytes) but carries {len(blob)}"
            )
        out[meta["name"]] = np.frombuffer(blob, dtype=dtype).reshape(shape)
    return out


def mask_to_runs(mask: np.ndarray) -> list:
    """Alternating run lengths, starting with the unselected run."""
    mask = np.asarray(mask, dtype=bool)
    n = mask.size
    if n == 0:
        return []
    change = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [n]])
    runs = np.diff(bounds).tolist()
    if mask[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def runs_to_mask(runs, n: int) -> np.ndarray:
    """Expand run lengths back into a boolean mask of length n."""
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs):
        raise ParseError("mask runs must be non-negative")
    if sum(runs) != n:
        raise ParseError(f"mask runs sum to {sum(runs)}, expected {n}")
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs)
