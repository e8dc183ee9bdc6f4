"""Extended-XYZ reader.

Supports the de-facto standard: a count line, a comment line carrying
``key=value`` pairs (``Lattice="ax ay az bx by bz cx cy cz"``,
``Properties=species:S:1:pos:R:3[:name:TYPE:width...]``, optional
``pbc="T T F"``), then one whitespace-separated row per atom.  Multiple
concatenated blocks yield multiple frames.

Every declared per-atom real property of width k (other than ``pos``)
becomes k feature columns named ``name_0 .. name_{k-1}``.
"""

from __future__ import annotations

import shlex

import numpy as np

from ..errors import ParseError
from ..model import AtomFrame, Cell, FeatureTable

_DEFAULT_PROPERTIES = "species:S:1:pos:R:3"


def _parse_comment_keys(comment, line_no):
    """Split a comment line into key=value pairs, honoring double quotes."""
    try:
        tokens = shlex.split(comment, posix=True)
    except ValueError as exc:
        raise ParseError(f"malformed comment line: {exc}", location=f"line {line_no}")
    keys = {}
    for tok in tokens:
        if "=" in tok:
            key, _, value = tok.partition("=")
            keys[key] = value
    return keys


def _parse_properties(spec, line_no):
    """Decode a Properties string into (name, type, width) triplets."""
    parts = spec.split(":")
    if len(parts) % 3 != 0 or not parts:
        raise ParseError(
            f"malformed Properties string {spec!r} (need name:type:width triplets)",
            location=f"line {line_no}",
        )
    props = []
    for name, kind, width in zip(parts[0::3], parts[1::3], parts[2::3]):
        if kind not in ("S", "R", "I", "L"):
            raise ParseError(
                f"unknown property type {kind!r} in Properties string {spec!r}",
                location=f"line {line_no}",
            )
        try:
            width = int(width)
        except ValueError:
            raise ParseError(
                f"non-integer property width in Properties string {spec!r}",
                location=f"line {line_no}",
            ) from None
        if width < 1:
            raise ParseError(
                f"property {name!r} declares width {width}", location=f"line {line_no}"
            )
        props.append((name, kind, width))
    return props


def _parse_lattice(keys, line_no):
    if "Lattice" not in keys and "lattice" not in keys:
        return None
    raw = keys.get("Lattice", keys.get("lattice"))
    fields = raw.replace(",", " ").split()
    if len(fields) != 9:
        raise ParseError(
            f"Lattice needs 9 numbers, got {len(fields)}", location=f"line {line_no}"
        )
    try:
        matrix = np.array([float(f) for f in fields]).reshape(3, 3)
    except ValueError:
        raise ParseError("non-numeric Lattice entry", location=f"line {line_no}") from None
    pbc = (True, True, True)
    if "pbc" in keys:
        flags = keys["pbc"].replace(",", " ").split()
        if len(flags) != 3:
            raise ParseError(
                f"pbc needs 3 flags, got {len(flags)}", location=f"line {line_no}"
            )
        pbc = tuple(f.strip().upper() in ("T", "TRUE", "1") for f in flags)
    return Cell(matrix=matrix, pbc=pbc)


def parse_extxyz(data: bytes) -> list[AtomFrame]:
    """Parse one or more concatenated extxyz blocks into AtomFrames."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    frames = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():  # tolerate trailing blank lines between frames
            i += 1
            continue
        frames.append(_parse_frame(lines, i))
        i += 2 + frames[-1].n_atoms
    return frames


def _parse_frame(lines, start):
    count_line_no = start + 1
    try:
        natoms = int(lines[start].strip())
    except ValueError:
        raise ParseError(
            f"expected an atom count, got {lines[start].strip()!r}",
            location=f"line {count_line_no}",
        ) from None
    if natoms < 0:
        raise ParseError(f"negative atom count {natoms}", location=f"line {count_line_no}")
    if start + 1 >= len(lines):
        raise ParseError("file ends before comment line", location=f"line {count_line_no + 1}")
    keys = _parse_comment_keys(lines[start + 1], count_line_no + 1)
    props = _parse_properties(keys.get("Properties", _DEFAULT_PROPERTIES), count_line_no + 1)
    cell = _parse_lattice(keys, count_line_no + 1)

    names = [p[0] for p in props]
    if "species" not in names or "pos" not in names:
        raise ParseError(
            "Properties must declare species and pos", location=f"line {count_line_no + 1}"
        )
    total_width = sum(p[2] for p in props)

    body = lines[start + 2 : start + 2 + natoms]
    if len(body) < natoms:
        raise ParseError(
            f"frame declares {natoms} atoms but only {len(body)} rows follow",
            location=f"line {count_line_no}",
        )

    elements = []
    positions = np.zeros((natoms, 3))
    extra = {}  # name -> (width, float array natoms x width)
    for name, kind, width in props:
        if name not in ("species", "pos") and kind == "R":
            extra[name] = np.zeros((natoms, width))

    for row, line in enumerate(body):
        fields = line.split()
        line_no = count_line_no + 2 + row
        if len(fields) != total_width:
            raise ParseError(
                f"atom row has {len(fields)} fields, Properties declares {total_width}",
                location=f"line {line_no}",
            )
        at = 0
        for name, kind, width in props:
            chunk = fields[at : at + width]
            at += width
            try:
                if name == "species":
                    elements.append(chunk[0])
                elif name == "pos":
                    positions[row] = [float(c) for c in chunk]
                elif kind == "R":
                    extra[name][row] = [float(c) for c in chunk]
                # integer/logical/string extras are validated for width only
            except ValueError:
                raise ParseError(
                    f"non-numeric value for property {name!r}: {chunk}",
                    location=f"line {line_no}",
                ) from None

    named_columns = []
    for name, kind, width in props:
        if name in ("species", "pos") or kind != "R":
            continue
        block = extra[name]
        for k in range(width):
            col = np.ascontiguousarray(block[:, k])
            col.flags.writeable = False
            named_columns.append((f"{name}_{k}", col))
    features = FeatureTable.from_columns(named_columns) if named_columns else None
    positions.flags.writeable = False
    return AtomFrame(
        positions=positions, elements=tuple(elements), cell=cell, features=features
    )
