"""Gaussian cube file reader and writer.

The cube layout is folklore rather than a formal spec, so both unit
conventions are accepted: positive voxel counts mean the header geometry
is in Bohr (converted to Angstrom on load), negative counts mean it is
already in Angstrom.  Values are stored z-fastest, matching the linear
voxel order of :class:`~featurescope.model.VolumetricGrid`, so ingestion
is copy-free.
"""

from __future__ import annotations

import io
import re

import numpy as np

from ..elements import ATOMIC_NUMBERS, symbol_for_number
from ..errors import ParseError
from ..model import AtomFrame, FeatureTable, VolumetricGrid

BOHR_TO_ANGSTROM = 0.529177210903  # CODATA 2018


class _LineCursor:
    """Iterates lines while tracking the byte offset of each line start."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0
        self.line_no = 0

    def next_line(self, what):
        if self.offset >= len(self.data):
            raise ParseError(
                f"cube file ended before {what}", location=f"byte {self.offset}"
            )
        end = self.data.find(b"\n", self.offset)
        if end == -1:
            end = len(self.data)
        line = self.data[self.offset : end]
        self.line_start = self.offset
        self.offset = end + 1
        self.line_no += 1
        return line.decode("ascii", errors="replace")

    def fields(self, what, n_min):
        line = self.next_line(what)
        parts = line.split()
        if len(parts) < n_min:
            raise ParseError(
                f"expected at least {n_min} fields for {what}, got {len(parts)}",
                location=f"line {self.line_no}, byte {self.line_start}",
            )
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise ParseError(
                f"non-numeric field in {what}: {line.strip()!r}",
                location=f"line {self.line_no}, byte {self.line_start}",
            ) from None


def parse_cube(data: bytes) -> tuple[VolumetricGrid, AtomFrame]:
    """Parse cube bytes into a grid and its atom frame.

    The grid's density values are auto-registered as feature column
    ``"density"`` (sharing the grid's value buffer).  All geometry is
    returned in Angstrom regardless of the source convention.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    cur = _LineCursor(data)
    cur.next_line("first comment line")
    cur.next_line("second comment line")

    header = cur.fields("atom count and origin", 4)
    natoms = int(header[0])
    if natoms != header[0]:
        raise ParseError(f"atom count {header[0]} is not an integer", location="line 3")
    if natoms < 0:
        raise ParseError(
            "orbital cube files (negative atom count / DSET_IDS block) are not supported",
            location="line 3",
        )
    if len(header) >= 5 and int(header[4]) not in (0, 1):
        raise ParseError(
            f"cube files with {int(header[4])} values per point are not supported",
            location="line 3",
        )
    origin = np.array(header[1:4])

    counts = []
    basis = np.zeros((3, 3))
    for axis in range(3):
        vec = cur.fields(f"voxel vector {axis + 1}", 4)
        counts.append(int(vec[0]))
        basis[axis] = vec[1:4]
    if any(c == 0 for c in counts):
        raise ParseError(f"zero voxel count in header: {counts}")

    # Sign of the first count picks the unit convention for the whole header.
    angstrom_units = counts[0] < 0
    shape = tuple(abs(c) for c in counts)
    scale = 1.0 if angstrom_units else BOHR_TO_ANGSTROM
    origin = origin * scale
    basis = basis * scale

    numbers = np.zeros(natoms, dtype=np.int64)
    positions = np.zeros((natoms, 3))
    for i in range(natoms):
        atom = cur.fields(f"atom {i + 1}", 5)
        numbers[i] = int(atom[0])
        positions[i] = atom[2:5]
    positions *= scale
    elements = tuple(symbol_for_number(int(z)) for z in numbers)

    n_expected = shape[0] * shape[1] * shape[2]
    tail = data[cur.offset :]
    tokens = tail.split()
    if len(tokens) != n_expected:
        location = _value_section_mismatch(data, cur.offset, len(tokens), n_expected)
        raise ParseError(
            f"value section has {len(tokens)} values, grid needs {n_expected}",
            location=location,
        )
    try:
        values = np.array(tokens, dtype=np.float64)
    except ValueError:
        bad_at = _first_bad_token_offset(data, cur.offset)
        raise ParseError("non-numeric value in cube data section", location=bad_at) from None

    values.flags.writeable = False  # shared buffer: grid.values is the density column
    positions.flags.writeable = False
    features = FeatureTable(names=("density",), units=(None,), columns=(values,))
    grid = VolumetricGrid(
        origin=origin,
        basis=basis,
        shape=shape,
        values=features.column("density"),
        features=features,
    )
    frame = AtomFrame(positions=positions, elements=elements)
    return grid, frame


def _value_section_mismatch(data, section_start, n_found, n_expected):
    if n_found < n_expected:
        return f"input truncated at byte {len(data)}, value section starts at byte {section_start}"
    extra = n_expected  # index of the first surplus token
    for i, m in enumerate(re.finditer(rb"\S+", data[section_start:])):
        if i == extra:
            return f"unexpected extra data at byte {section_start + m.start()}"
    return f"byte {section_start}"


def _first_bad_token_offset(data, section_start):
    for m in re.finditer(rb"\S+", data[section_start:]):
        try:
            float(m.group(0))
        except ValueError:
            return f"byte {section_start + m.start()}"
    return f"byte {section_start}"


def write_cube(grid: VolumetricGrid, frame: AtomFrame, comment="") -> bytes:
    """Serialize a grid + frame back to cube bytes.

    Writes the Angstrom convention (negative voxel counts) with 17
    significant digits, so a parse -> write -> parse round trip is exact.
    """
    comment = (comment or "volumetric grid").splitlines()[0]
    out = io.StringIO()
    out.write(f"{comment}\n")
    out.write("written by featurescope (negative counts: Angstrom units)\n")
    ox, oy, oz = grid.origin
    out.write(f"{frame.n_atoms:5d} {ox:.16E} {oy:.16E} {oz:.16E}\n")
    for axis in range(3):
        bx, by, bz = grid.basis[axis]
        out.write(f"{-grid.shape[axis]:5d} {bx:.16E} {by:.16E} {bz:.16E}\n")
    numbers = frame.atomic_numbers
    for z, pos in zip(numbers, frame.positions):
        out.write(f"{z:5d} {0.0:.6f} {pos[0]:.16E} {pos[1]:.16E} {pos[2]:.16E}\n")
    values = grid.values
    for start in range(0, values.shape[0], 6):
        row = values[start : start + 6]
        out.write(" ".join(f"{v:.16E}" for v in row))
        out.write("\n")
    return out.getvalue().encode("ascii")
