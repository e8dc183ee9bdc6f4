"""Manifest: a JSON document describing a multi-system session.

Schema (version 1), documented in ``docs/manifest.md``:

    {
      "manifest_version": 1,
      "systems": [
        {
          "system_id": "co2",
          "atoms_file": "co2.extxyz",        # optional, extended-XYZ
          "volumetric_file": "co2.cube",     # optional, Gaussian cube
          "atom_features": "co2_atoms.csv",  # optional sidecar per kind
          "voxel_features": "co2_vox.csv",
          "units": {"density": "e/A^3"},     # optional, by column name
          "frame_index": 0,                  # required for multi-frame xyz
          "use_cube_atoms": true             # default true
        }
      ]
    }

Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import (
    EngineError,
    LoadError,
    ParseError,
    SchemaError,
    ShapeError,
    UnsupportedVersionError,
)
from ..model import AtomFrame, FeatureTable, SystemCollection, SystemRecord, VolumetricGrid
from .cube import parse_cube
from .extxyz import parse_extxyz
from .feature_csv import parse_feature_csv

MANIFEST_VERSION = 1

_ENTRY_KEYS = {
    "system_id",
    "atoms_file",
    "volumetric_file",
    "atom_features",
    "voxel_features",
    "units",
    "frame_index",
    "use_cube_atoms",
}


@dataclass(frozen=True)
class ManifestEntry:
    system_id: str
    atoms_file: str | None = None
    volumetric_file: str | None = None
    atom_features: str | None = None
    voxel_features: str | None = None
    units: dict = dataclasses.field(default_factory=dict)
    frame_index: int | None = None
    use_cube_atoms: bool = True


@dataclass(frozen=True)
class Manifest:
    version: int
    entries: tuple[ManifestEntry, ...]
    base_dir: Path


def parse_manifest(doc, base_dir=".") -> Manifest:
    """Validate a decoded manifest document."""
    if not isinstance(doc, dict):
        raise LoadError("manifest must be a JSON object")
    version = doc.get("manifest_version")
    if version is None:
        raise LoadError("manifest is missing the required manifest_version field")
    if version != MANIFEST_VERSION:
        raise UnsupportedVersionError(
            f"manifest_version {version} is not supported (this build reads version {MANIFEST_VERSION})"
        )
    systems = doc.get("systems")
    if not isinstance(systems, list) or not systems:
        raise LoadError("manifest must declare a non-empty systems list")
    entries = []
    for i, raw in enumerate(systems):
        if not isinstance(raw, dict):
            raise LoadError(f"systems[{i}] must be an object")
        unknown = set(raw) - _ENTRY_KEYS
        if unknown:
            raise LoadError(f"systems[{i}] has unknown keys: {sorted(unknown)}")
        system_id = raw.get("system_id")
        if not system_id or not isinstance(system_id, str):
            raise LoadError(f"systems[{i}] needs a non-empty string system_id")
        entry = ManifestEntry(
            system_id=system_id,
            atoms_file=raw.get("atoms_file"),
            volumetric_file=raw.get("volumetric_file"),
            atom_features=raw.get("atom_features"),
            voxel_features=raw.get("voxel_features"),
            units=raw.get("units") or {},
            frame_index=raw.get("frame_index"),
            use_cube_atoms=raw.get("use_cube_atoms", True),
        )
        if entry.atoms_file is None and entry.volumetric_file is None:
            raise LoadError(
                f"system {system_id!r} has no data source (needs atoms_file and/or volumetric_file)"
            )
        if entry.atom_features and not (entry.atoms_file or entry.volumetric_file):
            raise LoadError(f"system {system_id!r} has an atom sidecar but no atoms source")
        if entry.voxel_features and not entry.volumetric_file:
            raise LoadError(f"system {system_id!r} has a voxel sidecar but no volumetric file")
        entries.append(entry)
    return Manifest(version=version, entries=tuple(entries), base_dir=Path(base_dir))


def _read(path: Path, system_id, what):
    try:
        return path.read_bytes()
    except OSError as exc:
        raise LoadError(f"system {system_id!r}: cannot read {what} {str(path)!r}: {exc}")


def _merge_sidecar(table: FeatureTable, sidecar: FeatureTable, system_id, kind):
    collisions = sorted(set(table.names) & set(sidecar.names))
    if collisions:
        raise LoadError(
            f"system {system_id!r}: {kind} sidecar columns collide with built-in columns: {collisions}"
        )
    return FeatureTable(
        names=table.names + sidecar.names,
        units=table.units + sidecar.units,
        columns=table.columns + sidecar.columns,
    )


def _apply_units(table: FeatureTable, units: dict):
    if not units or not table.names:
        return table
    new_units = tuple(units.get(n, u) for n, u in zip(table.names, table.units))
    if new_units == table.units:
        return table
    return FeatureTable(names=table.names, units=new_units, columns=table.columns)


def _load_entry(entry: ManifestEntry, base_dir: Path) -> SystemRecord:
    sid = entry.system_id
    atoms = None
    grid = None
    if entry.volumetric_file:
        path = base_dir / entry.volumetric_file
        try:
            grid, cube_atoms = parse_cube(_read(path, sid, "volumetric file"))
        except ParseError as exc:
            raise LoadError(f"system {sid!r}: {path.name}: {exc}") from exc
        if entry.use_cube_atoms:
            atoms = cube_atoms
    if entry.atoms_file:
        path = base_dir / entry.atoms_file
        try:
            frames = parse_extxyz(_read(path, sid, "atoms file"))
        except ParseError as exc:
            raise LoadError(f"system {sid!r}: {path.name}: {exc}") from exc
        if not frames:
            raise LoadError(f"system {sid!r}: {path.name} contains no frames")
        index = entry.frame_index
        if index is None:
            if len(frames) > 1:
                raise LoadError(
                    f"system {sid!r}: {path.name} has {len(frames)} frames; "
                    "set frame_index to choose one (trajectories are not supported)"
                )
            index = 0
        if not 0 <= index < len(frames):
            raise LoadError(
                f"system {sid!r}: frame_index {index} out of range for {len(frames)} frames"
            )
        atoms = frames[index]

    if entry.atom_features and atoms is not None:
        path = base_dir / entry.atom_features
        try:
            sidecar = parse_feature_csv(_read(path, sid, "atom sidecar"), atoms.n_atoms)
        except (ParseError, SchemaError, ShapeError) as exc:
            raise LoadError(f"system {sid!r}: {path.name}: {exc}") from exc
        atoms = dataclasses.replace(
            atoms, features=_merge_sidecar(atoms.features, sidecar, sid, "atom")
        )
    if entry.voxel_features and grid is not None:
        path = base_dir / entry.voxel_features
        try:
            sidecar = parse_feature_csv(_read(path, sid, "voxel sidecar"), grid.n_voxels)
        except (ParseError, SchemaError, ShapeError) as exc:
            raise LoadError(f"system {sid!r}: {path.name}: {exc}") from exc
        grid = dataclasses.replace(
            grid, features=_merge_sidecar(grid.features, sidecar, sid, "voxel")
        )

    if atoms is not None and entry.units:
        atoms = dataclasses.replace(atoms, features=_apply_units(atoms.features, entry.units))
    if grid is not None and entry.units:
        grid = dataclasses.replace(grid, features=_apply_units(grid.features, entry.units))
    return SystemRecord(system_id=sid, atoms=atoms, grid=grid)


def load_manifest(path) -> SystemCollection:
    """Load a manifest file and assemble the full SystemCollection."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise LoadError(f"cannot read manifest {str(path)!r}: {exc}")
    except json.JSONDecodeError as exc:
        raise LoadError(f"manifest {str(path)!r} is not valid JSON: {exc}")
    manifest = parse_manifest(doc, base_dir=path.parent)
    records = [_load_entry(entry, manifest.base_dir) for entry in manifest.entries]
    try:
        return SystemCollection(records)
    except SchemaError as exc:
        raise LoadError(str(exc)) from exc
