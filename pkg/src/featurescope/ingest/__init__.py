"""Readers and writers for on-disk formats."""

from .cube import BOHR_TO_ANGSTROM, parse_cube, write_cube
from .extxyz import parse_extxyz
from .feature_csv import parse_feature_csv
from .manifest import Manifest, ManifestEntry, load_manifest, parse_manifest

__all__ = [
    "BOHR_TO_ANGSTROM",
    "Manifest",
    "ManifestEntry",
    "load_manifest",
    "parse_cube",
    "parse_extxyz",
    "parse_feature_csv",
    "parse_manifest",
    "write_cube",
]
