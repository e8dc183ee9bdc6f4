"""featurescope: linked 2D/3D exploration of per-atom and per-voxel features.

The engine pools features from many atomic systems into flat columns,
computes plot products (2D histograms, correlation matrices, PCA
projections) over the pool, and maintains a shared selection state so a
brush drawn on any feature plot highlights the matching atoms or density
voxels in every system.
"""

from .errors import (
    CatalogError,
    CompatibilityError,
    DegeneracyError,
    DegenerateFieldError,
    DimensionError,
    EngineError,
    InsufficientDataError,
    LoadError,
    ParseError,
    RangeError,
    SchemaError,
    ShapeError,
    UnsupportedVersionError,
    WriteError,
)
from .model import (
    ATOMS,
    DATA_KINDS,
    VOXELS,
    AtomFrame,
    BondList,
    Cell,
    EncodingSpec,
    FeatureTable,
    SystemCollection,
    SystemRecord,
    VolumetricGrid,
    infer_bonds,
)

__version__ = "0.1.0"

__all__ = [
    "ATOMS",
    "AtomFrame",
    "BondList",
    "CatalogError",
    "Cell",
    "CompatibilityError",
    "DATA_KINDS",
    "DegeneracyError",
    "DegenerateFieldError",
    "DimensionError",
    "EncodingSpec",
    "EngineError",
    "FeatureTable",
    "InsufficientDataError",
    "LoadError",
    "ParseError",
    "RangeError",
    "SchemaError",
    "ShapeError",
    "SystemCollection",
    "SystemRecord",
    "UnsupportedVersionError",
    "VOXELS",
    "VolumetricGrid",
    "WriteError",
    "infer_bonds",
]
