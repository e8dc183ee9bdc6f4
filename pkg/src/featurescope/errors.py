"""Exception types shared across the engine.

Every error raised by the public API derives from ``EngineError`` so callers
(CLI, HTTP layer) can map failures to diagnostics uniformly.
"""


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "engine_error"


class RangeError(EngineError, IndexError):
    """An index or layer selection falls outside its valid range."""

    code = "range_error"


class CatalogError(EngineError, KeyError):
    """An element symbol or atomic number is missing from the radius catalog."""

    code = "catalog_error"

    def __str__(self):  # KeyError quotes its repr; keep the plain message
        return self.args[0] if self.args else ""


class ParseError(EngineError, ValueError):
    """A file does not follow its declared format.

    ``location`` carries a human-readable position (line number or byte
    offset) when one is known.
    """

    code = "parse_error"

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} ({location})"
        super().__init__(message)
        self.location = location


class ShapeError(EngineError, ValueError):
    """Row or element counts disagree with what the contract requires."""

    code = "shape_error"


class SchemaError(EngineError, ValueError):
    """Column names are missing, duplicated, or inconsistent."""

    code = "schema_error"


class LoadError(EngineError):
    """A manifest or one of its referenced files cannot be assembled."""

    code = "load_error"


class DegenerateFieldError(EngineError, ValueError):
    """A scalar field has no mass to sample from."""

    code = "degenerate_field_error"


class DimensionError(EngineError, ValueError):
    """A requested dimensionality exceeds what the data provides."""

    code = "dimension_error"


class DegeneracyError(EngineError, ValueError):
    """A zero-variance column makes the requested computation undefined."""

    code = "degeneracy_error"


class InsufficientDataError(EngineError, ValueError):
    """Too few usable rows for the requested fit."""

    code = "insufficient_data_error"


class CompatibilityError(EngineError):
    """A saved document references data the current collection cannot satisfy."""

    code = "compatibility_error"


class UnsupportedVersionError(CompatibilityError):
    """A document declares a format version newer than this build supports."""

    code = "unsupported_version_error"


class WriteError(EngineError, OSError):
    """An export destination could not be written."""

    code = "write_error"
