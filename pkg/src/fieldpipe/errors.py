"""Exception hierarchy for the fieldpipe package.

Every externally visible failure mode gets its own class so callers can
distinguish e.g. a missing coordinate system from a corrupt file without
parsing messages.
"""


class FieldpipeError(Exception):
    """Base class for all fieldpipe errors."""


class RasterFormatError(FieldpipeError):
    """File is not a readable raster (corrupt, unsupported encoding, bad dtype)."""


class GeoreferencingError(FieldpipeError):
    """Raster lacks a usable geotransform or coordinate system."""


class GeometryMismatchError(FieldpipeError):
    """Grids or arrays that must align do not (size, origin, pixel size)."""


class BandLayoutError(FieldpipeError):
    """Band count, order or naming does not match what the operation requires."""


class CrsMismatchError(FieldpipeError):
    """Inputs carry different coordinate reference systems."""


class VectorFormatError(FieldpipeError):
    """Vector file is unreadable or not a GeoJSON FeatureCollection."""


class UnknownAttributeError(FieldpipeError):
    """The crop attribute rule names an attribute absent from the features."""


class NoParcelsError(FieldpipeError):
    """Parcel ingest produced zero valid parcels."""


class MaskCodeError(FieldpipeError):
    """A class mask holds values outside {0, 1, 2, 255}."""


class WindowError(FieldpipeError):
    """A tile window does not lie inside its source raster."""


class SplitError(FieldpipeError):
    """Split fractions are invalid or a split received no location cells."""


class ManifestError(FieldpipeError):
    """Tile manifest is malformed or violates its invariants."""


class ManifestSchemaError(ManifestError):
    """Tile manifest declares an unsupported schema version."""


class PredictionError(FieldpipeError):
    """Prediction rasters are missing or violate probability constraints."""


class ConfigError(FieldpipeError):
    """Pipeline configuration file is invalid."""
