"""Three-class training masks rasterized from parcel vectors.

Codes are fixed: 0 non-crop, 1 field interior, 2 field boundary; 255 marks
pixels outside the defined extent. Classification is by pixel-center point
test with precedence boundary > interior > non-crop, which keeps the result
deterministic and independent of parcel order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely
from shapely.ops import unary_union
from shapely.strtree import STRtree

from .errors import CrsMismatchError, MaskCodeError
from .geometry import GridGeometry
from .geotiff import read_geotiff, write_geotiff
from .parcels import ParcelSet, buffer_boundaries, polygons_to_boundaries

log = logging.getLogger(__name__)

NON_CROP = 0
INTERIOR = 1
BOUNDARY = 2
MASK_NODATA = 255

_VALID_CODES = frozenset((NON_CROP, INTERIOR, BOUNDARY, MASK_NODATA))


@dataclass(frozen=True)
class ClassMask:
    """Single-band uint8 raster of class codes over a grid."""

    geometry: GridGeometry
    codes: np.ndarray  # (height, width) uint8, read-only

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.uint8)
        if codes.shape != self.geometry.shape:
            raise MaskCodeError(
                f"mask shape {codes.shape} does not match grid {self.geometry.shape}"
            )
        present = set(np.unique(codes).tolist())
        if not present <= _VALID_CODES:
            raise MaskCodeError(f"mask holds invalid codes {sorted(present - _VALID_CODES)}")
        codes = np.ascontiguousarray(codes)
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    def window(self, col_off: int, row_off: int, size: int) -> "ClassMask":
        """Crop to a square window; the origin shifts with the window."""
        return ClassMask(
            self.geometry.window(col_off, row_off, size, size),
            self.codes[row_off : row_off + size, col_off : col_off + size],
        )


def _warn_on_interior_overlap(parcels: ParcelSet) -> None:
    crop = parcels.crop_parcels()
    if len(crop) < 2:
        return
    tree = STRtree([p.polygon for p in crop])
    seen = set()
    for i, parcel in enumerate(crop):
        for j in tree.query(parcel.polygon, predicate="intersects"):
            j = int(j)
            if j == i or (min(i, j), max(i, j)) in seen:
                continue
            seen.add((min(i, j), max(i, j)))
            overlap = parcel.polygon.intersection(crop[j].polygon)
            if overlap.area > 0:
                log.warning(
                    "parcels %d and %d overlap by %.1f m2; overlap resolves to interior",
                    parcel.id, crop[j].id, overlap.area,
                )


def build_class_mask(
    parcels: ParcelSet, geometry: GridGeometry, half_width: float
) -> ClassMask:
    """Rasterize parcels to the 3-class mask at the given grid.

    A pixel is code 2 when its center lies in the buffered outline corridor,
    else 1 when it lies inside a crop parcel, else 0. Non-crop parcels
    contribute neither interiors nor boundaries.
    """
    if parcels.crs_code != geometry.crs_code:
        raise CrsMismatchError(
            f"parcels are EPSG:{parcels.crs_code}, grid is EPSG:{geometry.crs_code}"
        )
    _warn_on_interior_overlap(parcels)

    codes = np.zeros(geometry.shape, dtype=np.uint8)
    crop_polygons = [p.polygon for p in parcels.crop_parcels()]
    if crop_polygons:
        xs, ys = np.meshgrid(geometry.center_xs(), geometry.center_ys())
        interior = unary_union(crop_polygons)
        band = buffer_boundaries(polygons_to_boundaries(parcels), half_width).geometry
        shapely.prepare(interior)
        shapely.prepare(band)
        codes[shapely.contains_xy(interior, xs, ys)] = INTERIOR
        codes[shapely.contains_xy(band, xs, ys)] = BOUNDARY
    return ClassMask(geometry, codes)


def write_class_mask(mask: ClassMask, path: str | Path) -> None:
    """Write as single-band 8-bit GeoTIFF with nodata 255."""
    write_geotiff(path, mask.codes, mask.geometry, nodata=MASK_NODATA, band_names=("class",))


def read_class_mask(path: str | Path) -> ClassMask:
    raw = read_geotiff(path)
    if raw.data.shape[0] != 1:
        raise MaskCodeError(f"{path} has {raw.data.shape[0]} bands, expected 1")
    codes = raw.data[0]
    if codes.dtype != np.uint8:
        as_int = codes.astype(np.uint8)
        if not np.array_equal(as_int, codes):
            raise MaskCodeError(f"{path} holds non-uint8 class codes")
        codes = as_int
    return ClassMask(raw.geometry, codes)
