"""Multi-band raster model plus NDVI computation, median compositing and
multi-date stacking.

Bands are 2-D float32 arrays; a raster stores them as one (bands, height,
width) block together with its grid geometry, ordered band names and a
nodata sentinel. All arrays are frozen after construction so rasters can be
shared freely between threads.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BandLayoutError, GeometryMismatchError
from .geometry import GridGeometry, require_same_geometry

DEFAULT_NODATA = -9999.0

# Band order expected of every single-date scene fed to stack_bands.
SCENE_BAND_NAMES = ("R", "G", "B", "NIR")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def invalid_mask(values: np.ndarray, nodata: float) -> np.ndarray:
    """Boolean mask of nodata samples; a NaN sentinel matches NaN samples."""
    if np.isnan(nodata):
        return np.isnan(values)
    return values == nodata


@dataclass(frozen=True)
class Raster:
    """Georeferenced stack of equally sized float32 bands."""

    geometry: GridGeometry
    data: np.ndarray  # (bands, height, width) float32, read-only
    band_names: tuple[str, ...]
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[np.newaxis, :, :]
        if data.ndim != 3:
            raise BandLayoutError(f"raster data must be 2-D or 3-D, got shape {data.shape}")
        if data.shape[1:] != self.geometry.shape:
            raise GeometryMismatchError(
                f"band shape {data.shape[1:]} does not match grid {self.geometry.shape}"
            )
        data = _freeze(data.astype(np.float32, copy=False))
        object.__setattr__(self, "data", data)
        names = tuple(self.band_names)
        if len(names) != data.shape[0]:
            raise BandLayoutError(
                f"{len(names)} band names for {data.shape[0]} bands"
            )
        if len(set(names)) != len(names):
            raise BandLayoutError(f"band names not unique: {names}")
        object.__setattr__(self, "band_names", names)

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    def band(self, key: int | str) -> np.ndarray:
        """One band as a read-only 2-D array, by index or name."""
        if isinstance(key, str):
            try:
                key = self.band_names.index(key)
            except ValueError:
                raise BandLayoutError(f"no band named {key!r}; have {self.band_names}") from None
        return self.data[key]

    def valid_mask(self) -> np.ndarray:
        """True where every band holds a valid (non-nodata) sample."""
        return ~invalid_mask(self.data, self.nodata).any(axis=0)


@dataclass(frozen=True)
class NdviStack:
    """Three-date NDVI raster with bands in ascending date order."""

    raster: Raster
    dates: tuple[datetime.date, datetime.date, datetime.date] = field()

    def __post_init__(self):
        if self.raster.band_count != 3:
            raise BandLayoutError(f"NDVI stack needs exactly 3 bands, got {self.raster.band_count}")
        dates = tuple(self.dates)
        if len(dates) != 3:
            raise BandLayoutError(f"NDVI stack needs exactly 3 dates, got {len(dates)}")
        if not (dates[0] < dates[1] < dates[2]):
            raise ValueError(f"stack dates must be strictly ascending, got {dates}")
        object.__setattr__(self, "dates", dates)
        bad = invalid_mask(self.raster.data, self.raster.nodata)
        values = self.raster.data[~bad]
        if values.size and (values.min() < -1.0 or values.max() > 1.0):
            raise ValueError(
                f"NDVI values outside [-1, 1]: min {values.min()}, max {values.max()}"
            )


def compute_ndvi(
    red: np.ndarray,
    nir: np.ndarray,
    nodata: float = DEFAULT_NODATA,
    scale: float = 1.0,
) -> np.ndarray:
    """Per-pixel (NIR - Red) / (NIR + Red) as float32.

    Pixels where either input is nodata, or where the denominator is zero,
    come out as nodata. `scale` divides both inputs first, for products that
    store scaled reflectance (e.g. 10000 for scaled-SR imagery); NDVI itself
    is invariant to the scaling.
    """
    red = np.asarray(red, dtype=np.float64)
    nir = np.asarray(nir, dtype=np.float64)
    if red.shape != nir.shape:
        raise GeometryMismatchError(f"red {red.shape} vs nir {nir.shape}")
    bad = invalid_mask(red, nodata) | invalid_mask(nir, nodata)
    if scale != 1.0:
        red = red / scale
        nir = nir / scale
    denom = nir + red
    bad |= denom == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ndvi = (nir - red) / denom
    ndvi = np.where(bad, nodata, ndvi)
    return ndvi.astype(np.float32)


def median_composite(scenes: Sequence[Raster]) -> Raster:
    """Per-pixel, per-band median over valid samples of co-registered scenes.

    Even counts take the mean of the two middle values. A pixel is nodata in
    the output only when it is nodata in every scene.
    """
    if not scenes:
        raise ValueError("median_composite needs at least one scene")
    first = scenes[0]
    for scene in scenes[1:]:
        require_same_geometry(first.geometry, scene.geometry, "median_composite")
        if scene.band_names != first.band_names:
            raise BandLayoutError(
                f"band layout differs: {scene.band_names} vs {first.band_names}"
            )
    stack = np.stack([s.data for s in scenes]).astype(np.float64)
    for scene, layer in zip(scenes, stack):
        layer[invalid_mask(layer, scene.nodata)] = np.nan
    with warnings.catch_warnings():
        # all-nodata pixels are expected; they come back NaN and get the sentinel
        warnings.simplefilter("ignore", RuntimeWarning)
        median = np.nanmedian(stack, axis=0)
    median = np.where(np.isnan(median), first.nodata, median)
    return Raster(first.geometry, median.astype(np.float32), first.band_names, first.nodata)


def stack_ndvi(
    ndvi_bands: Sequence[tuple[datetime.date, np.ndarray]],
    geometry: GridGeometry,
    nodata: float = DEFAULT_NODATA,
) -> NdviStack:
    """Assemble three date-tagged NDVI bands into an NdviStack.

    Bands are sorted by ascending date regardless of input order and named
    NDVI1..NDVI3.
    """
    if len(ndvi_bands) != 3:
        raise BandLayoutError(f"need exactly 3 dated NDVI bands, got {len(ndvi_bands)}")
    dates = [d for d, _ in ndvi_bands]
    if len(set(dates)) != 3:
        raise ValueError(f"stack dates must be distinct, got {dates}")
    for _, band in ndvi_bands:
        if np.asarray(band).shape != geometry.shape:
            raise GeometryMismatchError(
                f"band shape {np.asarray(band).shape} vs grid {geometry.shape}"
            )
    ordered = sorted(ndvi_bands, key=lambda pair: pair[0])
    data = np.stack([np.asarray(band, dtype=np.float32) for _, band in ordered])
    raster = Raster(geometry, data, ("NDVI1", "NDVI2", "NDVI3"), nodata)
    return NdviStack(raster, tuple(d for d, _ in ordered))


def stack_bands(dated_rasters: Sequence[tuple[datetime.date, Raster]]) -> Raster:
    """Stack three co-registered 4-band (R,G,B,NIR) scenes into one 12-band raster.

    Output bands are grouped per date in ascending order and named
    R1,G1,B1,NIR1,...,NIR3.
    """
    if len(dated_rasters) != 3:
        raise BandLayoutError(f"need exactly 3 dated scenes, got {len(dated_rasters)}")
    dates = [d for d, _ in dated_rasters]
    if len(set(dates)) != 3:
        raise ValueError(f"stack dates must be distinct, got {dates}")
    first = dated_rasters[0][1]
    for _, raster in dated_rasters:
        require_same_geometry(first.geometry, raster.geometry, "stack_bands")
        if raster.band_names != SCENE_BAND_NAMES:
            raise BandLayoutError(
                f"scene bands must be {SCENE_BAND_NAMES}, got {raster.band_names}"
            )
        if raster.nodata != first.nodata:
            raise BandLayoutError(
                f"scenes disagree on nodata: {raster.nodata} vs {first.nodata}"
            )
    ordered = sorted(dated_rasters, key=lambda pair: pair[0])
    data = np.concatenate([raster.data for _, raster in ordered])
    names = tuple(
        f"{band}{i + 1}" for i in range(3) for band in SCENE_BAND_NAMES
    )
    return Raster(first.geometry, data, names, first.nodata)
