"""GeoTIFF reading and writing on top of tifffile.

Handles the small set of GeoTIFF tags this pipeline needs: pixel scale,
tiepoint (or a north-up model transformation), an EPSG code in the GeoKey
directory, the GDAL nodata convention, and per-band descriptions carried as
GDAL metadata XML. Band dates, when present, live in a sidecar JSON file
`{path}.bands.json` holding the ordered names and ISO-8601 dates.
"""

from __future__ import annotations

import datetime
import json
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import tifffile

from .errors import GeoreferencingError, RasterFormatError
from .geometry import GridGeometry
from .raster import DEFAULT_NODATA, Raster

TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_MODEL_TRANSFORMATION = 34264
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GDAL_METADATA = 42112
TAG_GDAL_NODATA = 42113

KEY_MODEL_TYPE = 1024
KEY_RASTER_TYPE = 1025
KEY_GEOGRAPHIC_CRS = 2048
KEY_PROJECTED_CRS = 3072

SOFTWARE_TAG = "fieldpipe"


class GeoTiffData(NamedTuple):
    """Raw contents of a georeferenced TIFF file."""

    data: np.ndarray  # (bands, height, width)
    geometry: GridGeometry
    nodata: float | None
    band_names: tuple[str, ...] | None
    dates: tuple[datetime.date, ...] | None


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".bands.json")


def _format_nodata(nodata: float) -> str:
    value = float(nodata)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _geokey_directory(crs_code: int) -> tuple[int, ...]:
    # EPSG 4000-4999 is the geographic CRS block; everything else projected.
    if 4000 <= crs_code < 5000:
        crs_key = KEY_GEOGRAPHIC_CRS
        model_type = 2
    else:
        crs_key = KEY_PROJECTED_CRS
        model_type = 1
    keys = [
        (KEY_MODEL_TYPE, 0, 1, model_type),
        (KEY_RASTER_TYPE, 0, 1, 1),  # PixelIsArea
        (crs_key, 0, 1, crs_code),
    ]
    directory = [1, 1, 0, len(keys)]
    for entry in keys:
        directory.extend(entry)
    return tuple(directory)


def _band_metadata_xml(band_names: Sequence[str]) -> str:
    root = ET.Element("GDALMetadata")
    for i, name in enumerate(band_names):
        item = ET.SubElement(
            root, "Item", name="DESCRIPTION", sample=str(i), role="description"
        )
        item.text = name
    return ET.tostring(root, encoding="unicode")


def write_geotiff(
    path: str | Path,
    data: np.ndarray,
    geometry: GridGeometry,
    nodata: float,
    band_names: Sequence[str] | None = None,
    dates: Sequence[datetime.date] | None = None,
) -> None:
    """Write a (bands, height, width) or (height, width) array as GeoTIFF.

    float arrays are stored as float32, uint8 arrays stay uint8. When dates
    are given a sidecar `{path}.bands.json` records names and dates so they
    survive containers that drop the metadata XML.
    """
    path = Path(path)
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[np.newaxis]
    if data.ndim != 3:
        raise RasterFormatError(f"raster data must be 2-D or 3-D, got shape {data.shape}")
    if data.shape[1:] != geometry.shape:
        raise RasterFormatError(
            f"data shape {data.shape[1:]} does not match grid {geometry.shape}"
        )
    if data.dtype != np.uint8:
        data = data.astype(np.float32, copy=False)

    geokeys = _geokey_directory(geometry.crs_code)
    extratags = [
        (TAG_MODEL_PIXEL_SCALE, "d", 3, (geometry.pixel_size, geometry.pixel_size, 0.0)),
        (TAG_MODEL_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, geometry.origin_x, geometry.origin_y, 0.0)),
        (TAG_GEO_KEY_DIRECTORY, "H", len(geokeys), geokeys),
        (TAG_GDAL_NODATA, "s", 0, _format_nodata(nodata)),
    ]
    if band_names is not None:
        if len(band_names) != data.shape[0]:
            raise RasterFormatError(
                f"{len(band_names)} band names for {data.shape[0]} bands"
            )
        extratags.append((TAG_GDAL_METADATA, "s", 0, _band_metadata_xml(band_names)))

    path.parent.mkdir(parents=True, exist_ok=True)
    squeeze = data.shape[0] == 1
    with tifffile.TiffWriter(path) as writer:
        writer.write(
            data[0] if squeeze else data,
            photometric="minisblack",
            planarconfig=None if squeeze else "separate",
            extratags=extratags,
            software=SOFTWARE_TAG,
        )

    if dates is not None:
        if len(dates) != data.shape[0]:
            raise RasterFormatError(f"{len(dates)} dates for {data.shape[0]} bands")
        sidecar = {
            "names": list(band_names) if band_names is not None else None,
            "dates": [d.isoformat() for d in dates],
        }
        _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")
    else:
        # A stale sidecar from a previous write would mislabel the new bands.
        _sidecar_path(path).unlink(missing_ok=True)


def _parse_geometry(page: "tifffile.TiffPage", width: int, height: int) -> GridGeometry:
    scale_tag = page.tags.get(TAG_MODEL_PIXEL_SCALE)
    tiepoint_tag = page.tags.get(TAG_MODEL_TIEPOINT)
    transform_tag = page.tags.get(TAG_MODEL_TRANSFORMATION)

    if scale_tag is not None and tiepoint_tag is not None:
        scale = scale_tag.value
        tiepoint = tiepoint_tag.value
        sx, sy = float(scale[0]), float(scale[1])
        if len(tiepoint) < 6 or tuple(tiepoint[:3]) != (0.0, 0.0, 0.0):
            raise GeoreferencingError(
                f"unsupported tiepoint {tiepoint}; expected raster point (0,0,0)"
            )
        origin_x, origin_y = float(tiepoint[3]), float(tiepoint[4])
    elif transform_tag is not None:
        m = transform_tag.value
        if len(m) != 16 or m[1] != 0 or m[4] != 0:
            raise GeoreferencingError("rotated or sheared model transformation not supported")
        sx, sy = float(m[0]), -float(m[5])
        origin_x, origin_y = float(m[3]), float(m[7])
    else:
        raise GeoreferencingError("no pixel scale / tiepoint / model transformation tags")

    if sx <= 0 or sy <= 0:
        raise GeoreferencingError(f"pixel scale must be positive, got ({sx}, {sy})")
    if abs(sx - sy) > 1e-9 * max(sx, sy):
        raise GeoreferencingError(f"non-square pixels not supported: ({sx}, {sy})")

    directory = page.tags.get(TAG_GEO_KEY_DIRECTORY)
    if directory is None:
        raise GeoreferencingError("no GeoKey directory; coordinate system unknown")
    keys = tuple(directory.value)
    crs_code = None
    for i in range(4, len(keys) - 3, 4):
        key_id, location, _count, value = keys[i : i + 4]
        if key_id in (KEY_PROJECTED_CRS, KEY_GEOGRAPHIC_CRS) and location == 0:
            crs_code = int(value)
    if crs_code is None:
        raise GeoreferencingError("GeoKey directory carries no EPSG code")

    return GridGeometry(origin_x, origin_y, sx, width, height, crs_code)


def _parse_band_names(page: "tifffile.TiffPage", count: int) -> tuple[str, ...] | None:
    tag = page.tags.get(TAG_GDAL_METADATA)
    if tag is None:
        return None
    try:
        root = ET.fromstring(tag.value)
    except ET.ParseError:
        return None
    names: dict[int, str] = {}
    for item in root.iter("Item"):
        if item.get("role") == "description":
            names[int(item.get("sample", "0"))] = item.text or ""
    if len(names) != count:
        return None
    return tuple(names[i] for i in range(count))


def read_geotiff(path: str | Path) -> GeoTiffData:
    """Read a georeferenced TIFF into a (bands, height, width) array plus metadata."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such raster file: {path}")
    try:
        with tifffile.TiffFile(path) as tif:
            series = tif.series[0]
            data = series.asarray()
            axes = series.axes
            page = tif.pages[0]
            nodata_tag = page.tags.get(TAG_GDAL_NODATA)
            nodata = float(nodata_tag.value) if nodata_tag is not None else None
            if axes in ("YX", "XY"):
                data = data[np.newaxis]
            elif axes == "SYX":
                pass
            elif axes == "YXS":
                data = np.moveaxis(data, -1, 0)
            else:
                raise RasterFormatError(f"unsupported TIFF layout with axes {axes!r}")
            geometry = _parse_geometry(page, width=data.shape[2], height=data.shape[1])
            band_names = _parse_band_names(page, data.shape[0])
    except tifffile.TiffFileError as exc:
        raise RasterFormatError(f"{path} is not a readable TIFF: {exc}") from exc

    dates = None
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
        except json.JSONDecodeError as exc:
            raise RasterFormatError(f"malformed band sidecar {sidecar}: {exc}") from exc
        if meta.get("names"):
            if len(meta["names"]) != data.shape[0]:
                raise RasterFormatError(
                    f"sidecar {sidecar} lists {len(meta['names'])} names "
                    f"for {data.shape[0]} bands"
                )
            band_names = tuple(meta["names"])
        if meta.get("dates"):
            dates = tuple(datetime.date.fromisoformat(d) for d in meta["dates"])

    return GeoTiffData(data, geometry, nodata, band_names, dates)


def read_raster(path: str | Path) -> Raster:
    """Read a GeoTIFF as a float32 Raster.

    Integer samples are converted to floating point; missing band names fall
    back to band_1..band_n and a missing nodata tag to the package default.
    """
    raw = read_geotiff(path)
    names = raw.band_names or tuple(f"band_{i + 1}" for i in range(raw.data.shape[0]))
    nodata = DEFAULT_NODATA if raw.nodata is None else raw.nodata
    return Raster(raw.geometry, raw.data.astype(np.float32), names, nodata)


def write_raster(
    raster: Raster,
    path: str | Path,
    dates: Sequence[datetime.date] | None = None,
) -> None:
    """Write a Raster so read_raster reproduces it bit-exactly."""
    write_geotiff(
        path,
        raster.data,
        raster.geometry,
        raster.nodata,
        band_names=raster.band_names,
        dates=dates,
    )


def read_dates(path: str | Path) -> tuple[datetime.date, ...] | None:
    """Band dates recorded alongside a raster, if any."""
    return read_geotiff(path).dates
