"""Shared builders for synthetic fixtures: GeoJSON files and parcel layouts."""

import json

import numpy as np

from fieldpipe.geometry import GridGeometry


def feature(geom_type, coords, **props):
    return {
        "type": "Feature",
        "geometry": {"type": geom_type, "coordinates": coords},
        "properties": props,
    }


def square_coords(x0, y0, side):
    x1, y1 = x0 + side, y0 + side
    return [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]


def write_geojson(path, features, crs_code=None):
    doc = {"type": "FeatureCollection", "features": features}
    if crs_code is not None:
        doc["crs"] = {
            "type": "name",
            "properties": {"name": f"urn:ogc:def:crs:EPSG::{crs_code}"},
        }
    path.write_text(json.dumps(doc))
    return path


def rect_ring(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


def l_shape_ring(x0, y0, x1, y1, notch_w, notch_h):
    """Rectangle with its top-right corner notched out; 6 distinct vertices."""
    return [
        [x0, y0],
        [x1, y0],
        [x1, y1 - notch_h],
        [x1 - notch_w, y1 - notch_h],
        [x1 - notch_w, y1],
        [x0, y1],
        [x0, y0],
    ]


def random_parcel_features(rng, extent, max_parcels=10, crop_ratio=0.8):
    """Random integer-coordinate rectangle / L-shape parcels inside extent.

    Integer vertices keep every pixel center (at half-integer coordinates on a
    unit grid) strictly off parcel edges, so exact point-in-polygon oracles
    can't disagree with the implementation about on-edge pixels.
    """
    features = []
    for _ in range(rng.integers(1, max_parcels + 1)):
        w = int(rng.integers(3, max(4, extent // 2)))
        h = int(rng.integers(3, max(4, extent // 2)))
        x0 = int(rng.integers(0, extent - w + 1))
        y0 = int(rng.integers(0, extent - h + 1))
        if rng.random() < 0.5 and w >= 3 and h >= 3:
            notch_w = int(rng.integers(1, w - 1))
            notch_h = int(rng.integers(1, h - 1))
            ring = l_shape_ring(x0, y0, x0 + w, y0 + h, notch_w, notch_h)
        else:
            ring = rect_ring(x0, y0, x0 + w, y0 + h)
        crop = bool(rng.random() < crop_ratio)
        features.append(feature("Polygon", [ring], crop="yes" if crop else "no"))
    return features


def unit_grid(extent, crs_code=32633):
    """extent x extent pixel grid, pixel size 1, origin at (0, extent)."""
    return GridGeometry(
        origin_x=0.0,
        origin_y=float(extent),
        pixel_size=1.0,
        width=extent,
        height=extent,
        crs_code=crs_code,
    )


def checkerboard(shape, period=2):
    rows, cols = np.indices(shape)
    return ((rows // period + cols // period) % 2).astype(np.uint8)
