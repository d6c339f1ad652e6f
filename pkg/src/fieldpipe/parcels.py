"""Land-parcel vector ingest and boundary-corridor construction.

Parcels arrive as GeoJSON FeatureCollections of polygons/multipolygons whose
properties carry a crop attribute. Invalid rings (open, too short,
self-intersecting) are rejected with their ids rather than repaired: silent
repair would hide label errors.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon
from shapely.ops import unary_union

from .errors import NoParcelsError, UnknownAttributeError, VectorFormatError

log = logging.getLogger(__name__)

CropRule = Callable[[dict], bool]


@dataclass(frozen=True)
class Parcel:
    """One polygon (exterior ring plus holes) with a crop/non-crop flag."""

    id: int
    polygon: Polygon
    crop_flag: bool


@dataclass(frozen=True)
class ParcelSet:
    """Validated parcels in one CRS, plus the ids rejected on ingest."""

    parcels: tuple[Parcel, ...]
    crs_code: int
    rejected: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        ids = [p.id for p in self.parcels]
        if len(set(ids)) != len(ids):
            raise ValueError("parcel ids not unique")

    def crop_parcels(self) -> list[Parcel]:
        return [p for p in self.parcels if p.crop_flag]


@dataclass(frozen=True)
class BoundaryBand:
    """Buffered corridor around parcel outlines at a per-side distance."""

    geometry: shapely.Geometry
    half_width: float


def parse_crop_rule(text: str) -> tuple[str, CropRule]:
    """Compile a rule string into (attribute name, properties predicate).

    Supported forms: `attr`, `attr == literal`, `attr != literal`,
    `attr in [lit, ...]`; literals are JSON (strings double-quoted) or
    single-quoted strings.
    """
    match = re.match(r"^\s*(\w+)\s*(?:(==|!=|\bin\b)\s*(.+?))?\s*$", text)
    if not match:
        raise ValueError(f"cannot parse crop rule {text!r}")
    attribute, op, literal_text = match.groups()

    def parse_literal(raw: str):
        raw = raw.strip()
        if len(raw) >= 2 and raw[0] == "'" and raw[-1] == "'":
            return raw[1:-1]
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            raise ValueError(f"bad literal {raw!r} in crop rule {text!r}") from None

    if op is None:
        predicate = lambda props: bool(props[attribute])
    elif op == "==":
        wanted = parse_literal(literal_text)
        predicate = lambda props: props[attribute] == wanted
    elif op == "!=":
        unwanted = parse_literal(literal_text)
        predicate = lambda props: props[attribute] != unwanted
    else:
        values = parse_literal(literal_text)
        if not isinstance(values, list):
            raise ValueError(f"'in' rule needs a list literal, got {literal_text!r}")
        allowed = set(values)
        predicate = lambda props: props[attribute] in allowed
    return attribute, predicate


def _parse_crs_code(doc: dict) -> int | None:
    crs = doc.get("crs")
    if not isinstance(crs, dict):
        return None
    name = crs.get("properties", {}).get("name", "")
    match = re.search(r"EPSG:*(\d+)$", str(name))
    return int(match.group(1)) if match else None


def _validate_rings(rings: list[list]) -> str | None:
    """Reason a GeoJSON polygon geometry is unacceptable, or None."""
    if not rings:
        return "no rings"
    for ring in rings:
        if len(ring) < 4:
            return f"ring has {len(ring)} vertices, need at least 4"
        if tuple(ring[0]) != tuple(ring[-1]):
            return "ring not closed (first vertex != last)"
    polygon = Polygon(rings[0], rings[1:])
    if not polygon.is_valid:
        return shapely.is_valid_reason(polygon)
    return None


def load_parcels(
    path: str | Path,
    crop_rule: str | CropRule,
    assume_crs: int | None = None,
) -> ParcelSet:
    """Load a GeoJSON parcel layer and flag crop parcels by attribute rule.

    Multipolygon features are split into one parcel per part. Parcels are
    numbered 1..n in file order (rejected geometries consume ids too, so
    reports stay stable). The CRS comes from the legacy `crs` member when
    present, else `assume_crs`, else 4326 as the GeoJSON default.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise VectorFormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise VectorFormatError(f"{path} is not a GeoJSON FeatureCollection")

    if isinstance(crop_rule, str):
        attribute, predicate = parse_crop_rule(crop_rule)
    else:
        attribute, predicate = None, crop_rule

    crs_code = _parse_crs_code(doc) or assume_crs or 4326

    parcels: list[Parcel] = []
    rejected: list[tuple[int, str]] = []
    next_id = 1
    for index, feature in enumerate(doc.get("features", [])):
        geometry = feature.get("geometry") or {}
        properties = feature.get("properties") or {}
        if attribute is not None and attribute not in properties:
            raise UnknownAttributeError(
                f"feature {index} has no attribute {attribute!r}; "
                f"available: {sorted(properties)}"
            )
        is_crop = bool(predicate(properties))

        gtype = geometry.get("type")
        if gtype == "Polygon":
            parts = [geometry.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            parts = geometry.get("coordinates", [])
        else:
            rejected.append((next_id, f"unsupported geometry type {gtype!r}"))
            next_id += 1
            continue

        for rings in parts:
            parcel_id = next_id
            next_id += 1
            reason = _validate_rings([list(map(tuple, ring)) for ring in rings])
            if reason is not None:
                rejected.append((parcel_id, reason))
                continue
            parcels.append(Parcel(parcel_id, Polygon(rings[0], rings[1:]), is_crop))

    for parcel_id, reason in rejected:
        log.warning("parcel %d rejected: %s", parcel_id, reason)
    if not parcels:
        raise NoParcelsError(f"{path} yielded zero valid parcels")
    return ParcelSet(tuple(parcels), crs_code, tuple(rejected))


def polygons_to_boundaries(parcels: ParcelSet) -> list[np.ndarray]:
    """Closed outline polylines of every crop-flagged parcel.

    One polyline per ring, exterior then interiors, vertex order preserved;
    each is an (n, 2) array whose first and last vertices coincide.
    """
    lines = []
    for parcel in parcels.crop_parcels():
        rings = [parcel.polygon.exterior, *parcel.polygon.interiors]
        for ring in rings:
            lines.append(np.asarray(ring.coords, dtype=float))
    return lines


def buffer_boundaries(lines: Sequence[np.ndarray], half_width: float) -> BoundaryBand:
    """Planar buffer of the outlines at a per-side distance, unioned.

    Round joins and caps, approximated with 8 segments per quarter circle.
    """
    if half_width <= 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    buffered = [
        LineString(line).buffer(half_width, quad_segs=8) for line in lines
    ]
    geometry = unary_union(buffered) if buffered else Polygon()
    return BoundaryBand(geometry, half_width)
