"""From per-pixel class probabilities to clean field polygons and size stats.

The chain runs in a fixed order: argmax decode, morphological closing of the
boundary class, component-fair expansion of field interiors, pixel-edge
polygonization, Douglas-Peucker simplification, and sliver elimination.
Expansion reclaims the area the boundary band consumed during labelling: each
interior component grows by up to expand_px, but never into a pixel that is
nearer (chessboard distance) to a different component — equidistant contested
pixels stay unclaimed, so the result is independent of component order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
import shapely
from shapely.geometry import Polygon

from .errors import PredictionError
from .geometry import GridGeometry
from .mask import BOUNDARY, INTERIOR, MASK_NODATA, NON_CROP, ClassMask
from .raster import Raster

log = logging.getLogger(__name__)

# 4-connectivity: fields do not leak diagonally through a 1-px boundary band
CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

PROB_SUM_TOL = 1e-4
PROB_NEG_TOL = 1e-6

DEFAULT_BIN_EDGES = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


@dataclass(frozen=True)
class PredictionRaster:
    """3-band class-probability raster (bands = P(class 0), P(1), P(2))."""

    raster: Raster

    def __post_init__(self):
        if self.raster.band_count != 3:
            raise PredictionError(
                f"prediction needs 3 probability bands, got {self.raster.band_count}"
            )
        valid = self.raster.valid_mask()
        probs = self.raster.data[:, valid]
        if probs.size:
            if probs.min() < -PROB_NEG_TOL:
                raise PredictionError(
                    f"negative class probability {probs.min()} in prediction"
                )
            sums = probs.sum(axis=0)
            worst = np.abs(sums - 1.0).max()
            if worst > PROB_SUM_TOL:
                raise PredictionError(
                    f"class probabilities sum to 1 +- {worst:.2e}, beyond tolerance"
                )


@dataclass(frozen=True)
class FieldPolygon:
    """One delineated field: polygon in map units plus bookkeeping."""

    field_id: int
    polygon: Polygon
    area_ha: float
    source_component_px: int

    def __post_init__(self):
        if not self.polygon.is_valid:
            raise ValueError(
                f"field {self.field_id}: invalid ring "
                f"({shapely.is_valid_reason(self.polygon)})"
            )
        if self.area_ha <= 0:
            raise ValueError(f"field {self.field_id}: area must be positive")
        if abs(self.polygon.area / 1e4 - self.area_ha) > 1e-6:
            raise ValueError(
                f"field {self.field_id}: area_ha {self.area_ha} inconsistent "
                f"with geometry ({self.polygon.area / 1e4})"
            )


@dataclass(frozen=True)
class FieldSizeStats:
    """Field count, median size, and a percentage histogram over ha bins."""

    count: int
    median_ha: float
    bin_edges: tuple[float, ...]  # left edges; the final bin is open-ended
    percentages: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "median_ha": self.median_ha,
            "bin_edges_ha": list(self.bin_edges),
            "percentages": list(self.percentages),
        }


def one_hot_prediction(mask: ClassMask, nodata: float = -9999.0) -> PredictionRaster:
    """Encode a class mask as a perfect 3-band probability raster."""
    data = np.zeros((3, *mask.codes.shape), dtype=np.float32)
    for cls in (NON_CROP, INTERIOR, BOUNDARY):
        data[cls][mask.codes == cls] = 1.0
    data[:, mask.codes == MASK_NODATA] = nodata
    raster = Raster(
        geometry=mask.geometry,
        data=data,
        band_names=("p0", "p1", "p2"),
        nodata=nodata,
    )
    return PredictionRaster(raster)


def argmax_classes(pred: PredictionRaster) -> ClassMask:
    """Most probable class per pixel; ties resolve to the higher class code."""
    raster = pred.raster
    # argmax takes the first maximum, so flipping the band axis makes ties
    # land on the higher code (boundaries beat interiors beat background)
    flipped = np.argmax(raster.data[::-1], axis=0)
    codes = (2 - flipped).astype(np.uint8)
    codes[~raster.valid_mask()] = MASK_NODATA
    return ClassMask(raster.geometry, codes)


def close_boundary_gaps(mask: ClassMask, radius: int) -> ClassMask:
    """Morphological closing of the code-2 set with a square element.

    Bridges boundary gaps up to 2*radius pixels; never removes an existing
    code-2 pixel and never claims nodata pixels.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask
    boundary = mask.codes == BOUNDARY
    if not boundary.any():
        return mask
    # pad by the radius so the closing is exact up to the raster edge
    padded = np.pad(boundary, radius, mode="constant", constant_values=False)
    element = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    closed = ndi.binary_closing(padded, structure=element)
    closed = closed[radius:-radius, radius:-radius] | boundary
    codes = np.array(mask.codes)
    codes[closed & (codes != MASK_NODATA)] = BOUNDARY
    return ClassMask(mask.geometry, codes)


def _expand_components(
    labels: np.ndarray, n: int, claimable: np.ndarray, expand_px: int
) -> np.ndarray:
    """Grow each labelled component by up to expand_px chessboard steps.

    A claimable pixel joins the uniquely nearest component; exact-distance
    ties stay unclaimed. Claimed pixels cut off from their component by
    contested pixels are released again, so every region stays 4-connected.
    """
    big = np.iinfo(np.int32).max
    best_d = np.full(labels.shape, big, dtype=np.int64)
    best_lbl = np.zeros(labels.shape, dtype=np.int32)
    tie = np.zeros(labels.shape, dtype=bool)
    for lbl in range(1, n + 1):
        d = ndi.distance_transform_cdt(labels != lbl, metric="chessboard")
        better = d < best_d
        equal = (d == best_d) & (best_lbl > 0)
        tie = (tie & ~better) | equal
        best_lbl = np.where(better, lbl, best_lbl)
        best_d = np.minimum(best_d, d)

    claims = claimable & ~tie & (best_lbl > 0) & (best_d <= expand_px)
    assigned = np.where(claims, best_lbl, 0).astype(np.int32)
    assigned[labels > 0] = labels[labels > 0]

    for lbl in range(1, n + 1):
        region = assigned == lbl
        parts, count = ndi.label(region, structure=CROSS)
        if count > 1:
            seed = tuple(np.argwhere(labels == lbl)[0])
            assigned[region & (parts != parts[seed])] = 0
    return assigned


_RIGHT_OF = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}


def _trace_rings(region: np.ndarray, geometry: GridGeometry) -> list[np.ndarray]:
    """Pixel-edge rings of a binary region, in map coordinates.

    Walks directed cell edges keeping the region on the right (grid space,
    rows down); at pinch corners the sharper right turn is taken so rings
    touch rather than cross. Exterior rings come out with positive signed
    area in map space, holes negative.
    """
    height, width = region.shape
    outgoing: dict[tuple[int, int], dict[tuple[int, int], tuple[int, int]]] = {}

    def add(start, end):
        direction = (end[0] - start[0], end[1] - start[1])
        direction = (np.sign(direction[0]), np.sign(direction[1]))
        outgoing.setdefault(start, {})[direction] = end

    for r, c in zip(*np.nonzero(region)):
        if r == 0 or not region[r - 1, c]:
            add((c, r), (c + 1, r))  # top edge, walking east
        if r == height - 1 or not region[r + 1, c]:
            add((c + 1, r + 1), (c, r + 1))  # bottom edge, walking west
        if c == 0 or not region[r, c - 1]:
            add((c, r + 1), (c, r))  # left edge, walking north
        if c == width - 1 or not region[r, c + 1]:
            add((c + 1, r), (c + 1, r + 1))  # right edge, walking south

    rings = []
    while outgoing:
        start = next(iter(outgoing))
        start_dir = next(iter(outgoing[start]))
        corners = [start]
        corner, heading = start, start_dir
        while True:
            end = outgoing[corner].pop(heading)
            if not outgoing[corner]:
                del outgoing[corner]
            corners.append(end)
            options = set(outgoing.get(end, {}))
            if end == start:
                # the consumed first edge competes in the pairing decision:
                # if it wins, the cycle is complete, otherwise this is a
                # pinch at the start corner and the ring passes through
                nxt = _preferred(options | {start_dir}, heading)
                if nxt == start_dir:
                    break
            else:
                nxt = _preferred(options, heading)
            corner, heading = end, nxt
        # a pinched region walks through a corner twice; split there so
        # every emitted ring is simple
        for piece in _split_at_repeats(corners):
            rings.append(_corners_to_map(piece, geometry))
    return rings


def _split_at_repeats(corners):
    seen = {}
    for idx, pt in enumerate(corners[:-1]):
        if pt in seen:
            i = seen[pt]
            inner = corners[i : idx + 1]
            outer = corners[: i + 1] + corners[idx + 1 :]
            return _split_at_repeats(inner) + _split_at_repeats(outer)
        seen[pt] = idx
    return [corners]


def _preferred(options, heading: tuple[int, int]):
    """Next direction out of a corner: right turn, then straight, then left."""
    right = _RIGHT_OF[heading]
    left = _RIGHT_OF[_RIGHT_OF[_RIGHT_OF[heading]]]
    for candidate in (right, heading, left):
        if candidate in options:
            return candidate
    return None


def _compress_collinear(corners):
    """Drop walk corners that continue a straight run, start point included."""
    pts = corners[:-1]
    kept = []
    m = len(pts)
    for i in range(m):
        before, here, after = pts[i - 1], pts[i], pts[(i + 1) % m]
        straight_x = before[0] == here[0] == after[0]
        straight_y = before[1] == here[1] == after[1]
        if not (straight_x or straight_y):
            kept.append(here)
    kept.append(kept[0])
    return kept


def _corners_to_map(corners, geometry: GridGeometry) -> np.ndarray:
    # reversed so exterior rings wind counter-clockwise in map space
    pts = np.asarray(_compress_collinear(corners)[::-1], dtype=float)
    xs = geometry.origin_x + pts[:, 0] * geometry.pixel_size
    ys = geometry.origin_y - pts[:, 1] * geometry.pixel_size
    ring = np.column_stack([xs, ys])
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    return ring


def _signed_area(ring: np.ndarray) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    return float(np.sum(x * y2 - x2 * y) / 2.0)


def _assemble_polygons(rings: list[np.ndarray]) -> list[Polygon]:
    shells = [r for r in rings if _signed_area(r) > 0]
    holes = [r for r in rings if _signed_area(r) < 0]
    if len(shells) == 1:
        return [Polygon(shells[0], holes)]
    polygons = []
    shell_geoms = [Polygon(s) for s in shells]
    for shell, geom in zip(shells, shell_geoms):
        mine = [
            h for h in holes if geom.contains(Polygon(h).representative_point())
        ]
        polygons.append(Polygon(shell, mine))
    return polygons


def polygonize_fields(mask: ClassMask, expand_px: int) -> list[FieldPolygon]:
    """Vectorize 4-connected interior components after fair expansion."""
    if expand_px < 0:
        raise ValueError(f"expand_px must be >= 0, got {expand_px}")
    labels, n = ndi.label(mask.codes == INTERIOR, structure=CROSS)
    if n == 0:
        return []
    if expand_px > 0:
        claimable = (mask.codes == NON_CROP) | (mask.codes == BOUNDARY)
        assigned = _expand_components(labels, n, claimable, expand_px)
    else:
        assigned = labels

    pixel_area = mask.geometry.pixel_size**2
    fields = []
    next_id = 0
    for lbl in range(1, n + 1):
        region = assigned == lbl
        rings = _trace_rings(region, mask.geometry)
        parts = _assemble_polygons(rings)
        source_px = int((labels == lbl).sum())
        if len(parts) > 1:
            # pinched region: each lobe becomes its own field
            log.warning("component %d traced to %d separate lobes", lbl, len(parts))
        for part in parts:
            next_id += 1
            px = source_px if len(parts) == 1 else max(
                1, round(part.area / pixel_area)
            )
            fields.append(
                FieldPolygon(
                    field_id=next_id,
                    polygon=part,
                    area_ha=part.area / 1e4,
                    source_component_px=px,
                )
            )
    return fields


def _point_segment_sq(px, py, ax, ay, bx, by):
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom == 0.0:
        dx, dy = px - ax, py - ay
        return dx * dx + dy * dy
    t = ((px - ax) * abx + (py - ay) * aby) / denom
    t = min(1.0, max(0.0, t))
    dx, dy = px - (ax + t * abx), py - (ay + t * aby)
    return dx * dx + dy * dy


def _douglas_peucker(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Open-chain simplification; kept vertices bound deviation by tolerance."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    tol_sq = tolerance * tolerance
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        ax, ay = points[i]
        bx, by = points[j]
        seg = points[i + 1 : j]
        dists = np.array(
            [_point_segment_sq(px, py, ax, ay, bx, by) for px, py in seg]
        )
        worst = int(np.argmax(dists))
        if dists[worst] > tol_sq:
            k = i + 1 + worst
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return points[keep]


def _simplify_ring(ring: np.ndarray, tolerance: float) -> np.ndarray:
    """Closed-ring DP anchored at vertex 0 and the vertex farthest from it."""
    pts = np.asarray(ring, dtype=float)[:-1]
    if len(pts) <= 3:
        return np.vstack([pts, pts[:1]])
    far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
    first = _douglas_peucker(pts[: far + 1], tolerance)
    second = _douglas_peucker(np.vstack([pts[far:], pts[:1]]), tolerance)
    return np.vstack([first, second[1:]])


def simplify_polygon(poly: FieldPolygon, tolerance: float) -> FieldPolygon:
    """Douglas-Peucker on every ring; deviation stays within tolerance.

    If a simplification self-intersects, the tolerance is halved and the
    polygon re-simplified; the floor of that retreat is the original polygon.
    """
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    if tolerance == 0:
        return poly
    rings = [np.asarray(poly.polygon.exterior.coords)]
    rings.extend(np.asarray(h.coords) for h in poly.polygon.interiors)

    tol = float(tolerance)
    while tol > 1e-12:
        simplified = [_simplify_ring(ring, tol) for ring in rings]
        if all(len(r) >= 4 for r in simplified):
            candidate = Polygon(simplified[0], simplified[1:])
            if candidate.is_valid and candidate.area > 0:
                return FieldPolygon(
                    field_id=poly.field_id,
                    polygon=candidate,
                    area_ha=candidate.area / 1e4,
                    source_component_px=poly.source_component_px,
                )
        tol /= 2.0
    return poly


def eliminate_fragments(
    polys: list[FieldPolygon], min_area_ha: float
) -> list[FieldPolygon]:
    """Merge sub-threshold fields into their longest-shared-border neighbor.

    Smallest fragment first (ties by field_id); a fragment with no shared
    border is dropped. Repeats until everything left meets the threshold.
    The absorbing field keeps its id.
    """
    if min_area_ha < 0:
        raise ValueError(f"min_area_ha must be >= 0, got {min_area_ha}")
    current = {p.field_id: p for p in polys}
    if len(current) != len(polys):
        raise ValueError("field ids not unique")

    while True:
        fragments = sorted(
            (p for p in current.values() if p.area_ha < min_area_ha),
            key=lambda p: (p.area_ha, p.field_id),
        )
        if not fragments:
            break
        fragment = fragments[0]
        best, best_length = None, 0.0
        for other in sorted(current.values(), key=lambda p: p.field_id):
            if other.field_id == fragment.field_id:
                continue
            shared = fragment.polygon.boundary.intersection(other.polygon.boundary)
            if shared.length > best_length:
                best, best_length = other, shared.length
        if best is None:
            log.warning(
                "field %d (%.4f ha) below %.4f ha with no neighbor; dropped",
                fragment.field_id, fragment.area_ha, min_area_ha,
            )
            del current[fragment.field_id]
            continue
        merged = best.polygon.union(fragment.polygon)
        if merged.geom_type != "Polygon":
            # only point-contact left; treat as isolated
            log.warning(
                "field %d merge with %d left a multi-part result; dropping fragment",
                fragment.field_id, best.field_id,
            )
            del current[fragment.field_id]
            continue
        current[best.field_id] = FieldPolygon(
            field_id=best.field_id,
            polygon=merged,
            area_ha=merged.area / 1e4,
            source_component_px=best.source_component_px
            + fragment.source_component_px,
        )
        del current[fragment.field_id]
    return sorted(current.values(), key=lambda p: p.field_id)


def field_stats(
    polys: list[FieldPolygon], bin_edges=DEFAULT_BIN_EDGES
) -> FieldSizeStats:
    """Count, median area, and percentage histogram (final bin open-ended)."""
    if not polys:
        raise ValueError("field_stats needs at least one polygon")
    edges = tuple(float(e) for e in bin_edges)
    if len(edges) < 1 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin edges must increase strictly: {bin_edges}")
    areas = sorted(p.area_ha for p in polys)
    if areas[0] < edges[0]:
        raise ValueError(
            f"area {areas[0]} ha falls below the first bin edge {edges[0]}"
        )
    n = len(areas)
    if n % 2:
        median = areas[n // 2]
    else:
        median = (areas[n // 2 - 1] + areas[n // 2]) / 2.0
    counts = np.zeros(len(edges), dtype=int)
    for area in areas:
        counts[np.searchsorted(edges, area, side="right") - 1] += 1
    percentages = tuple(100.0 * c / n for c in counts)
    return FieldSizeStats(
        count=n, median_ha=median, bin_edges=edges, percentages=percentages
    )


def postprocess_prediction(
    pred: PredictionRaster,
    *,
    close_radius: int = 1,
    expand_px: int = 1,
    simplify_tolerance: float | None = None,
    min_area_ha: float = 0.0,
) -> tuple[list[FieldPolygon], ClassMask]:
    """The full fixed-order chain; returns the fields and the decoded mask."""
    decoded = argmax_classes(pred)
    closed = close_boundary_gaps(decoded, close_radius)
    fields = polygonize_fields(closed, expand_px)
    if simplify_tolerance is None:
        simplify_tolerance = decoded.geometry.pixel_size
    fields = [simplify_polygon(p, simplify_tolerance) for p in fields]
    fields = eliminate_fragments(fields, min_area_ha)
    if not fields:
        log.warning("postprocessing produced no fields above %.4f ha", min_area_ha)
    return fields, closed


def fields_to_geojson(polys: list[FieldPolygon], crs_code: int) -> dict:
    """FeatureCollection with field_id/area_ha properties."""
    features = []
    for poly in polys:
        oriented = shapely.geometry.polygon.orient(poly.polygon)
        rings = [list(map(list, oriented.exterior.coords))]
        rings.extend(list(map(list, hole.coords)) for hole in oriented.interiors)
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": rings},
                "properties": {
                    "field_id": poly.field_id,
                    "area_ha": poly.area_ha,
                },
            }
        )
    return {
        "type": "FeatureCollection",
        "crs": {
            "type": "name",
            "properties": {"name": f"urn:ogc:def:crs:EPSG::{crs_code}"},
        },
        "features": features,
    }


def write_fields_geojson(
    polys: list[FieldPolygon], crs_code: int, path: str | Path
) -> None:
    Path(path).write_text(
        json.dumps(fields_to_geojson(polys, crs_code), indent=2) + "\n",
        encoding="utf-8",
    )
