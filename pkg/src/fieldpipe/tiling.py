"""Tile planning, extraction, leakage-safe splits, and the tile manifest.

Tiles are square windows on a source grid, overlapping by tile_size − stride.
Splits are assigned to whole location cells (blocks of cell_size × cell_size
stride units) rather than to individual tiles, so overlapping neighbours land
in the same split except along cell borders; residual border overlap is
counted and reported instead of silently accepted.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ManifestError, ManifestSchemaError, SplitError, WindowError
from .geometry import GridGeometry, require_same_geometry
from .mask import ClassMask
from .raster import Raster

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "fieldpipe-manifest/1"
EDGE_SNAP = "snap-to-edge"
EDGE_DROP = "drop-partial"
SPLITS = ("train", "val", "test")

Window = tuple[int, int, int]  # (col_off, row_off, size)


@dataclass(frozen=True)
class TileSpec:
    tile_size: int
    stride: int
    edge_policy: str = EDGE_SNAP

    def __post_init__(self):
        if self.tile_size < 1:
            raise ValueError(f"tile_size must be positive, got {self.tile_size}")
        if not 0 < self.stride <= self.tile_size:
            raise ValueError(
                f"stride must satisfy 0 < stride <= tile_size, got {self.stride}"
            )
        if self.edge_policy not in (EDGE_SNAP, EDGE_DROP):
            raise ValueError(f"unknown edge policy {self.edge_policy!r}")


@dataclass(frozen=True)
class TileRecord:
    """One tile's placement, split membership, and file locations."""

    tile_id: str
    window: Window
    geo_bounds: tuple[float, float, float, float]
    split: str
    grid_cell: tuple[int, int]
    image_path: str
    mask_path: str


@dataclass(frozen=True)
class TileManifest:
    """Complete, deterministic description of a tiling run.

    The JSON form of this object is the only contract between the pipeline
    and the trainer; paths inside records are relative to the manifest file.
    """

    spec: TileSpec
    source_geometry: GridGeometry
    records: tuple[TileRecord, ...]
    fractions: tuple[float, float, float]
    seed: int
    cell_size: int

    def __post_init__(self):
        ids = [r.tile_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate tile_id in manifest")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ManifestError(f"fractions {self.fractions} do not sum to 1")
        cell_split: dict[tuple[int, int], str] = {}
        for record in self.records:
            previous = cell_split.setdefault(record.grid_cell, record.split)
            if previous != record.split:
                raise ManifestError(
                    f"cell {record.grid_cell} straddles splits {previous}/{record.split}"
                )

    def split_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in SPLITS}
        for record in self.records:
            counts[record.split] += 1
        return counts

    def cross_split_overlaps(self) -> int:
        """Pairs of tiles in different splits whose windows intersect."""
        n = len(self.records)
        if n < 2:
            return 0
        cols = np.array([r.window[0] for r in self.records])
        rows = np.array([r.window[1] for r in self.records])
        sizes = np.array([r.window[2] for r in self.records])
        split_ids = np.array([SPLITS.index(r.split) for r in self.records])
        total = 0
        for start in range(0, n, 512):
            stop = min(start + 512, n)
            dc_hit = (cols[start:stop, None] < cols[None, :] + sizes[None, :]) & (
                cols[None, :] < cols[start:stop, None] + sizes[start:stop, None]
            )
            dr_hit = (rows[start:stop, None] < rows[None, :] + sizes[None, :]) & (
                rows[None, :] < rows[start:stop, None] + sizes[start:stop, None]
            )
            differs = split_ids[start:stop, None] != split_ids[None, :]
            pairs = dc_hit & dr_hit & differs
            total += int(pairs.sum())
        return total // 2  # each unordered pair counted twice


def _axis_offsets(extent: int, spec: TileSpec) -> list[int]:
    if extent < spec.tile_size:
        return []
    last = extent - spec.tile_size
    offsets = list(range(0, last + 1, spec.stride))
    if spec.edge_policy == EDGE_SNAP and offsets[-1] != last:
        offsets.append(last)  # clamp one extra window to the raster edge
    return offsets


def plan_tiles(geometry: GridGeometry, spec: TileSpec) -> list[Window]:
    """Row-major tile windows over the grid under the spec's edge policy."""
    col_offsets = _axis_offsets(geometry.width, spec)
    row_offsets = _axis_offsets(geometry.height, spec)
    if not col_offsets or not row_offsets:
        log.warning(
            "grid %dx%d smaller than tile size %d; empty plan",
            geometry.width, geometry.height, spec.tile_size,
        )
        return []
    return [
        (col_off, row_off, spec.tile_size)
        for row_off in row_offsets
        for col_off in col_offsets
    ]


def _check_window(geometry: GridGeometry, window: Window) -> None:
    col_off, row_off, size = window
    if size < 1 or col_off < 0 or row_off < 0:
        raise WindowError(f"bad window {window}")
    if col_off + size > geometry.width or row_off + size > geometry.height:
        raise WindowError(
            f"window {window} exceeds {geometry.width}x{geometry.height} grid"
        )


def extract_tile(image: Raster, mask: ClassMask, window: Window) -> tuple[Raster, ClassMask]:
    """Crop aligned image and mask to one window; origins shift together."""
    require_same_geometry(image.geometry, mask.geometry, "tile extraction")
    _check_window(image.geometry, window)
    col_off, row_off, size = window
    sub_geometry = image.geometry.window(col_off, row_off, size, size)
    sub_image = Raster(
        geometry=sub_geometry,
        data=image.data[:, row_off : row_off + size, col_off : col_off + size],
        band_names=image.band_names,
        nodata=image.nodata,
    )
    return sub_image, mask.window(col_off, row_off, size)


def tile_area_km2(tile_size: int, pixel_size: float) -> float:
    """Ground area of one square tile in km²."""
    if tile_size <= 0 or pixel_size <= 0:
        raise ValueError("tile_size and pixel_size must be positive")
    return (tile_size * pixel_size) ** 2 / 1e6


def _cell_of(window: Window, spec: TileSpec, cell_size: int) -> tuple[int, int]:
    col_off, row_off, _ = window
    span = spec.stride * cell_size
    return (row_off // span, col_off // span)


def assign_splits(
    windows: Sequence[Window],
    geometry: GridGeometry,
    spec: TileSpec,
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1),
    cell_size: int = 4,
    seed: int = 0,
) -> TileManifest:
    """Group windows into location cells and deal whole cells to splits.

    Cells are shuffled by a seeded PRNG, then assigned greedily to whichever
    split is furthest below its target tile count (ties favour train, then
    val). The result is a pure function of the arguments.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise SplitError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"fractions {fractions} do not sum to 1")
    if cell_size < 1:
        raise SplitError(f"cell_size must be >= 1, got {cell_size}")

    cells: dict[tuple[int, int], list[Window]] = {}
    for window in windows:
        cells.setdefault(_cell_of(window, spec, cell_size), []).append(window)

    order = sorted(cells)
    random.Random(seed).shuffle(order)

    total = len(windows)
    targets = [f * total for f in fractions]
    counts = [0, 0, 0]
    cell_assignment: dict[tuple[int, int], str] = {}
    for cell in order:
        deficits = [targets[i] - counts[i] for i in range(3)]
        pick = max(range(3), key=lambda i: (deficits[i], -i))
        cell_assignment[cell] = SPLITS[pick]
        counts[pick] += len(cells[cell])

    if len(cells) >= 3:
        assigned = set(cell_assignment.values())
        missing = [name for name in SPLITS if name not in assigned]
        if missing:
            raise SplitError(
                f"splits {missing} received zero cells; use more cells or "
                f"larger fractions"
            )

    records = []
    for window in windows:
        col_off, row_off, size = window
        cell = _cell_of(window, spec, cell_size)
        tile_id = f"r{row_off}_c{col_off}"
        bounds = geometry.window(col_off, row_off, size, size).bounds
        records.append(
            TileRecord(
                tile_id=tile_id,
                window=window,
                geo_bounds=bounds,
                split=cell_assignment[cell],
                grid_cell=cell,
                image_path=f"{tile_id}_img.tif",
                mask_path=f"{tile_id}_mask.tif",
            )
        )
    return TileManifest(
        spec=spec,
        source_geometry=geometry,
        records=tuple(records),
        fractions=tuple(fractions),
        seed=seed,
        cell_size=cell_size,
    )


def manifest_to_dict(manifest: TileManifest) -> dict:
    geometry = manifest.source_geometry
    return {
        "schema": MANIFEST_SCHEMA,
        "spec": {
            "tile_size": manifest.spec.tile_size,
            "stride": manifest.spec.stride,
            "edge_policy": manifest.spec.edge_policy,
        },
        "geometry": {
            "origin_x": geometry.origin_x,
            "origin_y": geometry.origin_y,
            "pixel_size": geometry.pixel_size,
            "width": geometry.width,
            "height": geometry.height,
            "crs_code": geometry.crs_code,
        },
        "fractions": list(manifest.fractions),
        "seed": manifest.seed,
        "cell_size": manifest.cell_size,
        "summary": {
            "tiles": len(manifest.records),
            "split_tiles": manifest.split_counts(),
            "cross_split_overlaps": manifest.cross_split_overlaps(),
        },
        "records": [
            {
                "tile_id": r.tile_id,
                "window": list(r.window),
                "geo_bounds": list(r.geo_bounds),
                "split": r.split,
                "grid_cell": list(r.grid_cell),
                "image_path": r.image_path,
                "mask_path": r.mask_path,
            }
            for r in manifest.records
        ],
    }


def write_manifest(manifest: TileManifest, path: str | Path) -> None:
    """Serialize to versioned JSON; identical manifests give identical bytes."""
    path = Path(path)
    payload = json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=True)
    path.write_text(payload + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> TileManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path} is not valid JSON: {exc}") from exc
    schema = doc.get("schema")
    if schema != MANIFEST_SCHEMA:
        raise ManifestSchemaError(
            f"{path} has schema {schema!r}, expected {MANIFEST_SCHEMA!r}"
        )
    try:
        spec = TileSpec(**doc["spec"])
        geometry = GridGeometry(**doc["geometry"])
        records = tuple(
            TileRecord(
                tile_id=r["tile_id"],
                window=tuple(r["window"]),
                geo_bounds=tuple(r["geo_bounds"]),
                split=r["split"],
                grid_cell=tuple(r["grid_cell"]),
                image_path=r["image_path"],
                mask_path=r["mask_path"],
            )
            for r in doc["records"]
        )
        return TileManifest(
            spec=spec,
            source_geometry=geometry,
            records=records,
            fractions=tuple(doc["fractions"]),
            seed=doc["seed"],
            cell_size=doc["cell_size"],
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"{path} is malformed: {exc}") from exc


def write_tile_files(
    image: Raster,
    mask: ClassMask,
    manifest: TileManifest,
    directory: str | Path,
    dates=None,
) -> None:
    """Write every record's image/mask GeoTIFF pair next to the manifest."""
    from .geotiff import write_raster
    from .mask import write_class_mask

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for record in manifest.records:
        tile_image, tile_mask = extract_tile(image, mask, record.window)
        write_raster(tile_image, directory / record.image_path, dates=dates)
        write_class_mask(tile_mask, directory / record.mask_path)


def reassign_splits(
    manifest: TileManifest,
    fractions: tuple[float, float, float],
    cell_size: int,
    seed: int,
) -> TileManifest:
    """New split assignment over an existing plan; tile files stay in place."""
    windows = [r.window for r in manifest.records]
    fresh = assign_splits(
        windows, manifest.source_geometry, manifest.spec, fractions, cell_size, seed
    )
    by_id = {r.tile_id: r for r in manifest.records}
    records = tuple(
        replace(by_id[r.tile_id], split=r.split, grid_cell=r.grid_cell)
        for r in fresh.records
    )
    return replace(
        fresh, records=records, fractions=tuple(fractions), seed=seed, cell_size=cell_size
    )
