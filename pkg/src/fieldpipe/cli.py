"""Command-line pipeline: NDVI stacking through polygon stats.

Each subcommand reads its inputs and the shared config, writes its outputs
into the configured work directory, and exits 0 only when everything was
written and validated. All writers are deterministic, so rerunning a command
on unchanged inputs reproduces its outputs byte for byte.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
from shapely.geometry import Polygon

from . import metrics, postprocess, report, tiling
from .config import PipelineConfig, load_config
from .errors import ConfigError, FieldpipeError
from .geotiff import read_dates, read_raster, write_raster
from .mask import build_class_mask, read_class_mask, write_class_mask
from .parcels import load_parcels
from .raster import compute_ndvi, median_composite, stack_bands, stack_ndvi

NDVI_STACK = "ndvi_stack.tif"
BANDS_STACK = "bands_stack.tif"
CLASS_MASK = "class_mask.tif"
MANIFEST = "manifest.json"
TILE_DIR = "tiles"
FIELDS_GEOJSON = "fields.geojson"


class Context:
    def __init__(self, config_path, jobs, seed, dry_run):
        self.config_path = config_path
        self.jobs = jobs
        self.seed = seed
        self.dry_run = dry_run
        self._config = None

    @property
    def config(self) -> PipelineConfig:
        if self._config is None:
            if self.config_path is None:
                raise ConfigError("no --config given")
            self._config = load_config(self.config_path, seed_override=self.seed)
        return self._config

    def plan(self, *lines):
        """Dry-run support: print the plan and report whether to stop."""
        if self.dry_run:
            click.echo("dry-run plan:")
            for line in lines:
                click.echo(f"  {line}")
        return self.dry_run


def fail(exc: FieldpipeError):
    raise click.ClickException(str(exc))


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Pipeline config file.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker threads where a command can fan out.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--dry-run", is_flag=True, help="Print the plan, write nothing.")
@click.pass_context
def main(ctx, config_path, jobs, seed, dry_run):
    """Field-boundary delineation pipeline."""
    if jobs < 1:
        raise click.BadParameter("--jobs must be >= 1")
    ctx.obj = Context(config_path, jobs, seed, dry_run)


@main.command("ndvi-stack")
@click.pass_obj
def ndvi_stack_cmd(ctx: Context):
    """Median-composite each date group and write the 3-date NDVI stack."""
    try:
        cfg = ctx.config
        scenes = cfg.require_scenes()
        out = cfg.workdir / NDVI_STACK
        planned = [f"composite {len(files)} scene(s) for {date}" for date, files in scenes]
        planned.append(f"write {out}")
        if cfg.twelve_band:
            planned.append(f"write {cfg.workdir / BANDS_STACK}")
        if ctx.plan(*planned):
            return

        def composite(group):
            date, files = group
            try:
                rasters = [read_raster(f) for f in files]
            except (FieldpipeError, OSError) as exc:
                raise ConfigError(f"[scenes.{date}]: {exc}") from exc
            return date, median_composite(rasters)

        with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
            composites = list(pool.map(composite, scenes))

        dated_ndvi = []
        for date, comp in composites:
            ndvi = compute_ndvi(comp.band("R"), comp.band("NIR"), comp.nodata)
            dated_ndvi.append((date, ndvi))
        geometry = composites[0][1].geometry
        stack = stack_ndvi(dated_ndvi, geometry)
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        write_raster(stack.raster, out, dates=list(stack.dates))
        click.echo(f"wrote {out} ({stack.raster.band_count} bands)")
        if cfg.twelve_band:
            twelve = stack_bands(composites)
            # sidecar carries one date per band; each date covers 4 bands
            per_band = [d for d, _ in sorted(composites) for _ in range(4)]
            write_raster(twelve, cfg.workdir / BANDS_STACK, dates=per_band)
            click.echo(f"wrote {cfg.workdir / BANDS_STACK} (12 bands)")
    except (FieldpipeError, OSError) as exc:
        fail(exc)


@main.command("make-mask")
@click.option("--reference", type=click.Path(path_type=Path), default=None,
              help="Raster giving the output grid [default: the NDVI stack].")
@click.pass_obj
def make_mask_cmd(ctx: Context, reference):
    """Rasterize parcels into the 3-class boundary mask."""
    try:
        cfg = ctx.config
        parcels_path = cfg.require_parcels()
        ref_path = reference or cfg.workdir / NDVI_STACK
        out = cfg.workdir / CLASS_MASK
        if ctx.plan(
            f"grid from {ref_path}",
            f"parcels from {parcels_path} (rule: {cfg.crop_rule})",
            f"half-width {cfg.half_width} m",
            f"write {out}",
        ):
            return
        geometry = read_raster(ref_path).geometry
        parcels = load_parcels(parcels_path, cfg.crop_rule, assume_crs=cfg.assume_crs)
        mask = build_class_mask(parcels, geometry, cfg.half_width)
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        write_class_mask(mask, out)
        counts = dict(zip(*np.unique(np.asarray(mask.codes), return_counts=True)))
        click.echo(
            f"wrote {out} (interior {counts.get(1, 0)} px, "
            f"boundary {counts.get(2, 0)} px)"
        )
    except (FieldpipeError, OSError) as exc:
        fail(exc)


def _tile_paths(cfg: PipelineConfig):
    return cfg.workdir / NDVI_STACK, cfg.workdir / CLASS_MASK, cfg.workdir / TILE_DIR


@main.command("tile")
@click.pass_obj
def tile_cmd(ctx: Context):
    """Plan tiles, assign location-blocked splits, write tile pairs + manifest."""
    try:
        cfg = ctx.config
        image_path, mask_path, tile_dir = _tile_paths(cfg)
        spec = tiling.TileSpec(cfg.tile_size, cfg.stride)
        if ctx.plan(
            f"image {image_path}, mask {mask_path}",
            f"tile {cfg.tile_size} px, stride {cfg.stride} px, policy {spec.edge_policy}",
            f"splits {cfg.fractions} over {cfg.cell_size}-cell blocks, seed {cfg.seed}",
            f"write pairs to {tile_dir}, manifest {cfg.workdir / MANIFEST}",
        ):
            return
        image = read_raster(image_path)
        mask = read_class_mask(mask_path)
        windows = tiling.plan_tiles(image.geometry, spec)
        manifest = tiling.assign_splits(
            windows, image.geometry, spec, cfg.fractions, cfg.cell_size, cfg.seed
        )
        tile_dir.mkdir(parents=True, exist_ok=True)
        dates = None
        if Path(f"{image_path}.bands.json").exists():
            dates = read_dates(image_path)
        tiling.write_tile_files(image, mask, manifest, tile_dir, dates=dates)
        tiling.write_manifest(manifest, cfg.workdir / MANIFEST)
        area = tiling.tile_area_km2(cfg.tile_size, cfg.pixel_size)
        click.echo(
            f"{len(manifest.records)} tiles at {area:.6f} km2 each; "
            + ", ".join(f"{s}={n}" for s, n in sorted(manifest.split_counts().items()))
        )
        click.echo(f"wrote {cfg.workdir / MANIFEST}")
    except (FieldpipeError, OSError) as exc:
        fail(exc)


@main.command("split")
@click.pass_obj
def split_cmd(ctx: Context):
    """Re-deal splits on the existing manifest (fractions/cell/seed from config)."""
    try:
        cfg = ctx.config
        manifest_path = cfg.workdir / MANIFEST
        if ctx.plan(
            f"reassign {manifest_path} with fractions {cfg.fractions}, "
            f"cell_size {cfg.cell_size}, seed {cfg.seed}"
        ):
            return
        manifest = tiling.read_manifest(manifest_path)
        manifest = tiling.reassign_splits(
            manifest, cfg.fractions, cfg.cell_size, cfg.seed
        )
        tiling.write_manifest(manifest, manifest_path)
        click.echo(
            "splits: "
            + ", ".join(f"{s}={n}" for s, n in sorted(manifest.split_counts().items()))
        )
    except (FieldpipeError, OSError) as exc:
        fail(exc)


@main.command("evaluate")
@click.option("--predictions", "predictions_dir", required=True,
              type=click.Path(path_type=Path), help="Directory of *_pred.tif files.")
@click.option("--split", default=None, help="Restrict to one split.")
@click.pass_obj
def evaluate_cmd(ctx: Context, predictions_dir, split):
    """Score predictions against tile masks; write JSON + CSV + figure."""
    try:
        cfg = ctx.config
        manifest_path = cfg.workdir / MANIFEST
        if ctx.plan(
            f"manifest {manifest_path}, predictions {predictions_dir}"
            + (f", split {split}" if split else ""),
            f"write evaluation report into {cfg.workdir}",
        ):
            return
        manifest = tiling.read_manifest(manifest_path)
        iou_report = metrics.evaluate_manifest(
            manifest, cfg.workdir / TILE_DIR, predictions_dir, split=split
        )
        paths = report.save_iou_report(iou_report, cfg.workdir)
        click.echo(metrics.format_report(iou_report))
        for kind, path in sorted(paths.items()):
            click.echo(f"wrote {path}")
    except (FieldpipeError, OSError) as exc:
        fail(exc)


@main.command("postprocess")
@click.argument("prediction_file", type=click.Path(path_type=Path))
@click.pass_obj
def postprocess_cmd(ctx: Context, prediction_file):
    """Decode a prediction raster into field polygons + stats."""
    try:
        cfg = ctx.config
        out = cfg.workdir / FIELDS_GEOJSON
        if ctx.plan(
            f"read {prediction_file}",
            f"close radius {cfg.close_radius}, expand {cfg.expand_pixels} px, "
            f"simplify {cfg.tolerance} m, min area {cfg.min_area_ha} ha",
            f"write {out} and stats files",
        ):
            return
        raster = read_raster(prediction_file)
        if raster.band_count == 1:
            decoded = read_class_mask(prediction_file)
            closed = postprocess.close_boundary_gaps(decoded, cfg.close_radius)
            fields = postprocess.polygonize_fields(closed, cfg.expand_pixels)
            fields = [
                postprocess.simplify_polygon(p, cfg.tolerance) for p in fields
            ]
            fields = postprocess.eliminate_fragments(fields, cfg.min_area_ha)
        else:
            pred = postprocess.PredictionRaster(raster)
            fields, _ = postprocess.postprocess_prediction(
                pred,
                close_radius=cfg.close_radius,
                expand_px=cfg.expand_pixels,
                simplify_tolerance=cfg.tolerance,
                min_area_ha=cfg.min_area_ha,
            )
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        postprocess.write_fields_geojson(fields, raster.geometry.crs_code, out)
        click.echo(f"wrote {out} ({len(fields)} fields)")
        if not fields:
            click.echo("warning: no fields above the area threshold", err=True)
            return
        stats = postprocess.field_stats(fields, cfg.bin_edges)
        paths = report.save_stats_report(stats, cfg.workdir)
        for kind, path in sorted(paths.items()):
            click.echo(f"wrote {path}")
    except (FieldpipeError, OSError) as exc:
        fail(exc)


@main.command("stats")
@click.argument("fields_file", type=click.Path(path_type=Path), required=False)
@click.pass_obj
def stats_cmd(ctx: Context, fields_file):
    """Field-size stats (JSON + CSV + histogram) from a fields GeoJSON."""
    try:
        cfg = ctx.config
        path = fields_file or cfg.workdir / FIELDS_GEOJSON
        if ctx.plan(f"read {path}", f"write stats files into {cfg.workdir}"):
            return
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            features = payload["features"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read fields file {path}: {exc}") from None
        fields = []
        for feature in features:
            rings = feature["geometry"]["coordinates"]
            poly = Polygon(rings[0], rings[1:])
            props = feature.get("properties", {})
            fields.append(
                postprocess.FieldPolygon(
                    field_id=int(props["field_id"]),
                    polygon=poly,
                    area_ha=poly.area / 1e4,
                    source_component_px=1,
                )
            )
        if not fields:
            raise ConfigError(f"{path} holds no fields")
        stats = postprocess.field_stats(fields, cfg.bin_edges)
        click.echo(
            f"{stats.count} fields, median {stats.median_ha:.4f} ha"
        )
        paths = report.save_stats_report(stats, cfg.workdir)
        for kind, path in sorted(paths.items()):
            click.echo(f"wrote {path}")
    except (FieldpipeError, OSError) as exc:
        fail(exc)


if __name__ == "__main__":
    sys.exit(main())
