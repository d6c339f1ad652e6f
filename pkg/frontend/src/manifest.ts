/**
 * Tile manifests: the JSON contract between the tiling pipeline and this
 * trainer. A manifest lists tile records (window, split, image/mask file
 * names) plus the tile spec they were cut with; the trainer treats it as
 * read-only input and never reaches into pipeline internals.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { ManifestError } from "./errors.js";
import { readGeoTiff } from "./tiff.js";

export const MANIFEST_SCHEMA = "fieldpipe-manifest/1";
export const SPLITS = ["train", "val", "test"] as const;
export type Split = (typeof SPLITS)[number];

export interface TileRecord {
  tileId: string;
  split: Split;
  /** Absolute path of the image tile. */
  imagePath: string;
  /** Absolute path of the mask tile. */
  maskPath: string;
  geoBounds: [number, number, number, number];
}

export interface Manifest {
  tileSize: number;
  records: TileRecord[];
}

function asRecord(raw: unknown, tileDir: string, index: number): TileRecord {
  if (typeof raw !== "object" || raw === null) {
    throw new ManifestError(`record ${index} is not an object`);
  }
  const r = raw as Record<string, unknown>;
  const tileId = r.tile_id;
  const split = r.split;
  const imagePath = r.image_path;
  const maskPath = r.mask_path;
  const geoBounds = r.geo_bounds;
  if (typeof tileId !== "string" || typeof imagePath !== "string" || typeof maskPath !== "string") {
    throw new ManifestError(`record ${index} is missing tile_id/image_path/mask_path`);
  }
  if (split !== "train" && split !== "val" && split !== "test") {
    throw new ManifestError(`record ${tileId} has unknown split ${JSON.stringify(split)}`);
  }
  if (!Array.isArray(geoBounds) || geoBounds.length !== 4) {
    throw new ManifestError(`record ${tileId} has no 4-value geo_bounds`);
  }
  return {
    tileId,
    split,
    imagePath: path.resolve(tileDir, imagePath),
    maskPath: path.resolve(tileDir, maskPath),
    geoBounds: geoBounds.map(Number) as [number, number, number, number],
  };
}

/**
 * Load a manifest JSON file. Record paths resolve against `tileDir`
 * (default: a `tiles` directory next to the manifest).
 */
export function loadManifest(manifestPath: string, tileDir?: string): Manifest {
  let doc: unknown;
  try {
    doc = JSON.parse(fs.readFileSync(manifestPath, "utf8"));
  } catch (err) {
    throw new ManifestError(`cannot read manifest ${manifestPath}: ${err}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ManifestError(`${manifestPath} is not a JSON object`);
  }
  const top = doc as Record<string, unknown>;
  if (top.schema !== MANIFEST_SCHEMA) {
    throw new ManifestError(
      `${manifestPath}: unsupported schema ${JSON.stringify(top.schema)}; expected ${MANIFEST_SCHEMA}`
    );
  }
  const spec = top.spec as Record<string, unknown> | undefined;
  const tileSize = spec?.tile_size;
  if (typeof tileSize !== "number" || tileSize <= 0) {
    throw new ManifestError(`${manifestPath}: spec.tile_size missing or invalid`);
  }
  if (!Array.isArray(top.records)) {
    throw new ManifestError(`${manifestPath}: records is not an array`);
  }
  const base = tileDir ?? path.join(path.dirname(manifestPath), "tiles");
  const records = top.records.map((raw, i) => asRecord(raw, base, i));
  const seen = new Set<string>();
  for (const record of records) {
    if (seen.has(record.tileId)) {
      throw new ManifestError(`duplicate tile_id ${record.tileId}`);
    }
    seen.add(record.tileId);
  }
  return { tileSize, records };
}

export function splitRecords(manifest: Manifest, split: Split): TileRecord[] {
  return manifest.records.filter((r) => r.split === split);
}

/**
 * Concatenate two regions' manifests into one training set.
 *
 * Tile ids get a region prefix so they stay unique; splits are preserved.
 * Both manifests must share the tile size and channel count (the first
 * image tile of each side is probed for its band count).
 */
export function combineManifests(
  a: Manifest,
  b: Manifest,
  names: [string, string] = ["a", "b"]
): Manifest {
  if (a.tileSize !== b.tileSize) {
    throw new ManifestError(
      `cannot combine manifests with tile sizes ${a.tileSize} and ${b.tileSize}`
    );
  }
  if (names[0] === names[1]) {
    throw new ManifestError(`region names must differ, got ${JSON.stringify(names[0])} twice`);
  }
  if (a.records.length > 0 && b.records.length > 0) {
    const channelsA = readGeoTiff(a.records[0].imagePath).samples;
    const channelsB = readGeoTiff(b.records[0].imagePath).samples;
    if (channelsA !== channelsB) {
      throw new ManifestError(
        `cannot combine manifests with ${channelsA}-channel and ${channelsB}-channel imagery`
      );
    }
  }
  const prefix = (name: string, records: TileRecord[]) =>
    records.map((r) => ({ ...r, tileId: `${name}__${r.tileId}` }));
  return {
    tileSize: a.tileSize,
    records: [...prefix(names[0], a.records), ...prefix(names[1], b.records)],
  };
}

/**
 * Serialize a manifest back to schema-shaped JSON with absolute tile
 * paths, so a combined manifest can feed the training entry point.
 */
export function writeManifest(manifest: Manifest, outPath: string): void {
  const payload = {
    schema: MANIFEST_SCHEMA,
    spec: { tile_size: manifest.tileSize },
    records: manifest.records.map((r) => ({
      tile_id: r.tileId,
      split: r.split,
      image_path: r.imagePath,
      mask_path: r.maskPath,
      geo_bounds: r.geoBounds,
    })),
  };
  fs.writeFileSync(outPath, JSON.stringify(payload, null, 2) + "\n");
}
