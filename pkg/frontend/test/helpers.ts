/**
 * Synthetic training worlds for the trainer tests: block-structured
 * class masks plus imagery whose channels either encode the class
 * directly (learnable in a handful of epochs) or carry pure noise
 * (learnable never), written through the library's own GeoTIFF writer
 * in the same manifest layout the tiling pipeline produces.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import * as path from "node:path";

import { MANIFEST_SCHEMA, type Split } from "../src/manifest.js";
import { writeGeoTiff } from "../src/tiff.js";
import { mulberry32 } from "../src/train.js";

export interface WorldOptions {
  seed: number;
  splits: Split[];
  tileSize?: number;
  channels?: number;
  /** When true, channel c is bright exactly where the mask holds class c. */
  separable?: boolean;
  noise?: number;
  nodataFraction?: number;
  originX?: number;
  originY?: number;
}

export function makeWorld(dir: string, options: WorldOptions): string {
  const {
    seed,
    splits,
    tileSize = 16,
    channels = 3,
    separable = true,
    noise = 0.1,
    nodataFraction = 0.02,
    originX = 500000,
    originY = 4200000,
  } = options;
  const rand = mulberry32(seed);
  const pixelSize = 10;
  const blockSize = Math.max(2, Math.floor(tileSize / 4));
  const tilesDir = path.join(dir, "tiles");
  mkdirSync(tilesDir, { recursive: true });

  const records = splits.map((split, index) => {
    const row = Math.floor(index / 8);
    const col = index % 8;
    const ox = originX + col * tileSize * pixelSize;
    const oy = originY - row * tileSize * pixelSize;
    const geometry = { originX: ox, originY: oy, pixelSize, width: tileSize, height: tileSize, crsCode: 32633 };

    const mask = new Uint8Array(tileSize * tileSize);
    const blocks = Math.ceil(tileSize / blockSize);
    const blockClasses = Array.from({ length: blocks * blocks }, () => Math.floor(rand() * 3));
    for (let y = 0; y < tileSize; y++) {
      for (let x = 0; x < tileSize; x++) {
        const block = Math.floor(y / blockSize) * blocks + Math.floor(x / blockSize);
        mask[y * tileSize + x] =
          rand() < nodataFraction ? 255 : blockClasses[block];
      }
    }

    const image = new Float32Array(channels * tileSize * tileSize);
    for (let c = 0; c < channels; c++) {
      for (let i = 0; i < tileSize * tileSize; i++) {
        const jitter = noise * (rand() - 0.5);
        const base = separable && c < 3 ? (mask[i] === c ? 0.8 : 0.1) : 0.5;
        image[c * tileSize * tileSize + i] = Math.fround(base + jitter);
      }
    }

    const tileId = `t${index}`;
    writeGeoTiff(path.join(tilesDir, `${tileId}_img.tif`), {
      geometry,
      samples: channels,
      data: image,
      nodata: -9999,
    });
    writeGeoTiff(path.join(tilesDir, `${tileId}_mask.tif`), {
      geometry,
      samples: 1,
      data: mask,
      nodata: 255,
    });
    return {
      tile_id: tileId,
      split,
      window: [col * tileSize, row * tileSize, tileSize],
      geo_bounds: [ox, oy - tileSize * pixelSize, ox + tileSize * pixelSize, oy],
      grid_cell: [row, col],
      image_path: `${tileId}_img.tif`,
      mask_path: `${tileId}_mask.tif`,
    };
  });

  const manifestPath = path.join(dir, "manifest.json");
  writeFileSync(
    manifestPath,
    JSON.stringify(
      {
        schema: MANIFEST_SCHEMA,
        spec: { tile_size: tileSize, stride: tileSize, edge_policy: "drop" },
        records,
      },
      null,
      2
    )
  );
  return manifestPath;
}
