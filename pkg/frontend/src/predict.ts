/**
 * Inference: run a trained checkpoint over manifest tiles and write one
 * 3-band probability GeoTIFF per tile, georeferencing copied from the
 * input tile, named `{tile_id}_pred.tif` so the evaluation side of the
 * pipeline picks them up directly.
 */

import { mkdirSync } from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { DataError } from "./errors.js";
import { loadManifest, splitRecords, type Split, type TileRecord } from "./manifest.js";
import { loadTile, normalizePixels } from "./data.js";
import { loadCheckpoint, type Checkpoint } from "./checkpoint.js";
import { writeGeoTiff } from "./tiff.js";

export interface PredictConfig {
  manifestPath: string;
  checkpointDir: string;
  outDir: string;
  split: Split;
  tileDir?: string;
}

export interface PredictResult {
  outDir: string;
  tilePaths: string[];
}

/** Interleaved (H,W,3) probabilities to plane-major (3,H,W). */
function hwcToPlanes(data: Float32Array, height: number, width: number): Float32Array {
  const planeSize = height * width;
  const out = new Float32Array(planeSize * 3);
  for (let i = 0; i < planeSize; i++) {
    out[i] = data[i * 3];
    out[planeSize + i] = data[i * 3 + 1];
    out[2 * planeSize + i] = data[i * 3 + 2];
  }
  return out;
}

export function predictTile(checkpoint: Checkpoint, record: TileRecord, outDir: string): string {
  const { model, meta } = checkpoint;
  const tile = loadTile(record, meta.inputChannels);
  const { height, width } = tile.image.geometry;
  const normalized = normalizePixels(tile.pixels, meta.inputChannels, meta.normalization);
  const probsTensor = tf.tidy(() => {
    const xs = tf.tensor4d(normalized, [1, height, width, meta.inputChannels]);
    return model.predict(xs) as tf.Tensor4D;
  });
  const probs = new Float32Array(probsTensor.dataSync());
  probsTensor.dispose();

  const outPath = path.join(outDir, `${record.tileId}_pred.tif`);
  writeGeoTiff(outPath, {
    geometry: tile.image.geometry,
    samples: 3,
    data: hwcToPlanes(probs, height, width),
    nodata: -9999,
  });
  return outPath;
}

export async function predict(config: PredictConfig): Promise<PredictResult> {
  const checkpoint = await loadCheckpoint(config.checkpointDir);
  const manifest = loadManifest(config.manifestPath, config.tileDir);
  const records = splitRecords(manifest, config.split);
  if (records.length === 0) {
    throw new DataError(`manifest has no ${config.split} tiles to predict`);
  }
  mkdirSync(config.outDir, { recursive: true });
  const tilePaths = records.map((record) => predictTile(checkpoint, record, config.outDir));
  return { outDir: config.outDir, tilePaths };
}
