/**
 * Tile loading and normalization.
 *
 * Bridges manifest records to training tensors: reads image/mask pairs,
 * transposes plane-major rasters to HWC, derives per-channel
 * standardization statistics from the training split, and one-hot
 * encodes masks (nodata pixels become all-zero rows so the loss sees
 * no target mass there).
 */

import * as tf from "@tensorflow/tfjs";

import { DataError } from "./errors.js";
import { readGeoTiff, type GeoTiffImage } from "./tiff.js";
import type { TileRecord } from "./manifest.js";
import { NODATA_CODE } from "./metrics.js";

export interface NormalizationStats {
  mean: number[];
  std: number[];
}

export interface LoadedTile {
  record: TileRecord;
  image: GeoTiffImage;
  /** HWC float32 pixel data, length h*w*channels. */
  pixels: Float32Array;
  /** Class codes 0/1/2 or 255, length h*w. */
  maskCodes: Uint8Array;
}

/** Plane-major (C,H,W) to interleaved (H,W,C). */
export function planesToHwc(
  data: Float32Array | Uint8Array,
  channels: number,
  height: number,
  width: number
): Float32Array {
  const out = new Float32Array(height * width * channels);
  const planeSize = height * width;
  for (let c = 0; c < channels; c++) {
    const base = c * planeSize;
    for (let i = 0; i < planeSize; i++) {
      out[i * channels + c] = data[base + i];
    }
  }
  return out;
}

export function loadTile(record: TileRecord, expectedChannels: number): LoadedTile {
  const image = readGeoTiff(record.imagePath);
  if (image.samples !== expectedChannels) {
    throw new DataError(
      `tile ${record.tileId}: image has ${image.samples} channels, config expects ${expectedChannels}`
    );
  }
  const mask = readGeoTiff(record.maskPath);
  if (mask.samples !== 1) {
    throw new DataError(`tile ${record.tileId}: mask has ${mask.samples} bands, expected 1`);
  }
  const { height, width } = image.geometry;
  if (mask.geometry.height !== height || mask.geometry.width !== width) {
    throw new DataError(`tile ${record.tileId}: mask shape differs from image shape`);
  }
  const pixels = planesToHwc(image.data, image.samples, height, width);
  const maskCodes =
    mask.data instanceof Uint8Array ? mask.data : Uint8Array.from(mask.data, (v) => v | 0);
  return { record, image, pixels, maskCodes };
}

export function loadTiles(records: TileRecord[], expectedChannels: number): LoadedTile[] {
  return records.map((record) => loadTile(record, expectedChannels));
}

/** Per-channel mean/std over every pixel of the given tiles. */
export function computeNormalization(tiles: LoadedTile[], channels: number): NormalizationStats {
  if (tiles.length === 0) {
    throw new DataError("cannot compute normalization statistics from zero tiles");
  }
  const sums = new Float64Array(channels);
  const squares = new Float64Array(channels);
  let count = 0;
  for (const tile of tiles) {
    const { pixels } = tile;
    const n = pixels.length / channels;
    for (let i = 0; i < n; i++) {
      for (let c = 0; c < channels; c++) {
        const v = pixels[i * channels + c];
        sums[c] += v;
        squares[c] += v * v;
      }
    }
    count += n;
  }
  const mean: number[] = [];
  const std: number[] = [];
  for (let c = 0; c < channels; c++) {
    const m = sums[c] / count;
    const variance = Math.max(squares[c] / count - m * m, 0);
    mean.push(m);
    // floor keeps constant channels from dividing by zero
    std.push(Math.max(Math.sqrt(variance), 1e-6));
  }
  return { mean, std };
}

export function normalizePixels(
  pixels: Float32Array,
  channels: number,
  stats: NormalizationStats
): Float32Array {
  const out = new Float32Array(pixels.length);
  const n = pixels.length / channels;
  for (let i = 0; i < n; i++) {
    for (let c = 0; c < channels; c++) {
      out[i * channels + c] = (pixels[i * channels + c] - stats.mean[c]) / stats.std[c];
    }
  }
  return out;
}

/** One-hot (H,W,3) targets; nodata pixels get an all-zero row. */
export function oneHotMask(codes: Uint8Array): Float32Array {
  const out = new Float32Array(codes.length * 3);
  for (let i = 0; i < codes.length; i++) {
    const code = codes[i];
    if (code === NODATA_CODE) {
      continue;
    }
    if (code > 2) {
      throw new DataError(`mask contains invalid class code ${code}`);
    }
    out[i * 3 + code] = 1;
  }
  return out;
}

export interface TileTensors {
  xs: tf.Tensor4D;
  ys: tf.Tensor4D;
}

/** Stack normalized tiles into batch tensors (owned by the caller). */
export function tilesToTensors(
  tiles: LoadedTile[],
  channels: number,
  stats: NormalizationStats
): TileTensors {
  const size = tiles[0].image.geometry.height;
  const xsData = new Float32Array(tiles.length * size * size * channels);
  const ysData = new Float32Array(tiles.length * size * size * 3);
  tiles.forEach((tile, i) => {
    xsData.set(normalizePixels(tile.pixels, channels, stats), i * size * size * channels);
    ysData.set(oneHotMask(tile.maskCodes), i * size * size * 3);
  });
  return {
    xs: tf.tensor4d(xsData, [tiles.length, size, size, channels]),
    ys: tf.tensor4d(ysData, [tiles.length, size, size, 3]),
  };
}
