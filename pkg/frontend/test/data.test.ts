import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import {
  computeNormalization,
  loadTile,
  normalizePixels,
  oneHotMask,
  planesToHwc,
  type LoadedTile,
} from "../src/data.js";
import { loadManifest } from "../src/manifest.js";
import { DataError } from "../src/errors.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const WORLD = path.join(HERE, "fixtures", "world");

const tmp = mkdtempSync(path.join(tmpdir(), "fieldtrain-data-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

describe("planesToHwc", () => {
  it("transposes a hand-worked 2-channel 2x2 raster", () => {
    // planes: ch0 = [1,2;3,4], ch1 = [5,6;7,8]
    const planes = Float32Array.from([1, 2, 3, 4, 5, 6, 7, 8]);
    const hwc = planesToHwc(planes, 2, 2, 2);
    expect(Array.from(hwc)).toEqual([1, 5, 2, 6, 3, 7, 4, 8]);
  });
});

describe("oneHotMask", () => {
  it("encodes classes and zeroes nodata rows", () => {
    const out = oneHotMask(Uint8Array.from([0, 2, 255, 1]));
    expect(Array.from(out)).toEqual([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0]);
  });

  it("rejects out-of-range class codes", () => {
    expect(() => oneHotMask(Uint8Array.from([3]))).toThrow(DataError);
  });
});

describe("normalization", () => {
  it("computes per-channel statistics over all pixels", () => {
    const record = loadManifest(path.join(WORLD, "manifest.json")).records[0];
    const tile = loadTile(record, 3);
    const stats = computeNormalization([tile], 3);
    expect(stats.mean).toHaveLength(3);
    expect(stats.std).toHaveLength(3);
    // hand-check channel 0 against a direct loop
    let sum = 0;
    const planeSize = 16 * 16;
    for (let i = 0; i < planeSize; i++) sum += tile.pixels[i * 3];
    expect(stats.mean[0]).toBeCloseTo(sum / planeSize, 9);
    for (const s of stats.std) expect(s).toBeGreaterThan(0);
  });

  it("floors the deviation for constant channels", () => {
    const record = loadManifest(path.join(WORLD, "manifest.json")).records[0];
    const tile = loadTile(record, 3);
    tile.pixels.fill(0.5);
    const stats = computeNormalization([tile], 3);
    expect(stats.std).toEqual([1e-6, 1e-6, 1e-6]);
    expect(stats.mean[0]).toBeCloseTo(0.5, 6);
  });

  it("standardizes to zero mean and unit deviation", () => {
    const pixels = Float32Array.from([1, 10, 2, 20, 3, 30, 4, 40]);
    const stats = computeNormalization([{ pixels } as unknown as LoadedTile], 2);
    const normalized = normalizePixels(pixels, 2, stats);
    for (let c = 0; c < 2; c++) {
      let sum = 0;
      let squares = 0;
      for (let i = 0; i < 4; i++) {
        sum += normalized[i * 2 + c];
        squares += normalized[i * 2 + c] ** 2;
      }
      expect(sum / 4).toBeCloseTo(0, 6);
      expect(squares / 4).toBeCloseTo(1, 6);
    }
  });

  it("rejects an empty tile list", () => {
    expect(() => computeNormalization([], 3)).toThrow(DataError);
  });
});

describe("loadTile", () => {
  it("loads a manifest record into pixels and mask codes", () => {
    const manifest = loadManifest(path.join(WORLD, "manifest.json"));
    const tile = loadTile(manifest.records[0], 3);
    expect(tile.pixels).toHaveLength(3 * 16 * 16);
    expect(tile.maskCodes).toHaveLength(16 * 16);
    expect(tile.image.geometry.width).toBe(16);
    for (const code of tile.maskCodes) expect([0, 1, 2, 255]).toContain(code);
  });

  it("rejects a channel-count mismatch, naming the tile", () => {
    const manifest = loadManifest(path.join(WORLD, "manifest.json"));
    expect(() => loadTile(manifest.records[0], 4)).toThrow(DataError);
    expect(() => loadTile(manifest.records[0], 4)).toThrow(/r0_c0/);
  });
});
