import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import {
  combineManifests,
  loadManifest,
  splitRecords,
  writeManifest,
  MANIFEST_SCHEMA,
  type Manifest,
} from "../src/manifest.js";
import { ManifestError } from "../src/errors.js";
import { writeGeoTiff } from "../src/tiff.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const WORLD = path.join(HERE, "fixtures", "world");
const MANIFEST_PATH = path.join(WORLD, "manifest.json");

const tmp = mkdtempSync(path.join(tmpdir(), "fieldtrain-manifest-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

function patchedManifest(patch: (doc: Record<string, unknown>) => void): string {
  const doc = JSON.parse(readFileSync(MANIFEST_PATH, "utf8"));
  patch(doc);
  const out = path.join(tmp, `patched-${Math.random().toString(36).slice(2)}.json`);
  writeFileSync(out, JSON.stringify(doc));
  return out;
}

describe("loadManifest", () => {
  it("loads the fixture world with split counts intact", () => {
    const manifest = loadManifest(MANIFEST_PATH);
    expect(manifest.tileSize).toBe(16);
    expect(manifest.records).toHaveLength(9);
    expect(splitRecords(manifest, "train")).toHaveLength(6);
    expect(splitRecords(manifest, "val")).toHaveLength(2);
    expect(splitRecords(manifest, "test")).toHaveLength(1);
  });

  it("resolves tile paths to existing absolute files", () => {
    const manifest = loadManifest(MANIFEST_PATH);
    for (const record of manifest.records) {
      expect(path.isAbsolute(record.imagePath)).toBe(true);
      expect(path.isAbsolute(record.maskPath)).toBe(true);
      expect(existsSync(record.imagePath)).toBe(true);
      expect(existsSync(record.maskPath)).toBe(true);
    }
  });

  it("keeps geo_bounds as 4-tuples", () => {
    const manifest = loadManifest(MANIFEST_PATH);
    for (const record of manifest.records) {
      expect(record.geoBounds).toHaveLength(4);
      const [minx, miny, maxx, maxy] = record.geoBounds;
      expect(maxx - minx).toBeCloseTo(160, 9);
      expect(maxy - miny).toBeCloseTo(160, 9);
    }
  });

  it("rejects an unknown schema marker", () => {
    const doc = patchedManifest((d) => {
      d.schema = "something-else/9";
    });
    expect(() => loadManifest(doc, path.join(WORLD, "tiles"))).toThrow(ManifestError);
  });

  it("rejects duplicate tile ids", () => {
    const doc = patchedManifest((d) => {
      const records = d.records as Array<{ tile_id: string }>;
      records[1].tile_id = records[0].tile_id;
    });
    expect(() => loadManifest(doc, path.join(WORLD, "tiles"))).toThrow(/duplicate/);
  });

  it("rejects records with an unknown split", () => {
    const doc = patchedManifest((d) => {
      (d.records as Array<{ split: string }>)[0].split = "holdout";
    });
    expect(() => loadManifest(doc, path.join(WORLD, "tiles"))).toThrow(ManifestError);
  });

  it("rejects files that are not JSON", () => {
    const garbled = path.join(tmp, "garbled.json");
    writeFileSync(garbled, "{nope");
    expect(() => loadManifest(garbled)).toThrow(ManifestError);
  });
});

describe("combineManifests", () => {
  const world = loadManifest(MANIFEST_PATH);

  it("namespaces tile ids and preserves splits", () => {
    const combined = combineManifests(world, world, ["north", "south"]);
    expect(combined.records).toHaveLength(18);
    expect(combined.tileSize).toBe(16);
    const ids = combined.records.map((r) => r.tileId);
    expect(new Set(ids).size).toBe(18);
    expect(ids.filter((id) => id.startsWith("north__"))).toHaveLength(9);
    expect(ids.filter((id) => id.startsWith("south__"))).toHaveLength(9);
    expect(splitRecords(combined, "train")).toHaveLength(12);
    expect(splitRecords(combined, "val")).toHaveLength(4);
    expect(splitRecords(combined, "test")).toHaveLength(2);
  });

  it("rejects mismatched tile sizes", () => {
    const other: Manifest = { tileSize: 32, records: [] };
    expect(() => combineManifests(world, other)).toThrow(/tile size/);
  });

  it("rejects identical region names", () => {
    expect(() => combineManifests(world, world, ["x", "x"])).toThrow(ManifestError);
  });

  it("rejects mismatched channel counts", () => {
    // build a one-tile 4-band region next to the 3-band fixture world
    const img = path.join(tmp, "wide_img.tif");
    const mask = path.join(tmp, "wide_mask.tif");
    const geometry = {
      originX: 0,
      originY: 160,
      pixelSize: 10,
      width: 16,
      height: 16,
      crsCode: 32633,
    };
    writeGeoTiff(img, {
      geometry,
      samples: 4,
      data: new Float32Array(4 * 256).fill(0.25),
      nodata: -9999,
    });
    writeGeoTiff(mask, { geometry, samples: 1, data: new Uint8Array(256), nodata: 255 });
    const wide: Manifest = {
      tileSize: 16,
      records: [
        {
          tileId: "r0_c0",
          split: "train",
          imagePath: img,
          maskPath: mask,
          geoBounds: [0, 0, 160, 160],
        },
      ],
    };
    expect(() => combineManifests(world, wide)).toThrow(/channel/);
  });
});

describe("writeManifest", () => {
  it("round-trips a combined manifest through JSON", () => {
    const world = loadManifest(MANIFEST_PATH);
    const combined = combineManifests(world, world, ["alpha", "beta"]);
    const out = path.join(tmp, "combined.json");
    writeManifest(combined, out);
    const doc = JSON.parse(readFileSync(out, "utf8"));
    expect(doc.schema).toBe(MANIFEST_SCHEMA);
    const reloaded = loadManifest(out, tmp);
    expect(reloaded.tileSize).toBe(combined.tileSize);
    expect(reloaded.records.map((r) => r.tileId)).toEqual(combined.records.map((r) => r.tileId));
    expect(reloaded.records.map((r) => r.imagePath)).toEqual(
      combined.records.map((r) => r.imagePath)
    );
    expect(reloaded.records.map((r) => r.split)).toEqual(combined.records.map((r) => r.split));
  });
});
