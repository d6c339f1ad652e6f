/**
 * Minimal GeoTIFF I/O for the tile files the pipeline exchanges.
 *
 * Reads classic (non-Big) TIFFs with no compression: single-band uint8
 * masks, planar float32 multi-band images, and chunky interleaved files.
 * Writes little-endian planar float32 (or uint8) files carrying the same
 * georeferencing tags the rest of the pipeline uses: pixel scale,
 * tiepoint, an EPSG code in the GeoKey directory, and the GDAL nodata
 * string. Prediction files written here are readable by the Python side
 * without adapters.
 */

import * as fs from "node:fs";

import { TiffError } from "./errors.js";

export interface TileGeometry {
  originX: number;
  originY: number;
  pixelSize: number;
  width: number;
  height: number;
  crsCode: number;
}

export interface GeoTiffImage {
  geometry: TileGeometry;
  samples: number;
  dtype: "float32" | "uint8";
  /** Plane-major pixel data: band 0 row-major, then band 1, ... */
  data: Float32Array | Uint8Array;
  nodata: number | null;
  bandNames: string[] | null;
}

const TAG_IMAGE_WIDTH = 256;
const TAG_IMAGE_LENGTH = 257;
const TAG_BITS_PER_SAMPLE = 258;
const TAG_COMPRESSION = 259;
const TAG_PHOTOMETRIC = 262;
const TAG_STRIP_OFFSETS = 273;
const TAG_SAMPLES_PER_PIXEL = 277;
const TAG_ROWS_PER_STRIP = 278;
const TAG_STRIP_BYTE_COUNTS = 279;
const TAG_PLANAR_CONFIG = 284;
const TAG_EXTRA_SAMPLES = 338;
const TAG_SAMPLE_FORMAT = 339;
const TAG_MODEL_PIXEL_SCALE = 33550;
const TAG_MODEL_TIEPOINT = 33922;
const TAG_GEO_KEY_DIRECTORY = 34735;
const TAG_GDAL_METADATA = 42112;
const TAG_GDAL_NODATA = 42113;

const KEY_GEOGRAPHIC_CRS = 2048;
const KEY_PROJECTED_CRS = 3072;

// TIFF field types we handle, with their byte widths
const TYPE_SIZES: Record<number, number> = {
  1: 1, // BYTE
  2: 1, // ASCII
  3: 2, // SHORT
  4: 4, // LONG
  5: 8, // RATIONAL
  11: 4, // FLOAT
  12: 8, // DOUBLE
};

type TagValue = number[] | string;

function readTagValues(
  view: DataView,
  little: boolean,
  type: number,
  count: number,
  at: number
): TagValue {
  if (type === 2) {
    const bytes = new Uint8Array(view.buffer, view.byteOffset + at, count);
    let end = bytes.indexOf(0);
    if (end < 0) end = count;
    return new TextDecoder().decode(bytes.subarray(0, end));
  }
  const values: number[] = [];
  for (let i = 0; i < count; i++) {
    const p = at + i * TYPE_SIZES[type];
    switch (type) {
      case 1:
        values.push(view.getUint8(p));
        break;
      case 3:
        values.push(view.getUint16(p, little));
        break;
      case 4:
        values.push(view.getUint32(p, little));
        break;
      case 5:
        values.push(view.getUint32(p, little) / view.getUint32(p + 4, little));
        break;
      case 11:
        values.push(view.getFloat32(p, little));
        break;
      case 12:
        values.push(view.getFloat64(p, little));
        break;
      default:
        throw new TiffError(`unsupported TIFF field type ${type}`);
    }
  }
  return values;
}

function parseIfd(view: DataView, little: boolean, offset: number): Map<number, TagValue> {
  const tags = new Map<number, TagValue>();
  const count = view.getUint16(offset, little);
  for (let i = 0; i < count; i++) {
    const entry = offset + 2 + 12 * i;
    const tag = view.getUint16(entry, little);
    const type = view.getUint16(entry + 2, little);
    const num = view.getUint32(entry + 4, little);
    const size = TYPE_SIZES[type];
    if (size === undefined) continue; // unknown types are ignorable
    const byteLength = size * num;
    const at = byteLength <= 4 ? entry + 8 : view.getUint32(entry + 8, little);
    tags.set(tag, readTagValues(view, little, type, num, at));
  }
  return tags;
}

function numbers(tags: Map<number, TagValue>, tag: number): number[] | null {
  const value = tags.get(tag);
  if (value === undefined || typeof value === "string") return null;
  return value;
}

function single(tags: Map<number, TagValue>, tag: number, fallback: number): number {
  const value = numbers(tags, tag);
  return value === null ? fallback : value[0];
}

function parseBandNames(xml: string, samples: number): string[] | null {
  const names = new Map<number, string>();
  const itemRe = /<Item\b([^>]*)>([^<]*)<\/Item>/g;
  for (const match of xml.matchAll(itemRe)) {
    const attrs = match[1];
    if (!/role="description"/.test(attrs)) continue;
    const sample = /sample="(\d+)"/.exec(attrs);
    names.set(sample ? parseInt(sample[1], 10) : 0, match[2]);
  }
  if (names.size !== samples) return null;
  const out: string[] = [];
  for (let i = 0; i < samples; i++) {
    const name = names.get(i);
    if (name === undefined) return null;
    out.push(name);
  }
  return out;
}

function parseGeometry(tags: Map<number, TagValue>, width: number, height: number): TileGeometry {
  const scale = numbers(tags, TAG_MODEL_PIXEL_SCALE);
  const tiepoint = numbers(tags, TAG_MODEL_TIEPOINT);
  if (scale === null || tiepoint === null) {
    throw new TiffError("missing pixel scale / tiepoint georeferencing tags");
  }
  if (tiepoint.length < 6 || tiepoint[0] !== 0 || tiepoint[1] !== 0 || tiepoint[2] !== 0) {
    throw new TiffError(`unsupported tiepoint [${tiepoint}]; expected raster point (0,0,0)`);
  }
  const [sx, sy] = scale;
  if (!(sx > 0) || !(sy > 0) || Math.abs(sx - sy) > 1e-9 * Math.max(sx, sy)) {
    throw new TiffError(`unsupported pixel scale (${sx}, ${sy})`);
  }
  const keys = numbers(tags, TAG_GEO_KEY_DIRECTORY);
  if (keys === null) {
    throw new TiffError("no GeoKey directory; coordinate system unknown");
  }
  let crsCode: number | null = null;
  for (let i = 4; i + 3 < keys.length; i += 4) {
    const [keyId, location, , value] = keys.slice(i, i + 4);
    if ((keyId === KEY_PROJECTED_CRS || keyId === KEY_GEOGRAPHIC_CRS) && location === 0) {
      crsCode = value;
    }
  }
  if (crsCode === null) {
    throw new TiffError("GeoKey directory carries no EPSG code");
  }
  return {
    originX: tiepoint[3],
    originY: tiepoint[4],
    pixelSize: sx,
    width,
    height,
    crsCode,
  };
}

/** Read one GeoTIFF file into plane-major pixel data plus georeferencing. */
export function readGeoTiff(path: string): GeoTiffImage {
  let buffer: Buffer;
  try {
    buffer = fs.readFileSync(path);
  } catch (err) {
    throw new TiffError(`cannot read ${path}: ${(err as Error).message}`);
  }
  const view = new DataView(buffer.buffer, buffer.byteOffset, buffer.byteLength);
  if (buffer.length < 8) throw new TiffError(`${path}: too short to be a TIFF`);
  const order = buffer.toString("latin1", 0, 2);
  if (order !== "II" && order !== "MM") {
    throw new TiffError(`${path}: not a TIFF (byte-order mark ${JSON.stringify(order)})`);
  }
  const little = order === "II";
  const magic = view.getUint16(2, little);
  if (magic === 43) throw new TiffError(`${path}: BigTIFF is not supported`);
  if (magic !== 42) throw new TiffError(`${path}: bad TIFF magic ${magic}`);

  const tags = parseIfd(view, little, view.getUint32(4, little));

  const width = single(tags, TAG_IMAGE_WIDTH, 0);
  const height = single(tags, TAG_IMAGE_LENGTH, 0);
  if (width <= 0 || height <= 0) throw new TiffError(`${path}: missing image dimensions`);
  const compression = single(tags, TAG_COMPRESSION, 1);
  if (compression !== 1) {
    throw new TiffError(`${path}: compression ${compression} not supported (need none)`);
  }
  const samples = single(tags, TAG_SAMPLES_PER_PIXEL, 1);
  const planar = single(tags, TAG_PLANAR_CONFIG, 1);
  const bits = numbers(tags, TAG_BITS_PER_SAMPLE) ?? [8];
  const formats = numbers(tags, TAG_SAMPLE_FORMAT) ?? bits.map(() => 1);
  if (new Set(bits).size !== 1 || new Set(formats).size !== 1) {
    throw new TiffError(`${path}: mixed per-sample types not supported`);
  }

  let dtype: "float32" | "uint8";
  if (bits[0] === 32 && formats[0] === 3) dtype = "float32";
  else if (bits[0] === 8 && formats[0] === 1) dtype = "uint8";
  else throw new TiffError(`${path}: unsupported sample type (${bits[0]} bits, format ${formats[0]})`);
  const bytesPerSample = bits[0] / 8;

  const offsets = numbers(tags, TAG_STRIP_OFFSETS);
  const counts = numbers(tags, TAG_STRIP_BYTE_COUNTS);
  if (offsets === null || counts === null || offsets.length !== counts.length) {
    throw new TiffError(`${path}: missing or inconsistent strip layout`);
  }

  // concatenate strips in file order: planar files store all strips of
  // sample 0 first, so the result is already plane-major
  const totalBytes = width * height * samples * bytesPerSample;
  const raw = new Uint8Array(totalBytes);
  let at = 0;
  for (let i = 0; i < offsets.length; i++) {
    raw.set(buffer.subarray(offsets[i], offsets[i] + counts[i]), at);
    at += counts[i];
  }
  if (at !== totalBytes) {
    throw new TiffError(`${path}: strip data holds ${at} bytes, expected ${totalBytes}`);
  }

  let data: Float32Array | Uint8Array;
  if (dtype === "float32") {
    data = new Float32Array(raw.buffer);
    if (!little) {
      const dv = new DataView(raw.buffer);
      for (let i = 0; i < data.length; i++) data[i] = dv.getFloat32(i * 4, false);
    }
  } else {
    data = raw;
  }

  if (planar === 1 && samples > 1) {
    // chunky YXS layout: deinterleave into plane-major order
    const planeMajor =
      dtype === "float32"
        ? new Float32Array(width * height * samples)
        : new Uint8Array(width * height * samples);
    for (let px = 0; px < width * height; px++) {
      for (let s = 0; s < samples; s++) {
        planeMajor[s * width * height + px] = data[px * samples + s];
      }
    }
    data = planeMajor;
  }

  const nodataText = tags.get(TAG_GDAL_NODATA);
  const nodata = typeof nodataText === "string" ? parseFloat(nodataText) : null;
  const xml = tags.get(TAG_GDAL_METADATA);
  const bandNames = typeof xml === "string" ? parseBandNames(xml, samples) : null;

  return {
    geometry: parseGeometry(tags, width, height),
    samples,
    dtype,
    data,
    nodata: nodata !== null && Number.isFinite(nodata) ? nodata : null,
    bandNames,
  };
}

function geoKeyDirectory(crsCode: number): number[] {
  // EPSG 4000-4999 is the geographic block; everything else projected
  const geographic = crsCode >= 4000 && crsCode < 5000;
  const crsKey = geographic ? KEY_GEOGRAPHIC_CRS : KEY_PROJECTED_CRS;
  const modelType = geographic ? 2 : 1;
  return [1, 1, 0, 3, 1024, 0, 1, modelType, 1025, 0, 1, 1, crsKey, 0, 1, crsCode];
}

function formatNodata(nodata: number): string {
  return Number.isInteger(nodata) ? String(nodata) : String(nodata);
}

function bandMetadataXml(names: string[]): string {
  const items = names
    .map(
      (name, i) =>
        `<Item name="DESCRIPTION" sample="${i}" role="description">${name}</Item>`
    )
    .join("");
  return `<GDALMetadata>${items}</GDALMetadata>`;
}

interface TagSpec {
  tag: number;
  type: number;
  values: number[] | string;
}

/**
 * Write plane-major pixel data as an uncompressed little-endian GeoTIFF.
 * Identical inputs produce byte-identical files.
 */
export function writeGeoTiff(
  path: string,
  image: {
    geometry: TileGeometry;
    samples: number;
    data: Float32Array | Uint8Array;
    nodata: number;
    bandNames?: string[];
  }
): void {
  const { geometry, samples, data, nodata, bandNames } = image;
  const { width, height } = geometry;
  if (data.length !== width * height * samples) {
    throw new TiffError(
      `data holds ${data.length} values, expected ${width}x${height}x${samples}`
    );
  }
  if (bandNames !== undefined && bandNames.length !== samples) {
    throw new TiffError(`${bandNames.length} band names for ${samples} bands`);
  }
  const isFloat = data instanceof Float32Array;
  const bytesPerSample = isFloat ? 4 : 1;
  const planeBytes = width * height * bytesPerSample;

  const rep = (value: number): number[] => new Array(samples).fill(value);
  const tags: TagSpec[] = [
    { tag: TAG_IMAGE_WIDTH, type: 4, values: [width] },
    { tag: TAG_IMAGE_LENGTH, type: 4, values: [height] },
    { tag: TAG_BITS_PER_SAMPLE, type: 3, values: rep(bytesPerSample * 8) },
    { tag: TAG_COMPRESSION, type: 3, values: [1] },
    { tag: TAG_PHOTOMETRIC, type: 3, values: [1] },
    { tag: TAG_STRIP_OFFSETS, type: 4, values: rep(0) }, // patched below
    { tag: TAG_SAMPLES_PER_PIXEL, type: 3, values: [samples] },
    { tag: TAG_ROWS_PER_STRIP, type: 4, values: [height] },
    { tag: TAG_STRIP_BYTE_COUNTS, type: 4, values: rep(planeBytes) },
  ];
  if (samples > 1) {
    tags.push({ tag: TAG_PLANAR_CONFIG, type: 3, values: [2] });
    tags.push({ tag: TAG_EXTRA_SAMPLES, type: 3, values: new Array(samples - 1).fill(0) });
  } else {
    tags.push({ tag: TAG_PLANAR_CONFIG, type: 3, values: [1] });
  }
  tags.push({ tag: TAG_SAMPLE_FORMAT, type: 3, values: rep(isFloat ? 3 : 1) });
  tags.push({
    tag: TAG_MODEL_PIXEL_SCALE,
    type: 12,
    values: [geometry.pixelSize, geometry.pixelSize, 0],
  });
  tags.push({
    tag: TAG_MODEL_TIEPOINT,
    type: 12,
    values: [0, 0, 0, geometry.originX, geometry.originY, 0],
  });
  tags.push({ tag: TAG_GEO_KEY_DIRECTORY, type: 3, values: geoKeyDirectory(geometry.crsCode) });
  if (bandNames !== undefined) {
    tags.push({ tag: TAG_GDAL_METADATA, type: 2, values: bandMetadataXml(bandNames) });
  }
  tags.push({ tag: TAG_GDAL_NODATA, type: 2, values: formatNodata(nodata) });
  tags.sort((a, b) => a.tag - b.tag);

  const encoded = tags.map((spec) => {
    if (typeof spec.values === "string") {
      const bytes = new TextEncoder().encode(spec.values + "\0");
      return { ...spec, count: bytes.length, bytes };
    }
    const size = TYPE_SIZES[spec.type];
    const bytes = new Uint8Array(spec.values.length * size);
    const dv = new DataView(bytes.buffer);
    spec.values.forEach((value, i) => {
      if (spec.type === 3) dv.setUint16(i * 2, value, true);
      else if (spec.type === 4) dv.setUint32(i * 4, value, true);
      else dv.setFloat64(i * 8, value, true);
    });
    return { ...spec, count: spec.values.length, bytes };
  });

  const ifdStart = 8;
  const ifdBytes = 2 + encoded.length * 12 + 4;
  let externalAt = ifdStart + ifdBytes;
  const placements = encoded.map((entry) => {
    if (entry.bytes.length <= 4) return { ...entry, offset: null as number | null };
    const offset = externalAt;
    externalAt += entry.bytes.length + (entry.bytes.length % 2); // word-align
    return { ...entry, offset };
  });
  let dataAt = externalAt + (externalAt % 2);
  const stripOffsets = Array.from({ length: samples }, (_, s) => dataAt + s * planeBytes);

  const total = dataAt + samples * planeBytes;
  const out = Buffer.alloc(total);
  out.write("II", 0, "latin1");
  out.writeUInt16LE(42, 2);
  out.writeUInt32LE(ifdStart, 4);
  out.writeUInt16LE(placements.length, ifdStart);
  placements.forEach((entry, i) => {
    if (entry.tag === TAG_STRIP_OFFSETS) {
      // regenerate with the final pixel-data positions
      const dv = new DataView(entry.bytes.buffer);
      stripOffsets.forEach((off, s) => dv.setUint32(s * 4, off, true));
    }
    const at = ifdStart + 2 + i * 12;
    out.writeUInt16LE(entry.tag, at);
    out.writeUInt16LE(entry.type, at + 2);
    out.writeUInt32LE(entry.count, at + 4);
    if (entry.offset === null) {
      Buffer.from(entry.bytes).copy(out, at + 8);
    } else {
      out.writeUInt32LE(entry.offset, at + 8);
      Buffer.from(entry.bytes).copy(out, entry.offset);
    }
  });
  out.writeUInt32LE(0, ifdStart + 2 + placements.length * 12); // next-IFD terminator

  if (isFloat) {
    const bytes = new Uint8Array(data.buffer, data.byteOffset, data.byteLength);
    out.set(bytes, dataAt);
  } else {
    out.set(data, dataAt);
  }
  fs.writeFileSync(path, out);
}
