/**
 * Checkpoint persistence.
 *
 * A checkpoint directory holds model.json (topology + weight manifest),
 * weights.bin, and meta.json carrying the epoch, the best validation
 * mean IoU so far, the configuration fingerprint, and the normalization
 * statistics the weights were trained with. Saved purely through
 * in-memory IO handlers so no platform-specific file handler is needed.
 */

import { createHash } from "node:crypto";
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { ConfigError } from "./errors.js";
import type { NormalizationStats } from "./data.js";

export interface CheckpointMeta {
  epoch: number;
  bestValIou: number;
  fingerprint: string;
  backbone: string;
  inputChannels: number;
  tileSize: number;
  normalization: NormalizationStats;
}

export interface Checkpoint {
  model: tf.LayersModel;
  meta: CheckpointMeta;
}

/** Stable digest of the fields that define weight compatibility. */
export function configFingerprint(core: {
  backbone: string;
  inputChannels: number;
  tileSize: number;
  widthScale?: number;
  depth?: number;
}): string {
  const canonical = JSON.stringify({
    backbone: core.backbone,
    depth: core.depth ?? null,
    inputChannels: core.inputChannels,
    tileSize: core.tileSize,
    widthScale: core.widthScale ?? null,
  });
  return createHash("sha256").update(canonical).digest("hex").slice(0, 16);
}

export async function saveCheckpoint(
  dir: string,
  model: tf.LayersModel,
  meta: CheckpointMeta
): Promise<void> {
  mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData;
      if (weightData === undefined || weightData instanceof Array) {
        throw new ConfigError("unexpected composite weight payload while saving");
      }
      writeFileSync(
        path.join(dir, "model.json"),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightSpecs: artifacts.weightSpecs,
        })
      );
      writeFileSync(path.join(dir, "weights.bin"), Buffer.from(weightData));
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(0),
          modelTopologyType: "JSON",
        },
      };
    })
  );
  writeFileSync(path.join(dir, "meta.json"), JSON.stringify(meta, null, 2) + "\n");
}

export async function loadCheckpoint(dir: string): Promise<Checkpoint> {
  let modelJson: { modelTopology: object; weightSpecs: tf.io.WeightsManifestEntry[] };
  let weightData: Buffer;
  let meta: CheckpointMeta;
  try {
    modelJson = JSON.parse(readFileSync(path.join(dir, "model.json"), "utf8"));
    weightData = readFileSync(path.join(dir, "weights.bin"));
    meta = JSON.parse(readFileSync(path.join(dir, "meta.json"), "utf8"));
  } catch (err) {
    throw new ConfigError(`cannot read checkpoint at ${dir}: ${(err as Error).message}`);
  }
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: modelJson.modelTopology,
      weightSpecs: modelJson.weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength
      ),
    })
  );
  return { model, meta };
}
