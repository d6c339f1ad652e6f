/**
 * Training loop: seeded shuffling, focal+dice optimization with Adam,
 * validation after every epoch, reduce-on-plateau learning rate
 * schedule, best-checkpoint selection by validation mean IoU, and a CSV
 * epoch log written into the checkpoint directory.
 */

import { mkdirSync, writeFileSync, appendFileSync } from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { ConfigError, DataError } from "./errors.js";
import { buildModel, validateChannels, BACKBONES, DEFAULT_BACKBONE } from "./model.js";
import { focalDiceLoss, DEFAULT_GAMMA, DEFAULT_SMOOTH } from "./loss.js";
import { loadManifest, splitRecords, type Manifest } from "./manifest.js";
import {
  loadTiles,
  computeNormalization,
  normalizePixels,
  oneHotMask,
  type LoadedTile,
  type NormalizationStats,
} from "./data.js";
import { accumulateConfusion, emptyCounts, meanIou } from "./metrics.js";
import {
  saveCheckpoint,
  loadCheckpoint,
  configFingerprint,
  type CheckpointMeta,
} from "./checkpoint.js";

export interface TrainConfig {
  manifestPath: string;
  checkpointDir: string;
  backbone?: string;
  inputChannels: number;
  epochs: number;
  batchSize: number;
  learningRate?: number;
  seed?: number;
  initCheckpoint?: string;
  gamma?: number;
  smooth?: number;
  widthScale?: number;
  depth?: number;
  lrFactor?: number;
  lrPatience?: number;
  minLr?: number;
  tileDir?: string;
  verbose?: boolean;
}

export interface EpochLog {
  epoch: number;
  trainLoss: number;
  valLoss: number;
  valMeanIou: number;
  lr: number;
}

export interface TrainResult {
  checkpointDir: string;
  history: EpochLog[];
  bestValIou: number;
  bestEpoch: number;
  normalization: NormalizationStats;
}

export const LOG_HEADER = "epoch,train_loss,val_loss,val_mean_iou,lr";

/** Deterministic 32-bit PRNG; good enough for epoch shuffles. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled(n: number, rand: () => number): number[] {
  const order = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

interface PreparedTile {
  x: Float32Array;
  y: Float32Array;
}

function prepareTiles(
  tiles: LoadedTile[],
  channels: number,
  stats: NormalizationStats
): PreparedTile[] {
  return tiles.map((tile) => ({
    x: normalizePixels(tile.pixels, channels, stats),
    y: oneHotMask(tile.maskCodes),
  }));
}

function batchTensors(
  prepared: PreparedTile[],
  indices: number[],
  size: number,
  channels: number
): { xs: tf.Tensor4D; ys: tf.Tensor4D } {
  const xsData = new Float32Array(indices.length * size * size * channels);
  const ysData = new Float32Array(indices.length * size * size * 3);
  indices.forEach((tileIndex, i) => {
    xsData.set(prepared[tileIndex].x, i * size * size * channels);
    ysData.set(prepared[tileIndex].y, i * size * size * 3);
  });
  return {
    xs: tf.tensor4d(xsData, [indices.length, size, size, channels]),
    ys: tf.tensor4d(ysData, [indices.length, size, size, 3]),
  };
}

export interface EvalResult {
  loss: number;
  meanIou: number;
}

/** Loss and mean IoU of a model over already-loaded tiles. */
export function evaluateModel(
  model: tf.LayersModel,
  tiles: LoadedTile[],
  channels: number,
  stats: NormalizationStats,
  gamma = DEFAULT_GAMMA,
  smooth = DEFAULT_SMOOTH
): EvalResult {
  if (tiles.length === 0) {
    throw new DataError("cannot evaluate on zero tiles");
  }
  const size = tiles[0].image.geometry.height;
  const prepared = prepareTiles(tiles, channels, stats);
  const indices = tiles.map((_, i) => i);
  const { xs, ys } = batchTensors(prepared, indices, size, channels);
  const predictions = tf.tidy(() => model.predict(xs) as tf.Tensor4D);
  const lossScalar = focalDiceLoss(predictions, ys, gamma, smooth);
  const loss = lossScalar.dataSync()[0];
  const codesTensor = tf.tidy(() => predictions.argMax(-1));
  const predCodes = Uint8Array.from(codesTensor.dataSync());
  codesTensor.dispose();
  lossScalar.dispose();
  predictions.dispose();
  xs.dispose();
  ys.dispose();

  const counts = emptyCounts();
  let offset = 0;
  for (const tile of tiles) {
    const n = tile.maskCodes.length;
    accumulateConfusion(predCodes.subarray(offset, offset + n), tile.maskCodes, counts);
    offset += n;
  }
  const iou = meanIou(counts);
  if (iou === null) {
    throw new DataError("evaluation tiles contain no labeled pixels");
  }
  return { loss, meanIou: iou };
}

function validateConfig(config: TrainConfig): void {
  const backbone = config.backbone ?? DEFAULT_BACKBONE;
  if (BACKBONES[backbone] === undefined) {
    throw new ConfigError(
      `unknown backbone ${JSON.stringify(backbone)}; known: ${Object.keys(BACKBONES).join(", ")}`
    );
  }
  validateChannels(config.inputChannels);
  if (!Number.isInteger(config.epochs) || config.epochs < 1) {
    throw new ConfigError(`epochs must be a positive integer, got ${config.epochs}`);
  }
  if (!Number.isInteger(config.batchSize) || config.batchSize < 1) {
    throw new ConfigError(`batch_size must be a positive integer, got ${config.batchSize}`);
  }
  if (config.learningRate !== undefined && !(config.learningRate > 0)) {
    throw new ConfigError(`learning rate must be positive, got ${config.learningRate}`);
  }
}

export async function train(config: TrainConfig): Promise<TrainResult> {
  validateConfig(config);
  const backbone = config.backbone ?? DEFAULT_BACKBONE;
  const channels = config.inputChannels;
  const seed = config.seed ?? 0;
  const gamma = config.gamma ?? DEFAULT_GAMMA;
  const smooth = config.smooth ?? DEFAULT_SMOOTH;
  const lrFactor = config.lrFactor ?? 0.5;
  const lrPatience = config.lrPatience ?? 5;
  const minLr = config.minLr ?? 1e-6;

  const manifest: Manifest = loadManifest(config.manifestPath, config.tileDir);
  const trainRecords = splitRecords(manifest, "train");
  const valRecords = splitRecords(manifest, "val");
  if (trainRecords.length === 0) {
    throw new DataError("manifest has no train tiles");
  }
  if (valRecords.length === 0) {
    throw new DataError("manifest has no val tiles");
  }

  const trainTiles = loadTiles(trainRecords, channels);
  const valTiles = loadTiles(valRecords, channels);
  const size = trainTiles[0].image.geometry.height;
  if (size !== manifest.tileSize) {
    throw new DataError(
      `tile raster is ${size} px but manifest declares ${manifest.tileSize}`
    );
  }

  // standardization always comes from the current training split
  const stats = computeNormalization(trainTiles, channels);
  const fingerprint = configFingerprint({
    backbone,
    inputChannels: channels,
    tileSize: size,
    widthScale: config.widthScale,
    depth: config.depth,
  });

  let model: tf.LayersModel;
  if (config.initCheckpoint !== undefined) {
    const init = await loadCheckpoint(config.initCheckpoint);
    if (init.meta.fingerprint !== fingerprint) {
      throw new ConfigError(
        `init checkpoint was trained with an incompatible configuration ` +
          `(${init.meta.fingerprint} != ${fingerprint})`
      );
    }
    model = init.model;
  } else {
    model = buildModel({
      backbone,
      inputChannels: channels,
      tileSize: size,
      widthScale: config.widthScale,
      depth: config.depth,
      seed,
    });
  }

  const preparedTrain = prepareTiles(trainTiles, channels, stats);
  const valIndices = valTiles.map((_, i) => i);
  const preparedVal = prepareTiles(valTiles, channels, stats);
  const valBatch = batchTensors(preparedVal, valIndices, size, channels);

  let lr = config.learningRate ?? 1e-3;
  const optimizer = tf.train.adam(lr);
  const rand = mulberry32(seed);

  mkdirSync(config.checkpointDir, { recursive: true });
  const logPath = path.join(config.checkpointDir, "training_log.csv");
  writeFileSync(logPath, LOG_HEADER + "\n");

  const history: EpochLog[] = [];
  let bestValIou = -Infinity;
  let bestEpoch = 0;
  let bestValLoss = Infinity;
  let plateauWait = 0;

  try {
    for (let epoch = 1; epoch <= config.epochs; epoch++) {
      const order = shuffled(preparedTrain.length, rand);
      let lossSum = 0;
      let sampleCount = 0;
      for (let start = 0; start < order.length; start += config.batchSize) {
        const indices = order.slice(start, start + config.batchSize);
        const { xs, ys } = batchTensors(preparedTrain, indices, size, channels);
        const cost = optimizer.minimize(
          () => focalDiceLoss(model.apply(xs, { training: true }) as tf.Tensor, ys, gamma, smooth),
          true
        ) as tf.Scalar;
        lossSum += cost.dataSync()[0] * indices.length;
        sampleCount += indices.length;
        cost.dispose();
        xs.dispose();
        ys.dispose();
      }
      const trainLoss = lossSum / sampleCount;

      const valPredictions = tf.tidy(() => model.predict(valBatch.xs) as tf.Tensor4D);
      const valLossScalar = focalDiceLoss(valPredictions, valBatch.ys, gamma, smooth);
      const valLoss = valLossScalar.dataSync()[0];
      valLossScalar.dispose();
      const codesTensor = tf.tidy(() => valPredictions.argMax(-1));
      const predCodes = Uint8Array.from(codesTensor.dataSync());
      codesTensor.dispose();
      valPredictions.dispose();
      const counts = emptyCounts();
      let offset = 0;
      for (const tile of valTiles) {
        const n = tile.maskCodes.length;
        accumulateConfusion(predCodes.subarray(offset, offset + n), tile.maskCodes, counts);
        offset += n;
      }
      const valIou = meanIou(counts);
      if (valIou === null) {
        throw new DataError("validation tiles contain no labeled pixels");
      }

      const entry: EpochLog = { epoch, trainLoss, valLoss, valMeanIou: valIou, lr };
      history.push(entry);
      appendFileSync(
        logPath,
        `${epoch},${trainLoss},${valLoss},${valIou},${lr}\n`
      );
      if (config.verbose) {
        console.log(
          `epoch ${epoch}/${config.epochs} ` +
            `train_loss=${trainLoss.toFixed(4)} val_loss=${valLoss.toFixed(4)} ` +
            `val_miou=${valIou.toFixed(4)} lr=${lr}`
        );
      }

      if (valIou > bestValIou) {
        bestValIou = valIou;
        bestEpoch = epoch;
        const meta: CheckpointMeta = {
          epoch,
          bestValIou,
          fingerprint,
          backbone,
          inputChannels: channels,
          tileSize: size,
          normalization: stats,
        };
        await saveCheckpoint(config.checkpointDir, model, meta);
      }

      // reduce-on-plateau keyed to validation loss
      if (valLoss < bestValLoss) {
        bestValLoss = valLoss;
        plateauWait = 0;
      } else {
        plateauWait += 1;
        if (plateauWait >= lrPatience && lr > minLr) {
          lr = Math.max(lr * lrFactor, minLr);
          // Adam keeps its moment state; only the step size changes
          (optimizer as unknown as { learningRate: number }).learningRate = lr;
          plateauWait = 0;
        }
      }
    }
  } finally {
    valBatch.xs.dispose();
    valBatch.ys.dispose();
    optimizer.dispose();
  }

  return {
    checkpointDir: config.checkpointDir,
    history,
    bestValIou,
    bestEpoch,
    normalization: stats,
  };
}
