import { existsSync, mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { train, evaluateModel, type TrainResult } from "../src/train.js";
import { loadCheckpoint, configFingerprint, type Checkpoint } from "../src/checkpoint.js";
import { buildModel } from "../src/model.js";
import { loadManifest, splitRecords, type Split } from "../src/manifest.js";
import { loadTiles, computeNormalization } from "../src/data.js";
import { ConfigError, DataError } from "../src/errors.js";
import { makeWorld } from "./helpers.js";

const tmp = mkdtempSync(path.join(tmpdir(), "fieldtrain-train-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

const TEN_TILES: Split[] = [
  "train",
  "train",
  "train",
  "train",
  "train",
  "train",
  "train",
  "val",
  "val",
  "test",
];

// shared across suites; populated once by the acceptance run below
let overfit: { result: TrainResult; elapsedSeconds: number; checkpointDir: string; manifestPath: string };
let checkpoint: Checkpoint;

beforeAll(async () => {
  const manifestPath = makeWorld(path.join(tmp, "world"), { seed: 21, splits: TEN_TILES });
  const checkpointDir = path.join(tmp, "ckpt");
  const t0 = Date.now();
  const result = await train({
    manifestPath,
    checkpointDir,
    inputChannels: 3,
    epochs: 50,
    batchSize: 10,
    learningRate: 1e-2,
    seed: 4,
    widthScale: 0.5,
    depth: 2,
  });
  overfit = {
    result,
    elapsedSeconds: (Date.now() - t0) / 1000,
    checkpointDir,
    manifestPath,
  };
  checkpoint = await loadCheckpoint(checkpointDir);
}, 600_000);

describe("acceptance: overfit smoke on 10 tiles", () => {
  it("reaches best-checkpoint val mean IoU above 0.9 in 50 epochs of batch 10", () => {
    expect(overfit.result.history).toHaveLength(50);
    expect(overfit.result.bestValIou).toBeGreaterThan(0.9);
    expect(checkpoint.meta.bestValIou).toBeGreaterThan(0.9);
  });

  it("finishes within the 10 minute CPU budget at reduced tile size", () => {
    expect(overfit.elapsedSeconds).toBeLessThan(600);
  });

  it("selects checkpoints monotonically by val mean IoU", () => {
    const history = overfit.result.history;
    // the saved best must be the running maximum, and the recorded epoch
    // the first one attaining it
    let runningBest = -Infinity;
    let bestEpoch = 0;
    for (const entry of history) {
      if (entry.valMeanIou > runningBest) {
        runningBest = entry.valMeanIou;
        bestEpoch = entry.epoch;
      }
    }
    expect(checkpoint.meta.bestValIou).toBeCloseTo(runningBest, 12);
    expect(checkpoint.meta.epoch).toBe(bestEpoch);
    expect(overfit.result.bestEpoch).toBe(bestEpoch);
    expect(overfit.result.bestValIou).toBeCloseTo(runningBest, 12);
  });

  it("drives the training loss down", () => {
    const history = overfit.result.history;
    expect(history[4].trainLoss).toBeLessThan(history[0].trainLoss);
    expect(history[history.length - 1].trainLoss).toBeLessThan(history[0].trainLoss * 0.5);
  });
});

describe("epoch log", () => {
  it("writes the CSV with the contract header and one row per epoch", () => {
    const logPath = path.join(overfit.checkpointDir, "training_log.csv");
    expect(existsSync(logPath)).toBe(true);
    const lines = readFileSync(logPath, "utf8").trim().split("\n");
    expect(lines[0]).toBe("epoch,train_loss,val_loss,val_mean_iou,lr");
    expect(lines).toHaveLength(51);
    lines.slice(1).forEach((line, i) => {
      const fields = line.split(",");
      expect(fields).toHaveLength(5);
      expect(Number(fields[0])).toBe(i + 1);
      for (const value of fields.slice(1)) {
        expect(Number.isFinite(Number(value))).toBe(true);
      }
      expect(Number(fields[4])).toBeGreaterThan(0);
    });
  });
});

describe("checkpoint persistence", () => {
  it("stores epoch, fingerprint, and normalization statistics", () => {
    const meta = checkpoint.meta;
    expect(meta.backbone).toBe("efficientnet-b2");
    expect(meta.inputChannels).toBe(3);
    expect(meta.tileSize).toBe(16);
    expect(meta.fingerprint).toBe(
      configFingerprint({
        backbone: "efficientnet-b2",
        inputChannels: 3,
        tileSize: 16,
        widthScale: 0.5,
        depth: 2,
      })
    );
    expect(meta.normalization.mean).toHaveLength(3);
    expect(meta.normalization.std).toHaveLength(3);
    expect(meta.normalization).toEqual(overfit.result.normalization);
  });

  it("round-trips weights: the loaded model reproduces the best val mean IoU", () => {
    const manifest = loadManifest(overfit.manifestPath);
    const valTiles = loadTiles(splitRecords(manifest, "val"), 3);
    const evalResult = evaluateModel(checkpoint.model, valTiles, 3, checkpoint.meta.normalization);
    expect(evalResult.meanIou).toBeCloseTo(overfit.result.bestValIou, 9);
  });
});

describe("transfer learning", () => {
  it("starts better from a checkpoint than from random weights at epoch 0", () => {
    const manifestPath = makeWorld(path.join(tmp, "transfer"), {
      seed: 22,
      splits: ["train", "train", "train", "train", "val", "val"],
    });
    const manifest = loadManifest(manifestPath);
    const trainTiles = loadTiles(splitRecords(manifest, "train"), 3);
    const valTiles = loadTiles(splitRecords(manifest, "val"), 3);
    const stats = computeNormalization(trainTiles, 3);

    const fresh = buildModel({
      backbone: "efficientnet-b2",
      inputChannels: 3,
      tileSize: 16,
      widthScale: 0.5,
      depth: 2,
      seed: 99,
    });
    const freshEval = evaluateModel(fresh, valTiles, 3, stats);
    const warmEval = evaluateModel(checkpoint.model, valTiles, 3, stats);
    fresh.dispose();
    expect(warmEval.meanIou).toBeGreaterThan(freshEval.meanIou);
    expect(warmEval.meanIou).toBeGreaterThan(0.8);
    expect(warmEval.loss).toBeLessThan(freshEval.loss);
  });

  it("resumes training from an init checkpoint", async () => {
    const manifestPath = makeWorld(path.join(tmp, "resume"), {
      seed: 23,
      splits: ["train", "train", "train", "train", "val", "val"],
    });
    const result = await train({
      manifestPath,
      checkpointDir: path.join(tmp, "ckpt_resume"),
      inputChannels: 3,
      epochs: 2,
      batchSize: 4,
      learningRate: 1e-3,
      seed: 5,
      widthScale: 0.5,
      depth: 2,
      initCheckpoint: overfit.checkpointDir,
    });
    expect(result.history).toHaveLength(2);
    // warm weights keep the first measured val mean IoU high
    expect(result.history[0].valMeanIou).toBeGreaterThan(0.8);
  }, 120_000);

  it("rejects an init checkpoint from an incompatible configuration", async () => {
    const manifestPath = makeWorld(path.join(tmp, "mismatch"), {
      seed: 24,
      splits: ["train", "train", "val"],
    });
    await expect(
      train({
        manifestPath,
        checkpointDir: path.join(tmp, "ckpt_mismatch"),
        inputChannels: 3,
        epochs: 1,
        batchSize: 2,
        widthScale: 0.25,
        depth: 2,
        initCheckpoint: overfit.checkpointDir,
      })
    ).rejects.toThrow(ConfigError);
  }, 120_000);
});

describe("learning rate schedule", () => {
  it("halves the rate after val-loss plateaus and records it per epoch", async () => {
    const manifestPath = makeWorld(path.join(tmp, "noise"), {
      seed: 77,
      splits: ["train", "train", "train", "train", "val", "val"],
      separable: false,
      noise: 1.0,
    });
    const result = await train({
      manifestPath,
      checkpointDir: path.join(tmp, "ckpt_noise"),
      inputChannels: 3,
      epochs: 8,
      batchSize: 4,
      seed: 9,
      widthScale: 0.25,
      depth: 2,
      lrPatience: 1,
    });
    const rates = result.history.map((h) => h.lr);
    expect(rates[0]).toBe(1e-3);
    expect(rates[rates.length - 1]).toBeLessThan(rates[0]);
    for (let i = 1; i < rates.length; i++) {
      expect(rates[i]).toBeLessThanOrEqual(rates[i - 1]);
      expect(rates[i]).toBeGreaterThanOrEqual(1e-6);
    }
  }, 120_000);
});

describe("seeded determinism", () => {
  const splits: Split[] = ["train", "train", "train", "train", "val", "val"];

  async function shortRun(worldDir: string, ckptDir: string, seed: number) {
    const manifestPath = makeWorld(path.join(tmp, worldDir), { seed: 33, splits });
    return train({
      manifestPath,
      checkpointDir: path.join(tmp, ckptDir),
      inputChannels: 3,
      epochs: 3,
      batchSize: 2,
      seed,
      widthScale: 0.25,
      depth: 2,
    });
  }

  it("replays an identical history for the same seed", async () => {
    const a = await shortRun("det_a", "ckpt_det_a", 12);
    const b = await shortRun("det_b", "ckpt_det_b", 12);
    expect(a.history).toEqual(b.history);
    expect(a.bestValIou).toBe(b.bestValIou);
  }, 120_000);

  it("diverges for a different seed", async () => {
    const a = await shortRun("det_c", "ckpt_det_c", 12);
    const b = await shortRun("det_d", "ckpt_det_d", 13);
    expect(a.history[0].trainLoss).not.toBe(b.history[0].trainLoss);
  }, 120_000);
});

describe("config and input validation", () => {
  const bogus = path.join(tmp, "does-not-exist.json");

  it("rejects non-positive epochs and batch sizes before touching data", async () => {
    await expect(
      train({ manifestPath: bogus, checkpointDir: tmp, inputChannels: 3, epochs: 0, batchSize: 1 })
    ).rejects.toThrow(ConfigError);
    await expect(
      train({ manifestPath: bogus, checkpointDir: tmp, inputChannels: 3, epochs: 1, batchSize: 0 })
    ).rejects.toThrow(ConfigError);
  });

  it("rejects unknown backbones and channel counts", async () => {
    await expect(
      train({
        manifestPath: bogus,
        checkpointDir: tmp,
        backbone: "vgg-16",
        inputChannels: 3,
        epochs: 1,
        batchSize: 1,
      })
    ).rejects.toThrow(/vgg-16/);
    await expect(
      train({ manifestPath: bogus, checkpointDir: tmp, inputChannels: 5, epochs: 1, batchSize: 1 })
    ).rejects.toThrow(ConfigError);
  });

  it("rejects a non-positive learning rate", async () => {
    await expect(
      train({
        manifestPath: bogus,
        checkpointDir: tmp,
        inputChannels: 3,
        epochs: 1,
        batchSize: 1,
        learningRate: 0,
      })
    ).rejects.toThrow(ConfigError);
  });

  it("requires both a train and a val split", async () => {
    const noTrain = makeWorld(path.join(tmp, "no_train"), { seed: 41, splits: ["val", "test"] });
    await expect(
      train({ manifestPath: noTrain, checkpointDir: path.join(tmp, "x1"), inputChannels: 3, epochs: 1, batchSize: 1 })
    ).rejects.toThrow(/train/);
    const noVal = makeWorld(path.join(tmp, "no_val"), { seed: 42, splits: ["train", "test"] });
    await expect(
      train({ manifestPath: noVal, checkpointDir: path.join(tmp, "x2"), inputChannels: 3, epochs: 1, batchSize: 1 })
    ).rejects.toThrow(/val/);
  });

  it("rejects tiles whose channel count disagrees with the config", async () => {
    const world = makeWorld(path.join(tmp, "chan"), { seed: 43, splits: ["train", "val"] });
    await expect(
      train({ manifestPath: world, checkpointDir: path.join(tmp, "x3"), inputChannels: 4, epochs: 1, batchSize: 1 })
    ).rejects.toThrow(DataError);
  });
});

describe("configFingerprint", () => {
  it("is stable for equal configurations and distinct otherwise", () => {
    const base = { backbone: "resnet-50", inputChannels: 4, tileSize: 256 };
    expect(configFingerprint(base)).toBe(configFingerprint({ ...base }));
    expect(configFingerprint(base)).not.toBe(configFingerprint({ ...base, tileSize: 384 }));
    expect(configFingerprint(base)).not.toBe(configFingerprint({ ...base, widthScale: 0.5 }));
    expect(configFingerprint(base)).toHaveLength(16);
  });
});
