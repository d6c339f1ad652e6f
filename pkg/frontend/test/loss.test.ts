import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import {
  focalDiceLoss,
  DEFAULT_GAMMA,
  DEFAULT_SMOOTH,
  PROB_EPSILON,
} from "../src/loss.js";
import { DataError } from "../src/errors.js";
import { mulberry32 } from "../src/train.js";

/**
 * Independent float64 re-derivation of the loss, written directly from
 * its definition (per-pixel categorical focal term plus smoothed dice
 * complement averaged over the 3 classes). The production code never
 * calls this; it exists so gradients can be checked against an oracle
 * that shares no code or precision with the implementation under test.
 */
function focalDiceF64(
  pred: readonly number[],
  truth: readonly number[],
  gamma: number,
  smooth: number
): number {
  const pixels = pred.length / 3;
  let focal = 0;
  const intersection = [0, 0, 0];
  const truthSum = [0, 0, 0];
  const predSum = [0, 0, 0];
  for (let i = 0; i < pred.length; i++) {
    const c = i % 3;
    const p = Math.min(Math.max(pred[i], PROB_EPSILON), 1 - PROB_EPSILON);
    const t = truth[i];
    focal += t * Math.pow(1 - p, gamma) * -Math.log(p);
    intersection[c] += t * p;
    truthSum[c] += t;
    predSum[c] += p;
  }
  focal /= pixels;
  let diceSum = 0;
  for (let c = 0; c < 3; c++) {
    diceSum += (2 * intersection[c] + smooth) / (truthSum[c] + predSum[c] + smooth);
  }
  return focal + (1 - diceSum / 3);
}

/** One-hot truth where pixel i carries class codes[i]; 255 rows stay zero. */
function oneHot(codes: number[]): number[] {
  const out = new Array<number>(codes.length * 3).fill(0);
  codes.forEach((code, i) => {
    if (code !== 255) out[i * 3 + code] = 1;
  });
  return out;
}

function toyCase(seed: number, pixelCount: number): { pred: number[]; truth: number[] } {
  const rand = mulberry32(seed);
  // float32-representable base points so the implementation and the
  // oracle evaluate the same function at identical coordinates
  const pred = Array.from({ length: pixelCount * 3 }, () => Math.fround(0.1 + 0.8 * rand()));
  const codes = Array.from({ length: pixelCount }, (_, i) =>
    i === pixelCount - 1 ? 255 : i % 3
  );
  return { pred, truth: oneHot(codes) };
}

describe("focalDiceLoss values", () => {
  it("is non-negative on arbitrary predictions", () => {
    const { pred, truth } = toyCase(5, 12);
    const loss = focalDiceLoss(tf.tensor(pred, [1, 4, 3, 3]), tf.tensor(truth, [1, 4, 3, 3]));
    expect(loss.dataSync()[0]).toBeGreaterThanOrEqual(0);
  });

  it("collapses to at most 10x the probability epsilon at the truth", () => {
    const codes = Array.from({ length: 12 }, (_, i) => i % 3);
    const truth = oneHot(codes);
    const loss = focalDiceLoss(tf.tensor(truth, [1, 3, 4, 3]), tf.tensor(truth, [1, 3, 4, 3]));
    const value = loss.dataSync()[0];
    expect(value).toBeGreaterThanOrEqual(0);
    expect(value).toBeLessThanOrEqual(10 * PROB_EPSILON);
  });

  it("scores the uniform prediction clearly worse than the perfect one", () => {
    const codes = Array.from({ length: 12 }, (_, i) => i % 3);
    const truth = oneHot(codes);
    const shape = [1, 3, 4, 3];
    const perfect = focalDiceLoss(tf.tensor(truth, shape), tf.tensor(truth, shape)).dataSync()[0];
    const uniform = focalDiceLoss(
      tf.fill(shape, 1 / 3),
      tf.tensor(truth, shape)
    ).dataSync()[0];
    expect(uniform).toBeGreaterThan(perfect);
    expect(uniform).toBeGreaterThan(0.5);
  });

  it("agrees with the float64 oracle on loss values", () => {
    for (const seed of [1, 2, 3]) {
      const { pred, truth } = toyCase(seed, 16);
      const shape = [1, 4, 4, 3];
      const got = focalDiceLoss(tf.tensor(pred, shape), tf.tensor(truth, shape)).dataSync()[0];
      const want = focalDiceF64(pred, truth, DEFAULT_GAMMA, DEFAULT_SMOOTH);
      expect(Math.abs(got - want)).toBeLessThanOrEqual(1e-4);
    }
  });

  it("rejects mismatched shapes", () => {
    expect(() => focalDiceLoss(tf.zeros([1, 2, 2, 3]), tf.zeros([1, 2, 3, 3]))).toThrow(DataError);
  });

  it("rejects a non-3 class axis", () => {
    expect(() => focalDiceLoss(tf.zeros([1, 2, 2, 4]), tf.zeros([1, 2, 2, 4]))).toThrow(DataError);
  });
});

describe("acceptance: analytic gradient vs central finite differences", () => {
  const cases: Array<{ seed: number; pixels: number; shape: number[]; gamma: number; smooth: number }> = [
    { seed: 11, pixels: 4, shape: [1, 2, 2, 3], gamma: DEFAULT_GAMMA, smooth: DEFAULT_SMOOTH },
    { seed: 12, pixels: 32, shape: [2, 4, 4, 3], gamma: DEFAULT_GAMMA, smooth: DEFAULT_SMOOTH },
    { seed: 13, pixels: 16, shape: [1, 4, 4, 3], gamma: 1.5, smooth: 1e-3 },
  ];

  for (const { seed, pixels, shape, gamma, smooth } of cases) {
    it(`matches to 1e-3 relative on a ${shape.join("x")} tensor (gamma=${gamma})`, () => {
      const { pred, truth } = toyCase(seed, pixels);
      const truthT = tf.tensor(truth, shape);
      const gradFn = tf.grads((p: tf.Tensor) => focalDiceLoss(p, truthT, gamma, smooth));
      const [analytic] = gradFn([tf.tensor(pred, shape)]);
      const got = analytic.dataSync();
      expect(got).toHaveLength(pred.length);

      const h = 1e-5;
      for (let k = 0; k < pred.length; k++) {
        const bumped = pred.slice();
        bumped[k] = pred[k] + h;
        const fPlus = focalDiceF64(bumped, truth, gamma, smooth);
        bumped[k] = pred[k] - h;
        const fMinus = focalDiceF64(bumped, truth, gamma, smooth);
        const expected = (fPlus - fMinus) / (2 * h);
        const tolerance = 1e-3 * Math.max(Math.abs(got[k]), Math.abs(expected), 1e-6);
        expect(
          Math.abs(got[k] - expected),
          `coordinate ${k}: analytic ${got[k]} vs finite-difference ${expected}`
        ).toBeLessThanOrEqual(tolerance);
      }
    });
  }
});
