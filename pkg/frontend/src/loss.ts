/**
 * Categorical focal dice loss for 3-class segmentation.
 *
 * The scalar is the sum of two terms: a categorical focal loss (mean over
 * pixels of -(1-p)^gamma * log(p) on the true class) and a dice loss
 * (one minus the smoothed dice coefficient, averaged over the classes).
 * Focusing gamma and dice smoothing default to 2.0 and 1e-5.
 */

import * as tf from "@tensorflow/tfjs";

import { DataError } from "./errors.js";

export const DEFAULT_GAMMA = 2.0;
export const DEFAULT_SMOOTH = 1e-5;

// probability clip keeping log() finite; the span is wide enough that the
// perfect-prediction loss stays below 10x this epsilon
export const PROB_EPSILON = 1e-7;

export function focalDiceLoss(
  pred: tf.Tensor,
  truth: tf.Tensor,
  gamma: number = DEFAULT_GAMMA,
  smooth: number = DEFAULT_SMOOTH
): tf.Scalar {
  if (pred.shape.length !== truth.shape.length || pred.shape.join() !== truth.shape.join()) {
    throw new DataError(
      `prediction shape [${pred.shape}] does not match truth shape [${truth.shape}]`
    );
  }
  const channels = pred.shape[pred.shape.length - 1];
  if (channels !== 3) {
    throw new DataError(`expected 3 class channels, got ${channels}`);
  }
  return tf.tidy(() => {
    const p = tf.clipByValue(pred, PROB_EPSILON, 1 - PROB_EPSILON);
    const t = truth;

    const focalPerEntry = tf.mul(
      tf.mul(t, tf.pow(tf.sub(1, p), gamma)),
      tf.neg(tf.log(p))
    );
    // mean over pixels, sum over the class axis
    const pixels = p.size / 3;
    const focal = tf.div(tf.sum(focalPerEntry), pixels);

    const reduceAxes = Array.from({ length: p.shape.length - 1 }, (_, i) => i);
    const intersection = tf.sum(tf.mul(t, p), reduceAxes);
    const totals = tf.add(tf.sum(t, reduceAxes), tf.sum(p, reduceAxes));
    const dicePerClass = tf.div(
      tf.add(tf.mul(intersection, 2), smooth),
      tf.add(totals, smooth)
    );
    const dice = tf.sub(1, tf.mean(dicePerClass));

    return tf.add(focal, dice) as tf.Scalar;
  });
}
