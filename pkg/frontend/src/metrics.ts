/**
 * Pooled IoU over class-code arrays, matching the evaluation side of the
 * pipeline: pixels are pooled across tiles before the ratio, a class absent
 * from prediction and truth is undefined and excluded from the mean, and
 * code 255 marks pixels outside the labeled area.
 */

import { DataError } from "./errors.js";

export const CLASSES = [0, 1, 2] as const;
export const NODATA_CODE = 255;

export interface ConfusionCounts {
  tp: [number, number, number];
  fp: [number, number, number];
  fn: [number, number, number];
}

export function emptyCounts(): ConfusionCounts {
  return { tp: [0, 0, 0], fp: [0, 0, 0], fn: [0, 0, 0] };
}

export function accumulateConfusion(
  pred: Uint8Array,
  truth: Uint8Array,
  counts: ConfusionCounts = emptyCounts()
): ConfusionCounts {
  if (pred.length !== truth.length) {
    throw new DataError(`prediction holds ${pred.length} pixels, truth ${truth.length}`);
  }
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i];
    const t = truth[i];
    if (p === NODATA_CODE || t === NODATA_CODE) continue;
    if (p === t) {
      counts.tp[p]++;
    } else {
      counts.fp[p]++;
      counts.fn[t]++;
    }
  }
  return counts;
}

/** IoU for one class, or null when the class never occurs. */
export function iou(counts: ConfusionCounts, cls: 0 | 1 | 2): number | null {
  const denom = counts.tp[cls] + counts.fp[cls] + counts.fn[cls];
  if (denom === 0) return null;
  return counts.tp[cls] / denom;
}

/** Mean over the defined per-class IoUs; null when every class is undefined. */
export function meanIou(counts: ConfusionCounts): number | null {
  const defined = CLASSES.map((c) => iou(counts, c)).filter((v): v is number => v !== null);
  if (defined.length === 0) return null;
  return defined.reduce((a, b) => a + b, 0) / defined.length;
}
