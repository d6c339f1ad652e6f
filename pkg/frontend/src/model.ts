/**
 * Encoder-decoder segmentation model builder.
 *
 * A U-Net: each encoder level is a pair of 3x3 conv blocks followed by a
 * 2x2 max-pool, the decoder mirrors it with upsampling and skip
 * concatenation, and a 1x1 softmax head emits 3 class probabilities.
 * Backbone names select the encoder widths and depths (and, for the
 * SE variant, squeeze-excitation gating); at this scale they are
 * faithful stand-ins for the named architectures, not weight-compatible
 * ports, since pretrained encoders aren't available offline.
 */

import * as tf from "@tensorflow/tfjs";

import { ConfigError } from "./errors.js";

export interface BackboneSpec {
  filters: number[];
  blocksPerLevel: number;
  squeezeExcite: boolean;
}

export const BACKBONES: Record<string, BackboneSpec> = {
  "efficientnet-b2": { filters: [16, 24, 48, 88], blocksPerLevel: 2, squeezeExcite: false },
  "efficientnet-b7": { filters: [32, 48, 80, 160], blocksPerLevel: 3, squeezeExcite: false },
  "resnet-50": { filters: [32, 64, 128, 256], blocksPerLevel: 2, squeezeExcite: false },
  "resnet-152": { filters: [32, 64, 128, 256], blocksPerLevel: 3, squeezeExcite: false },
  "se-resnext-50": { filters: [32, 64, 128, 256], blocksPerLevel: 2, squeezeExcite: true },
};

export const DEFAULT_BACKBONE = "efficientnet-b2";

export interface ModelConfig {
  backbone: string;
  inputChannels: number;
  tileSize: number;
  /** Multiplies every encoder width; lets tests shrink the model. */
  widthScale?: number;
  /** Encoder depth (pooling steps); default uses the full backbone spec. */
  depth?: number;
  seed?: number;
}

export function validateChannels(channels: number): void {
  if (channels !== 3 && channels !== 4 && channels !== 12) {
    throw new ConfigError(`input_channels must be 3, 4, or 12, got ${channels}`);
  }
}

function convBlock(
  x: tf.SymbolicTensor,
  filters: number,
  blocks: number,
  seedRef: { seed: number },
  name: string
): tf.SymbolicTensor {
  let out = x;
  for (let i = 0; i < blocks; i++) {
    out = tf.layers
      .conv2d({
        filters,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed: seedRef.seed++ }),
        name: `${name}_conv${i}`,
      })
      .apply(out) as tf.SymbolicTensor;
  }
  return out;
}

function squeezeExciteBlock(
  x: tf.SymbolicTensor,
  filters: number,
  seedRef: { seed: number },
  name: string
): tf.SymbolicTensor {
  // channel gating: global pool -> bottleneck dense -> sigmoid scale
  const squeezed = tf.layers
    .globalAveragePooling2d({ name: `${name}_pool` })
    .apply(x) as tf.SymbolicTensor;
  const reduced = tf.layers
    .dense({
      units: Math.max(4, Math.floor(filters / 4)),
      activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seedRef.seed++ }),
      name: `${name}_reduce`,
    })
    .apply(squeezed) as tf.SymbolicTensor;
  const gates = tf.layers
    .dense({
      units: filters,
      activation: "sigmoid",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seedRef.seed++ }),
      name: `${name}_gate`,
    })
    .apply(reduced) as tf.SymbolicTensor;
  const reshaped = tf.layers
    .reshape({ targetShape: [1, 1, filters], name: `${name}_reshape` })
    .apply(gates) as tf.SymbolicTensor;
  return tf.layers
    .multiply({ name: `${name}_scale` })
    .apply([x, reshaped]) as tf.SymbolicTensor;
}

/** Build the segmentation network for one tile/channel layout. */
export function buildModel(config: ModelConfig): tf.LayersModel {
  const spec = BACKBONES[config.backbone];
  if (spec === undefined) {
    throw new ConfigError(
      `unknown backbone ${JSON.stringify(config.backbone)}; ` +
        `known: ${Object.keys(BACKBONES).join(", ")}`
    );
  }
  validateChannels(config.inputChannels);
  const depth = config.depth ?? spec.filters.length;
  if (depth < 1 || depth > spec.filters.length) {
    throw new ConfigError(`depth must be 1..${spec.filters.length}, got ${depth}`);
  }
  const scale = config.widthScale ?? 1;
  if (!(scale > 0)) {
    throw new ConfigError(`widthScale must be positive, got ${scale}`);
  }
  const size = config.tileSize;
  if (size % 2 ** depth !== 0) {
    throw new ConfigError(`tile size ${size} is not divisible by 2^${depth}`);
  }
  const filters = spec.filters.slice(0, depth).map((f) => Math.max(4, Math.round(f * scale)));
  const seedRef = { seed: (config.seed ?? 0) * 1000 + 1 };

  const input = tf.input({ shape: [size, size, config.inputChannels], name: "tile" });
  let x = input;
  const skips: tf.SymbolicTensor[] = [];
  filters.forEach((f, level) => {
    x = convBlock(x, f, spec.blocksPerLevel, seedRef, `enc${level}`);
    if (spec.squeezeExcite) {
      x = squeezeExciteBlock(x, f, seedRef, `enc${level}_se`);
    }
    skips.push(x);
    x = tf.layers.maxPooling2d({ poolSize: 2, name: `enc${level}_down` }).apply(x) as tf.SymbolicTensor;
  });

  x = convBlock(x, filters[filters.length - 1] * 2, spec.blocksPerLevel, seedRef, "bottleneck");

  for (let level = filters.length - 1; level >= 0; level--) {
    x = tf.layers.upSampling2d({ size: [2, 2], name: `dec${level}_up` }).apply(x) as tf.SymbolicTensor;
    x = tf.layers
      .concatenate({ name: `dec${level}_skip` })
      .apply([x, skips[level]]) as tf.SymbolicTensor;
    x = convBlock(x, filters[level], spec.blocksPerLevel, seedRef, `dec${level}`);
  }

  const head = tf.layers
    .conv2d({
      filters: 3,
      kernelSize: 1,
      activation: "softmax",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seedRef.seed++ }),
      name: "class_probabilities",
    })
    .apply(x) as tf.SymbolicTensor;

  return tf.model({ inputs: input, outputs: head, name: `unet_${config.backbone}` });
}
