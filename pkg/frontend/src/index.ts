export { FieldtrainError, TiffError, ManifestError, ConfigError, DataError } from "./errors.js";
export {
  readGeoTiff,
  writeGeoTiff,
  type GeoTiffImage,
  type TileGeometry,
} from "./tiff.js";
export {
  loadManifest,
  splitRecords,
  combineManifests,
  writeManifest,
  MANIFEST_SCHEMA,
  SPLITS,
  type Manifest,
  type TileRecord,
  type Split,
} from "./manifest.js";
export {
  accumulateConfusion,
  emptyCounts,
  iou,
  meanIou,
  CLASSES,
  NODATA_CODE,
  type ConfusionCounts,
} from "./metrics.js";
export { focalDiceLoss, DEFAULT_GAMMA, DEFAULT_SMOOTH, PROB_EPSILON } from "./loss.js";
export {
  buildModel,
  validateChannels,
  BACKBONES,
  DEFAULT_BACKBONE,
  type ModelConfig,
  type BackboneSpec,
} from "./model.js";
export {
  loadTile,
  loadTiles,
  planesToHwc,
  computeNormalization,
  normalizePixels,
  oneHotMask,
  tilesToTensors,
  type LoadedTile,
  type NormalizationStats,
} from "./data.js";
export {
  saveCheckpoint,
  loadCheckpoint,
  configFingerprint,
  type Checkpoint,
  type CheckpointMeta,
} from "./checkpoint.js";
export {
  train,
  evaluateModel,
  mulberry32,
  LOG_HEADER,
  type TrainConfig,
  type TrainResult,
  type EpochLog,
  type EvalResult,
} from "./train.js";
export { predict, predictTile, type PredictConfig, type PredictResult } from "./predict.js";
