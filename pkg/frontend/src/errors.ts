/** Base class for every error this package raises deliberately. */
export class FieldtrainError extends Error {}

/** Malformed or unsupported TIFF content. */
export class TiffError extends FieldtrainError {}

/** Manifest files that don't match the expected schema or combine rules. */
export class ManifestError extends FieldtrainError {}

/** Invalid training configuration. */
export class ConfigError extends FieldtrainError {}

/** Tiles that don't match the model or each other (channels, sizes, splits). */
export class DataError extends FieldtrainError {}
