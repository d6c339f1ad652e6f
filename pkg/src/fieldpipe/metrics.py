"""Confusion-count accumulation and IoU evaluation of predicted masks.

Counts form a commutative monoid under addition, so tiles can be evaluated
in any order (or in parallel) and reduced. IoU per class is TP/(TP+FP+FN);
a class absent from both sides has no defined IoU and is excluded from the
macro mean rather than counted as zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PredictionError
from .mask import MASK_NODATA, ClassMask, read_class_mask
from .tiling import TileManifest

log = logging.getLogger(__name__)

CLASSES = (0, 1, 2)

PREDICTION_SUFFIX = "_pred.tif"


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class pixel confusion totals over any number of mask pairs."""

    tp: tuple[int, int, int] = (0, 0, 0)
    fp: tuple[int, int, int] = (0, 0, 0)
    fn: tuple[int, int, int] = (0, 0, 0)
    tn: tuple[int, int, int] = (0, 0, 0)
    valid_pixels: int = 0

    def __post_init__(self):
        for cls in CLASSES:
            total = self.tp[cls] + self.fp[cls] + self.fn[cls] + self.tn[cls]
            if total != self.valid_pixels:
                raise ValueError(
                    f"class {cls} counts sum to {total}, not valid_pixels="
                    f"{self.valid_pixels}"
                )

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        pair = lambda a, b: tuple(x + y for x, y in zip(a, b))
        return ConfusionCounts(
            tp=pair(self.tp, other.tp),
            fp=pair(self.fp, other.fp),
            fn=pair(self.fn, other.fn),
            tn=pair(self.tn, other.tn),
            valid_pixels=self.valid_pixels + other.valid_pixels,
        )


@dataclass(frozen=True)
class IouReport:
    """Dataset-level IoU plus the per-tile breakdown."""

    per_class_iou: dict[int, float | None]
    mean_iou: float
    per_tile: tuple[tuple[str, float | None], ...]
    valid_pixels: int

    def to_dict(self) -> dict:
        return {
            "per_class_iou": {str(c): self.per_class_iou[c] for c in CLASSES},
            "mean_iou": self.mean_iou,
            "per_tile": [
                {"tile_id": tile_id, "mean_iou": value}
                for tile_id, value in self.per_tile
            ],
            "valid_pixels": self.valid_pixels,
        }


def _codes(mask) -> np.ndarray:
    return mask.codes if isinstance(mask, ClassMask) else np.asarray(mask)


def accumulate_confusion(
    pred, truth, counts: ConfusionCounts | None = None
) -> ConfusionCounts:
    """Add one mask pair's confusion to the running counts (pure).

    Accepts ClassMask instances or plain uint8 code arrays.
    """
    if counts is None:
        counts = ConfusionCounts()
    pred_codes, truth_codes = _codes(pred), _codes(truth)
    if pred_codes.shape != truth_codes.shape:
        raise PredictionError(
            f"prediction shape {pred_codes.shape} does not match truth "
            f"{truth_codes.shape}"
        )
    valid = (pred_codes != MASK_NODATA) & (truth_codes != MASK_NODATA)
    p = pred_codes[valid]
    t = truth_codes[valid]
    tp, fp, fn, tn = [], [], [], []
    for cls in CLASSES:
        in_p = p == cls
        in_t = t == cls
        tp.append(int((in_p & in_t).sum()))
        fp.append(int((in_p & ~in_t).sum()))
        fn.append(int((~in_p & in_t).sum()))
        tn.append(int((~in_p & ~in_t).sum()))
    delta = ConfusionCounts(tuple(tp), tuple(fp), tuple(fn), tuple(tn), int(valid.sum()))
    return counts + delta


def iou(counts: ConfusionCounts, cls: int) -> float | None:
    """TP/(TP+FP+FN) for one class; None when the class is absent from both sides."""
    if cls not in CLASSES:
        raise ValueError(f"unknown class code {cls}")
    denominator = counts.tp[cls] + counts.fp[cls] + counts.fn[cls]
    if denominator == 0:
        return None
    return counts.tp[cls] / denominator


def mean_iou(counts: ConfusionCounts) -> float:
    """Macro mean over the defined per-class IoUs."""
    defined = [v for v in (iou(counts, cls) for cls in CLASSES) if v is not None]
    if not defined:
        raise ValueError("mean IoU undefined: every class absent from both sides")
    return sum(defined) / len(defined)


def _mean_iou_or_none(counts: ConfusionCounts) -> float | None:
    try:
        return mean_iou(counts)
    except ValueError:
        return None


def _read_prediction(path: Path) -> ClassMask:
    """A prediction is either a class mask or a 3-band probability raster."""
    from .geotiff import read_geotiff

    raw = read_geotiff(path)
    if raw.data.shape[0] == 1:
        return read_class_mask(path)
    from .postprocess import PredictionRaster, argmax_classes
    from .raster import Raster

    raster = Raster(
        geometry=raw.geometry,
        data=raw.data,
        band_names=raw.band_names or ("p0", "p1", "p2"),
        nodata=raw.nodata if raw.nodata is not None else -9999.0,
    )
    return argmax_classes(PredictionRaster(raster))


def evaluate_manifest(
    manifest: TileManifest,
    manifest_dir: str | Path,
    predictions_dir: str | Path,
    split: str | None = None,
) -> IouReport:
    """Dataset IoU over the manifest's tiles from per-tile prediction files.

    Ground-truth masks resolve relative to manifest_dir; predictions are
    {tile_id}_pred.tif files under predictions_dir, either single-band class
    masks or 3-band probability rasters.
    """
    manifest_dir = Path(manifest_dir)
    predictions_dir = Path(predictions_dir)
    records = [r for r in manifest.records if split is None or r.split == split]
    if not records:
        raise PredictionError(f"no tiles selected (split={split!r})")

    missing = [
        r.tile_id
        for r in records
        if not (predictions_dir / f"{r.tile_id}{PREDICTION_SUFFIX}").exists()
    ]
    if missing:
        raise PredictionError(
            f"missing prediction files for tiles: {', '.join(missing)}"
        )

    total = ConfusionCounts()
    per_tile = []
    for record in records:
        truth = read_class_mask(manifest_dir / record.mask_path)
        pred = _read_prediction(
            predictions_dir / f"{record.tile_id}{PREDICTION_SUFFIX}"
        )
        if pred.geometry != truth.geometry:
            log.warning(
                "tile %s: prediction georeferencing differs from truth", record.tile_id
            )
        tile_counts = accumulate_confusion(pred, truth)
        total = total + tile_counts
        per_tile.append((record.tile_id, _mean_iou_or_none(tile_counts)))

    return IouReport(
        per_class_iou={cls: iou(total, cls) for cls in CLASSES},
        mean_iou=mean_iou(total),
        per_tile=tuple(per_tile),
        valid_pixels=total.valid_pixels,
    )


def format_report(report: IouReport) -> str:
    """Human-readable table of the report."""
    lines = ["class  iou", "-----  ---------"]
    for cls in CLASSES:
        value = report.per_class_iou[cls]
        shown = f"{value:.4f}" if value is not None else "undefined"
        lines.append(f"{cls:>5}  {shown}")
    lines.append(f"mean   {report.mean_iou:.4f}")
    lines.append(f"valid pixels: {report.valid_pixels}")
    if report.per_tile:
        lines.append("")
        lines.append("tile                    mean iou")
        for tile_id, value in report.per_tile:
            shown = f"{value:.4f}" if value is not None else "undefined"
            lines.append(f"{tile_id:<22}  {shown}")
    return "\n".join(lines)
