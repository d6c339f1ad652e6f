"""Report rendering: JSON, CSV, and matplotlib figures for stats and evaluation.

Every writer is deterministic — rerunning on the same inputs reproduces the
files byte for byte (PNG metadata that would embed tool versions is stripped).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import CLASSES, IouReport
from .postprocess import FieldSizeStats

CLASS_NAMES = {0: "non-crop", 1: "interior", 2: "boundary"}

# savefig would otherwise stamp the renderer version into the PNG
_PNG_METADATA = {"Software": None}


def bin_labels(edges) -> list[str]:
    labels = [f"{lo:g}–{hi:g}" for lo, hi in zip(edges, edges[1:])]
    labels.append(f"≥{edges[-1]:g}")
    return labels


def save_stats_report(
    stats: FieldSizeStats, out_dir: str | Path, basename: str = "field_stats"
) -> dict[str, Path]:
    """Write field-size stats as JSON + CSV + histogram figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / f"{basename}.json",
        "csv": out_dir / f"{basename}.csv",
        "figure": out_dir / f"{basename}.png",
    }
    paths["json"].write_text(
        json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )

    labels = bin_labels(stats.bin_edges)
    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_ha", "percent"])
        for label, percent in zip(labels, stats.percentages):
            writer.writerow([label, f"{percent:.6f}"])

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(labels)), stats.percentages, color="#4c9a62")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("share of fields [%]")
    ax.set_xlabel("field size [ha]")
    ax.set_title(f"Field sizes (n={stats.count}, median {stats.median_ha:.2f} ha)")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(paths["figure"], metadata=_PNG_METADATA)
    plt.close(fig)
    return paths


def save_iou_report(
    report: IouReport, out_dir: str | Path, basename: str = "evaluation"
) -> dict[str, Path]:
    """Write an IoU report as JSON + per-tile CSV + per-class bar figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / f"{basename}.json",
        "csv": out_dir / f"{basename}_per_tile.csv",
        "figure": out_dir / f"{basename}.png",
    }
    paths["json"].write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )

    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "mean_iou"])
        for tile_id, value in report.per_tile:
            writer.writerow([tile_id, "" if value is None else f"{value:.6f}"])

    values = [report.per_class_iou[c] for c in CLASSES]
    heights = [0.0 if v is None else v for v in values]
    labels = [
        f"{CLASS_NAMES[c]}" + ("\n(undefined)" if values[i] is None else "")
        for i, c in enumerate(CLASSES)
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(range(len(CLASSES)), heights, color=["#888", "#4c9a62", "#b5541c"])
    for bar, value in zip(bars, values):
        if value is not None:
            ax.text(
                bar.get_x() + bar.get_width() / 2,
                value + 0.01,
                f"{value:.3f}",
                ha="center",
                va="bottom",
                fontsize=9,
            )
    ax.axhline(report.mean_iou, linestyle="--", color="black", alpha=0.6)
    ax.text(
        len(CLASSES) - 0.5,
        report.mean_iou + 0.01,
        f"mean {report.mean_iou:.3f}",
        ha="right",
        fontsize=9,
    )
    ax.set_xticks(range(len(CLASSES)))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("IoU")
    ax.set_title(f"Per-class IoU ({report.valid_pixels} valid pixels)")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(paths["figure"], metadata=_PNG_METADATA)
    plt.close(fig)
    return paths
