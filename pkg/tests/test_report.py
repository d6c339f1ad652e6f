"""Rendered report files: JSON/CSV/PNG triples, deterministic bytes."""

import csv
import json

from fieldpipe.metrics import IouReport
from fieldpipe.postprocess import FieldSizeStats
from fieldpipe.report import bin_labels, save_iou_report, save_stats_report

STATS = FieldSizeStats(
    count=4,
    median_ha=0.3,
    bin_edges=(0.0, 0.5, 5.0),
    percentages=(75.0, 0.0, 25.0),
)

REPORT = IouReport(
    per_class_iou={0: 0.9, 1: 0.8, 2: None},
    mean_iou=0.85,
    per_tile=(("r0_c0", 0.9), ("r0_c1", None)),
    valid_pixels=512,
)


def test_bin_labels():
    assert bin_labels((0.0, 0.5, 5.0)) == ["0–0.5", "0.5–5", "≥5"]


class TestStatsReport:
    def test_files_and_content(self, tmp_path):
        paths = save_stats_report(STATS, tmp_path)
        assert set(paths) == {"json", "csv", "figure"}
        payload = json.loads(paths["json"].read_text())
        assert payload["count"] == 4
        assert payload["percentages"] == [75.0, 0.0, 25.0]
        with paths["csv"].open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["bin_ha", "percent"]
        assert len(rows) == 1 + 3
        assert rows[1][1] == "75.000000"
        png = paths["figure"].read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"

    def test_byte_deterministic(self, tmp_path):
        first = save_stats_report(STATS, tmp_path / "a")
        second = save_stats_report(STATS, tmp_path / "b")
        for kind in ("json", "csv", "figure"):
            assert first[kind].read_bytes() == second[kind].read_bytes()


class TestIouReportFiles:
    def test_files_and_content(self, tmp_path):
        paths = save_iou_report(REPORT, tmp_path)
        payload = json.loads(paths["json"].read_text())
        assert payload["per_class_iou"]["2"] is None
        assert payload["mean_iou"] == 0.85
        with paths["csv"].open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["tile_id", "mean_iou"]
        assert rows[1] == ["r0_c0", "0.900000"]
        assert rows[2] == ["r0_c1", ""]  # undefined stays blank, not zero
        assert paths["figure"].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_byte_deterministic(self, tmp_path):
        first = save_iou_report(REPORT, tmp_path / "a")
        second = save_iou_report(REPORT, tmp_path / "b")
        for kind in ("json", "csv", "figure"):
            assert first[kind].read_bytes() == second[kind].read_bytes()
