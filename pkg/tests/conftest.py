"""Terminal summary: one pass/fail line per acceptance criterion."""

CRITERIA = [
    ("test_tile_area_constants", "tile area constants"),
    ("test_iou_oracle_equivalence", "IoU oracle equivalence"),
    ("test_mask_generation_oracle", "mask generation oracle"),
    ("test_ndvi_properties", "NDVI properties"),
    ("test_split_leakage", "split leakage"),
    ("test_postprocess_round_trip", "postprocess round trip"),
    ("test_field_statistics", "field statistics"),
    ("test_cli_determinism", "CLI determinism"),
]

_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[name] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in CRITERIA:
        outcome = _results.get(name)
        if outcome is None:
            continue
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{word:4s}  {label}")
