"""Declarative pipeline configuration.

The config file is a small TOML subset — ``[section]`` headers (dotted names
nest), ``key = value`` pairs, ``#`` comments — with scalar values limited to
quoted strings, integers, floats, booleans, and flat arrays of those. The
stdlib shipped with no TOML reader for the interpreters we target, and the
full grammar is far more than a pipeline config needs.
"""

from __future__ import annotations

import datetime
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .postprocess import DEFAULT_BIN_EDGES

SENSOR_PRESETS = {
    "sentinel2": {
        "pixel_size": 10.0,
        "tile_size": 256,
        "stride": 128,
        "half_width": 10.0,
        "min_area_ha": 0.5,
    },
    "planetscope": {
        "pixel_size": 3.0,
        "tile_size": 384,
        "stride": 128,
        "half_width": 3.0,
        "min_area_ha": 0.05,
    },
}

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.\-]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_\-]+)\s*=\s*(.+)$")


def _scan_string(text: str, start: int, lineno: int) -> tuple[str, int]:
    """Decode a double-quoted string starting at text[start]; \\" and \\\\ escape."""
    out = []
    i = start + 1
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in '"\\':
                raise ConfigError(f"line {lineno}: unsupported escape in string")
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise ConfigError(f"line {lineno}: unterminated string")


def _strip_comment(line: str, lineno: int) -> str:
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == '"':
            _, i = _scan_string(line, i, lineno)
            continue
        if ch == "#":
            return line[:i]
        i += 1
    return line


def _parse_scalar(text: str, lineno: int):
    text = text.strip()
    if text.startswith('"'):
        value, end = _scan_string(text, 0, lineno)
        if text[end:].strip():
            raise ConfigError(f"line {lineno}: trailing text after string")
        return value
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {text!r}") from None


def _split_items(body: str, lineno: int) -> list[str]:
    items, current = [], []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == '"':
            _, end = _scan_string(body, i, lineno)
            current.append(body[i:end])
            i = end
            continue
        if ch == ",":
            items.append("".join(current))
            current = []
            i += 1
            continue
        current.append(ch)
        i += 1
    tail = "".join(current).strip()
    if tail:
        items.append(tail)
    return items


def _parse_value(text: str, lineno: int):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"line {lineno}: arrays must close on the same line")
        return [
            _parse_scalar(item, lineno)
            for item in _split_items(text[1:-1], lineno)
        ]
    return _parse_scalar(text, lineno)


def parse_config_text(text: str) -> dict:
    """Parse the TOML subset into nested dicts."""
    root: dict = {}
    current = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw, lineno).strip()
        if not line:
            continue
        section = _SECTION_RE.match(line)
        if section:
            current = root
            for part in section.group(1).split("."):
                current = current.setdefault(part, {})
                if not isinstance(current, dict):
                    raise ConfigError(
                        f"line {lineno}: section [{section.group(1)}] collides "
                        "with an existing key"
                    )
            continue
        pair = _KEY_RE.match(line)
        if not pair:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key = pair.group(1)
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = _parse_value(pair.group(2), lineno)
    return root


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the CLI commands need, resolved against a sensor preset."""

    pixel_size: float
    tile_size: int
    stride: int
    half_width: float
    min_area_ha: float
    workdir: Path
    seed: int = 0
    twelve_band: bool = False
    scenes: tuple[tuple[datetime.date, tuple[Path, ...]], ...] = ()
    parcels_path: Path | None = None
    crop_rule: str = "crop"
    assume_crs: int | None = None
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1)
    cell_size: int = 4
    close_radius: int = 1
    expand_px: int | None = None
    simplify_tolerance: float | None = None
    bin_edges: tuple[float, ...] = field(default=DEFAULT_BIN_EDGES)

    def __post_init__(self):
        if self.pixel_size <= 0 or self.half_width <= 0:
            raise ConfigError("pixel_size and half_width must be positive")
        if not 0 < self.stride <= self.tile_size:
            raise ConfigError(
                f"stride {self.stride} must be in 1..tile_size {self.tile_size}"
            )
        if self.min_area_ha < 0:
            raise ConfigError("min_area_ha must be >= 0")

    @property
    def expand_pixels(self) -> int:
        """Interior regrowth, covering the labelled boundary half-width."""
        if self.expand_px is not None:
            return self.expand_px
        return math.ceil(self.half_width / self.pixel_size)

    @property
    def tolerance(self) -> float:
        return (
            self.pixel_size
            if self.simplify_tolerance is None
            else self.simplify_tolerance
        )

    def require_scenes(self) -> tuple[tuple[datetime.date, tuple[Path, ...]], ...]:
        if len(self.scenes) != 3:
            have = ", ".join(str(d) for d, _ in self.scenes) or "none"
            raise ConfigError(f"need exactly 3 dated scene groups, have: {have}")
        return self.scenes

    def require_parcels(self) -> Path:
        if self.parcels_path is None:
            raise ConfigError("no [parcels] path configured")
        return self.parcels_path


def _expect(mapping: dict, key: str, kind, context: str):
    value = mapping.get(key)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{context}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def _scene_groups(section, base: Path):
    if not isinstance(section, dict):
        raise ConfigError("[scenes] must hold one [scenes.<date>] section per date")
    groups = []
    for key, body in sorted(section.items()):
        try:
            date = datetime.date.fromisoformat(key)
        except ValueError:
            raise ConfigError(f"[scenes.{key}]: not an ISO date") from None
        if not isinstance(body, dict):
            raise ConfigError(f"[scenes.{key}] must be a section")
        files = body.get("files")
        if not isinstance(files, list) or not files:
            raise ConfigError(f"[scenes.{key}]: needs a non-empty files array")
        groups.append((date, tuple(base / f for f in files)))
    return tuple(groups)


def load_config(path: str | Path, seed_override: int | None = None) -> PipelineConfig:
    """Read, parse, and resolve a config file (presets, relative paths)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = parse_config_text(text)
    base = path.parent

    pipeline = raw.get("pipeline", {})
    if not isinstance(pipeline, dict):
        raise ConfigError("[pipeline] must be a section")
    sensor = _expect(pipeline, "sensor", str, "pipeline")
    params: dict = {}
    if sensor is not None:
        try:
            params.update(SENSOR_PRESETS[sensor])
        except KeyError:
            raise ConfigError(
                f"unknown sensor {sensor!r}; presets: {sorted(SENSOR_PRESETS)}"
            ) from None
    for key, kind in (
        ("pixel_size", float),
        ("tile_size", int),
        ("stride", int),
        ("half_width", float),
        ("min_area_ha", float),
    ):
        value = _expect(pipeline, key, kind, "pipeline")
        if value is not None:
            params[key] = value
    missing = [k for k in ("pixel_size", "tile_size", "stride", "half_width", "min_area_ha") if k not in params]
    if missing:
        raise ConfigError(
            f"[pipeline] needs a sensor preset or explicit values for: {missing}"
        )

    workdir = _expect(pipeline, "workdir", str, "pipeline")
    if workdir is None:
        raise ConfigError("[pipeline] workdir is required")
    seed = _expect(pipeline, "seed", int, "pipeline")
    if seed_override is not None:
        seed = seed_override

    parcels = raw.get("parcels", {})
    split = raw.get("split", {})
    post = raw.get("postprocess", {})
    for name, section in (("parcels", parcels), ("split", split), ("postprocess", post)):
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a section")

    fractions = split.get("fractions", [0.7, 0.2, 0.1])
    if not isinstance(fractions, list) or len(fractions) != 3:
        raise ConfigError(f"split.fractions must be a 3-element array, got {fractions!r}")

    bin_edges = post.get("bin_edges")
    if bin_edges is not None and not isinstance(bin_edges, list):
        raise ConfigError("postprocess.bin_edges must be an array")

    parcels_path = _expect(parcels, "path", str, "parcels")
    return PipelineConfig(
        pixel_size=params["pixel_size"],
        tile_size=params["tile_size"],
        stride=params["stride"],
        half_width=params["half_width"],
        min_area_ha=_expect(post, "min_area_ha", float, "postprocess")
        if "min_area_ha" in post
        else params["min_area_ha"],
        workdir=base / workdir,
        seed=seed if seed is not None else 0,
        twelve_band=bool(pipeline.get("twelve_band", False)),
        scenes=_scene_groups(raw.get("scenes", {}), base),
        parcels_path=base / parcels_path if parcels_path else None,
        crop_rule=_expect(parcels, "crop_rule", str, "parcels") or "crop",
        assume_crs=_expect(parcels, "assume_crs", int, "parcels"),
        fractions=tuple(float(f) for f in fractions),
        cell_size=_expect(split, "cell_size", int, "split")
        if "cell_size" in split
        else 4,
        close_radius=_expect(post, "close_radius", int, "postprocess")
        if "close_radius" in post
        else 1,
        expand_px=_expect(post, "expand_px", int, "postprocess"),
        simplify_tolerance=_expect(post, "simplify_tolerance", float, "postprocess"),
        bin_edges=tuple(float(e) for e in bin_edges)
        if bin_edges is not None
        else DEFAULT_BIN_EDGES,
    )
