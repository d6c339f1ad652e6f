"""Georeferenced grid model shared by all raster types.

A grid is an axis-aligned, north-up array of square pixels. The origin is
the map coordinate of the upper-left corner of pixel (0, 0); rows increase
southward, so northings decrease with row index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryMismatchError


@dataclass(frozen=True)
class GridGeometry:
    """Affine placement of a raster grid in projected map coordinates.

    origin_x/origin_y are map units (easting/northing of the upper-left
    corner), pixel_size is meters per pixel (square pixels), crs_code is
    an EPSG-style integer identifier.
    """

    origin_x: float
    origin_y: float
    pixel_size: float
    width: int
    height: int
    crs_code: int

    def __post_init__(self):
        if self.pixel_size <= 0:
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) in numpy order."""
        return (self.height, self.width)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the grid extent in map units."""
        return (
            self.origin_x,
            self.origin_y - self.height * self.pixel_size,
            self.origin_x + self.width * self.pixel_size,
            self.origin_y,
        )

    def pixel_center(self, col: int, row: int) -> tuple[float, float]:
        """Map coordinate of the center of pixel (col, row)."""
        x = self.origin_x + (col + 0.5) * self.pixel_size
        y = self.origin_y - (row + 0.5) * self.pixel_size
        return (x, y)

    def center_xs(self) -> np.ndarray:
        """Eastings of all pixel-column centers, left to right."""
        return self.origin_x + (np.arange(self.width) + 0.5) * self.pixel_size

    def center_ys(self) -> np.ndarray:
        """Northings of all pixel-row centers, top to bottom."""
        return self.origin_y - (np.arange(self.height) + 0.5) * self.pixel_size

    def pixel_at(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the pixel containing a map point strictly inside the extent."""
        min_x, min_y, max_x, max_y = self.bounds
        if not (min_x < x < max_x and min_y < y < max_y):
            raise ValueError(f"point ({x}, {y}) outside grid extent {self.bounds}")
        col = int(np.floor((x - self.origin_x) / self.pixel_size))
        row = int(np.floor((self.origin_y - y) / self.pixel_size))
        return (col, row)

    def window(self, col_off: int, row_off: int, width: int, height: int) -> "GridGeometry":
        """Geometry of a sub-window of this grid with the origin shifted accordingly."""
        if col_off < 0 or row_off < 0 or col_off + width > self.width or row_off + height > self.height:
            raise ValueError(
                f"window ({col_off},{row_off},{width}x{height}) outside "
                f"{self.width}x{self.height} grid"
            )
        return GridGeometry(
            origin_x=self.origin_x + col_off * self.pixel_size,
            origin_y=self.origin_y - row_off * self.pixel_size,
            pixel_size=self.pixel_size,
            width=width,
            height=height,
            crs_code=self.crs_code,
        )


def require_same_geometry(a: GridGeometry, b: GridGeometry, context: str = "") -> None:
    """Raise GeometryMismatchError unless two grids are identical."""
    if a != b:
        prefix = f"{context}: " if context else ""
        raise GeometryMismatchError(f"{prefix}grid geometries differ: {a} vs {b}")
