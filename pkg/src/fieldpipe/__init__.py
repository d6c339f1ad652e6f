"""Field-boundary segmentation pipeline toolkit.

Turns multi-date satellite scenes and land-parcel vectors into NDVI stacks,
3-class training masks and overlapping tile datasets; evaluates predicted
masks with IoU; and post-processes prediction rasters into clean field
polygons with size statistics.
"""

__version__ = "0.1.0"
