"""Small-signal analysis and DC segmentation planning for AC grids."""

__version__ = "0.1.0"
