"""Differential elastic measure texture descriptors for 3D lesion volumes."""

__version__ = "0.1.0"

from demtd.volume_io import MaskROI, Volume3D, crop_to_roi, load_mask, load_volume, save_mask, save_volume

__all__ = [
    "MaskROI",
    "Volume3D",
    "__version__",
    "crop_to_roi",
    "load_mask",
    "load_volume",
    "save_mask",
    "save_volume",
]
