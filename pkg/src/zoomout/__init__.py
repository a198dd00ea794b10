"""Superpixel semantic segmentation with zoom-out features."""

__version__ = "0.1.0"

LEVELS = ("local", "proximal", "distant", "global")
