"""Fuse multirate wrist signals into 2D images and classify them with a small CNN."""

__version__ = "0.1.0"
