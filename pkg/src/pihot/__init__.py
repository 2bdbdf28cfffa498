"""Occlusion-aware human-object contact segmentation.

The pipeline removes the human from the scene with a (dilated) mask,
compares depth estimates of the original and human-free images, and fuses
the resulting spatial cue with cross-attention features before a
per-class segmentation head.
"""
from pihot.kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
