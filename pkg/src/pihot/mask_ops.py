"""Binary human masks: validation, PNG I/O and box-kernel dilation."""
import numpy as np
from PIL import Image

from pihot import kernels, pngio


class MaskError(ValueError):
    pass


def as_binary_mask(mask) -> np.ndarray:
    """Validate a 2-D {0,1} mask and return it as uint8."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskError("mask is empty")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.isin(arr, (0, 1)).all():
        raise MaskError("mask values must be 0 or 1")
    return arr.astype(np.uint8)


def dilate_mask(mask, kernel_size: int = 3, iterations: int = 1) -> np.ndarray:
    """Grow the mask by an all-ones ``kernel_size`` x ``kernel_size`` window.

    Equivalent to convolving with a ones kernel (zero padded, same size
    output) and thresholding at > 0. ``kernel_size`` must be odd.
    """
    m = as_binary_mask(mask)
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise MaskError(f"dilation kernel size must be odd and >= 1, got {kernel_size}")
    if iterations < 0:
        raise MaskError("iterations must be >= 0")
    for _ in range(iterations):
        m = kernels.dilate(m, kernel_size)
    return m


def load_mask(path) -> np.ndarray:
    """Read a single-channel PNG mask (0 = background, 255 = human)."""
    with Image.open(path) as im:
        arr = np.array(im.convert("L"))
    if not np.isin(arr, (0, 255)).all():
        raise MaskError(f"{path}: mask PNG must contain only 0 and 255")
    return (arr == 255).astype(np.uint8)


def save_mask(path, mask) -> None:
    m = as_binary_mask(mask)
    pngio.save_labels(path, m * 255)
