"""PNG helpers for images, 16-bit depth maps and indexed label maps."""
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def quantize_image(image) -> np.ndarray:
    """Round a [0,1] float image to the values an 8-bit PNG can hold."""
    q = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0)
    return (q.astype(np.uint8).astype(np.float32) / np.float32(255.0))


def quantize_depth(depth, scale: float) -> np.ndarray:
    raw = np.round(np.asarray(depth, dtype=np.float64) * scale)
    if raw.max(initial=0) > 65535:
        raise ValueError(f"depth exceeds 16-bit range at scale {scale}")
    return raw.astype(np.uint16).astype(np.float64) / scale


def _atomic_save(img: Image.Image, path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(path, image) -> None:
    arr = np.round(np.clip(np.asarray(image, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    _atomic_save(Image.fromarray(arr, mode="RGB"), path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.array(im.convert("RGB"))
    return arr.astype(np.float32) / np.float32(255.0)


def save_depth(path, depth, scale: float) -> None:
    raw = np.round(np.asarray(depth, dtype=np.float64) * scale)
    if raw.min(initial=0) < 0 or raw.max(initial=0) > 65535:
        raise ValueError(f"depth out of 16-bit range at scale {scale}")
    _atomic_save(Image.fromarray(raw.astype(np.uint16)), path)


def load_depth(path, scale: float) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I", "L"):
            raise ValueError(f"{path}: expected a 16-bit depth PNG, got mode {im.mode}")
        arr = np.array(im)
    return arr.astype(np.float64) / scale


def save_labels(path, labels) -> None:
    arr = np.asarray(labels)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueError("label values must fit in 8 bits")
    _atomic_save(Image.fromarray(arr.astype(np.uint8), mode="L"), path)


def load_labels(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise ValueError(f"{path}: expected an 8-bit indexed label PNG, got mode {im.mode}")
        arr = np.array(im)
    return arr.astype(np.int64)


def save_gray(path, gray8) -> None:
    _atomic_save(Image.fromarray(np.asarray(gray8, dtype=np.uint8), mode="L"), path)
