"""Relative spatial position from a pair of depth maps."""
import numpy as np


def validate_depth(depth, name="depth") -> np.ndarray:
    d = np.asarray(depth)
    if d.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {d.shape}")
    if not np.isfinite(d).all() or (d < 0).any():
        raise ValueError(f"{name} must be finite and nonnegative")
    return d


def relative_position(d_i, d_o) -> np.ndarray:
    """Min-max normalized absolute depth difference.

    Returns zeros when the difference map is constant (no disparity).
    Statistics are taken over the whole map, never across a batch.
    """
    a = np.asarray(d_i)
    b = np.asarray(d_o)
    if a.shape != b.shape:
        raise ValueError(f"depth maps differ in shape: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    lo = diff.min()
    hi = diff.max()
    if hi == lo:
        return np.zeros_like(diff)
    return (diff - lo) / (hi - lo)


def to_gray8(depth) -> np.ndarray:
    """Scale a nonnegative map to 8-bit for inspection (max -> 255)."""
    d = np.asarray(depth, dtype=np.float64)
    hi = d.max()
    if hi <= 0:
        return np.zeros(d.shape, dtype=np.uint8)
    return np.round(d / hi * 255.0).astype(np.uint8)
