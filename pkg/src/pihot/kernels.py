"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``PIHOT_PURE_PYTHON=1`` to force the numpy path.
"""
import os

import numpy as np

if os.environ.get("PIHOT_PURE_PYTHON"):
    from pihot import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from pihot import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from pihot import _pykernels as _impl

        BACKEND = "python"


def dilate(mask: np.ndarray, size: int) -> np.ndarray:
    """Box-kernel binary dilation with zero padding."""
    return _impl.dilate(np.ascontiguousarray(mask, dtype=np.uint8), int(size))


def confusion(gt: np.ndarray, pred: np.ndarray, num_classes: int) -> np.ndarray:
    """``counts[g, p]`` = number of pixels with truth g predicted as p."""
    g = np.ascontiguousarray(np.ravel(gt), dtype=np.int64)
    p = np.ascontiguousarray(np.ravel(pred), dtype=np.int64)
    return _impl.confusion(g, p, int(num_classes))


def diffuse_fill(image: np.ndarray, mask: np.ndarray, max_iter: int = 100,
                 tol: float = 1e-4) -> tuple[np.ndarray, int]:
    """Jacobi 3x3 averaging restricted to masked pixels.

    Returns the filled image (float64, H x W x C) and the iteration count.
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    return _impl.diffuse_fill(img, m, int(max_iter), float(tol))
