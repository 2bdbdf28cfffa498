"""Pure numpy kernels; the reference path and the fallback when the
compiled extension is unavailable."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def dilate(mask, size):
    r = size // 2
    padded = np.pad(mask, r, mode="constant")
    windows = sliding_window_view(padded, (size, size))
    return windows.max(axis=(-2, -1)).astype(np.uint8)


def confusion(gt, pred, num_classes):
    flat = gt * num_classes + pred
    counts = np.bincount(flat, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes).astype(np.int64)


def diffuse_fill(image, mask, max_iter, tol):
    h, w, _ = image.shape
    cur = np.array(image, dtype=np.float64, copy=True)
    sel = mask.astype(bool)
    ones = np.pad(np.ones((h, w)), 1)
    cnt = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            cnt = cnt + ones[dy:dy + h, dx:dx + w]
    iters = 0
    for iters in range(1, max_iter + 1):
        padded = np.pad(cur, ((1, 1), (1, 1), (0, 0)))
        s = np.zeros_like(cur)
        for dy in range(3):
            for dx in range(3):
                s = s + padded[dy:dy + h, dx:dx + w]
        avg = s / cnt[..., None]
        delta = np.abs(avg[sel] - cur[sel])
        worst = delta.max() if delta.size else 0.0
        cur[sel] = avg[sel]
        if worst < tol:
            break
    return cur, iters
