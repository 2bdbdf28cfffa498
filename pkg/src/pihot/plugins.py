"""Inpainting and depth backends.

The stubs let the whole pipeline run without pretrained models. The
``external`` backends shell out to a user command that reads and writes
PNG files; the command is a template with ``{image}``, ``{mask}`` and
``{output}`` placeholders.
"""
import shlex
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from scipy import ndimage

from pihot import kernels, pngio
from pihot.mask_ops import as_binary_mask


class BackendError(RuntimeError):
    pass


def _check_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must be H x W x 3, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    return img


class DiffusionInpainter:
    """Fills masked pixels from their surroundings.

    Masked pixels start at the value of their nearest unmasked pixel and
    are then relaxed by repeated 3x3 averaging until the largest update
    drops below ``tol`` or ``max_iter`` sweeps have run. Unmasked pixels
    are never touched.
    """

    name = "diffusion_stub"
    preserves_unmasked = True

    def __init__(self, max_iter: int = 100, tol: float = 1e-4):
        self.max_iter = max_iter
        self.tol = tol

    def __call__(self, image, mask):
        sel = mask.astype(bool)
        _, (iy, ix) = ndimage.distance_transform_edt(sel, return_indices=True)
        seeded = np.asarray(image, dtype=np.float64)[iy, ix]
        filled, _ = kernels.diffuse_fill(seeded, mask, self.max_iter, self.tol)
        out = np.array(image, copy=True)
        out[sel] = filled[sel].astype(out.dtype)
        return out


class ExternalInpainter:
    name = "external"
    preserves_unmasked = False

    def __init__(self, command: str):
        if not command:
            raise BackendError("external inpainter needs plugins.inpainter_cmd")
        self.command = command

    def __call__(self, image, mask):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            pngio.save_image(tmp / "image.png", image)
            pngio.save_labels(tmp / "mask.png", mask * 255)
            out = tmp / "output.png"
            _run(self.command, image=tmp / "image.png", mask=tmp / "mask.png", output=out)
            result = pngio.load_image(out)
        if result.shape != np.shape(image):
            raise BackendError(f"external inpainter returned shape {result.shape}")
        return result.astype(np.asarray(image).dtype)


class OracleDepth:
    """Returns the depth planes the scene generator recorded for an image.

    The generator's ground truth travels with the image as ``sidecar``.
    """

    name = "oracle_stub"

    def __call__(self, image, sidecar=None):
        if sidecar is None:
            raise BackendError("oracle depth stub needs the generator's depth sidecar")
        d = np.asarray(sidecar, dtype=np.float64)
        if d.shape != np.shape(image)[:2]:
            raise BackendError(f"depth sidecar shape {d.shape} does not match image")
        return d.copy()


class ConstantDepth:
    name = "constant_stub"

    def __init__(self, value: float = 0.5):
        self.value = value

    def __call__(self, image, sidecar=None):
        return np.full(np.shape(image)[:2], self.value, dtype=np.float64)


class ExternalDepth:
    name = "external"

    def __init__(self, command: str, scale: float = 1000.0):
        if not command:
            raise BackendError("external depth backend needs plugins.depth_cmd")
        self.command = command
        self.scale = scale

    def __call__(self, image, sidecar=None):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            pngio.save_image(tmp / "image.png", image)
            out = tmp / "depth.png"
            _run(self.command, image=tmp / "image.png", mask="", output=out)
            return pngio.load_depth(out, self.scale)


def _run(template: str, **paths) -> None:
    args = [a.format(**{k: str(v) for k, v in paths.items()}) for a in shlex.split(template)]
    proc = subprocess.run(args, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BackendError(f"external command failed ({proc.returncode}): {proc.stderr.strip()}")
    if not Path(paths["output"]).exists():
        raise BackendError("external command did not write its output file")


def inpaint(backend, image, human_mask) -> np.ndarray:
    """Remove the (already dilated) human region from ``image``."""
    img = _check_image(image)
    m = as_binary_mask(human_mask)
    if m.shape != img.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {img.shape[:2]}")
    if m.all():
        raise BackendError("mask covers the whole image; nothing to inpaint from")
    if not m.any():
        return img.copy()
    return backend(img, m)


def estimate_depth(backend, image, sidecar=None) -> np.ndarray:
    img = _check_image(image)
    d = np.asarray(backend(img, sidecar=sidecar), dtype=np.float64)
    if d.shape != img.shape[:2]:
        raise BackendError(f"depth backend returned shape {d.shape}")
    if not np.isfinite(d).all() or (d < 0).any():
        raise BackendError("depth backend returned negative or non-finite values")
    return d


def make_inpainter(cfg):
    kind = cfg["plugins.inpainter"]
    if kind == "diffusion_stub":
        return DiffusionInpainter(cfg["plugins.inpaint_iters"], cfg["plugins.inpaint_tol"])
    if kind == "external":
        return ExternalInpainter(cfg["plugins.inpainter_cmd"])
    raise BackendError(f"unknown inpainter {kind!r}")


def make_depth(cfg):
    kind = cfg["plugins.depth"]
    if kind == "oracle_stub":
        return OracleDepth()
    if kind == "constant_stub":
        return ConstantDepth()
    if kind == "external":
        return ExternalDepth(cfg["plugins.depth_cmd"], cfg["plugins.depth_scale"])
    raise BackendError(f"unknown depth backend {kind!r}")


def external_mask(command: str, image) -> np.ndarray:
    """Run a user segmentation command that writes a 0/255 mask PNG."""
    from pihot.mask_ops import load_mask

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        pngio.save_image(tmp / "image.png", image)
        out = tmp / "mask.png"
        _run(command, image=tmp / "image.png", mask="", output=out)
        return load_mask(out)
