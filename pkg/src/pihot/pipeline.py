"""Per-image preprocessing and end-to-end inference.

The inpainting and depth stages carry no learnable weights, so training
runs them once per sample and caches the tensors.
"""
from dataclasses import dataclass

import numpy as np
import torch

from pihot import plugins
from pihot.depth_ops import relative_position
from pihot.mask_ops import dilate_mask


@dataclass
class Backends:
    inpainter: object
    depth: object

    @classmethod
    def from_config(cls, cfg):
        return cls(plugins.make_inpainter(cfg), plugins.make_depth(cfg))


@dataclass
class PreparedInput:
    image: np.ndarray  # H x W x 3
    image_o: np.ndarray
    d_i: np.ndarray | None
    d_o: np.ndarray | None
    d_s: np.ndarray  # H x W


def prepare(image, mask, backends: Backends, cfg, depth_sidecar=None,
            depth_sidecar_nohuman=None) -> PreparedInput:
    """Dilate the mask, remove the human, and build the depth-difference map.

    The sidecars are the generator's depth planes for the original and
    human-free scene; only the oracle depth stub reads them.
    """
    oi = cfg["train.oi"]
    spo = cfg["train.spo"]
    image = np.asarray(image, dtype=np.float32)
    if oi:
        m = dilate_mask(mask, cfg["mask.dilation_kernel"], cfg["mask.dilation_iterations"])
        image_o = plugins.inpaint(backends.inpainter, image, m).astype(np.float32)
    else:
        image_o = image
    if not spo:
        return PreparedInput(image, image_o, None, None, np.ones(image.shape[:2]))
    d_i = plugins.estimate_depth(backends.depth, image, sidecar=depth_sidecar)
    # with inpainting off the second view is the original image itself
    d_o = plugins.estimate_depth(
        backends.depth, image_o, sidecar=depth_sidecar_nohuman if oi else depth_sidecar
    )
    return PreparedInput(image, image_o, d_i, d_o, relative_position(d_i, d_o))


def prepare_sample(sample, backends, cfg) -> PreparedInput:
    return prepare(sample.image, sample.human_mask, backends, cfg,
                   sample.depth_with_human, sample.depth_no_human)


def to_tensors(prepped, dtype=torch.float32):
    """Stack prepared inputs into (image, image_o, d_s) batch tensors."""
    if isinstance(prepped, PreparedInput):
        prepped = [prepped]
    img = torch.from_numpy(np.stack([p.image for p in prepped]).transpose(0, 3, 1, 2).copy())
    img_o = torch.from_numpy(np.stack([p.image_o for p in prepped]).transpose(0, 3, 1, 2).copy())
    d_s = torch.from_numpy(np.stack([p.d_s for p in prepped])[:, None].copy())
    return img.to(dtype), img_o.to(dtype), d_s.to(dtype)


@torch.no_grad()
def predict_probs(model, prepped, batch_size=16) -> np.ndarray:
    """Probability maps (N, C_y, H, W) in eval mode."""
    model.eval()
    dtype = next(model.parameters()).dtype
    out = []
    for i in range(0, len(prepped), batch_size):
        out.append(model(*to_tensors(prepped[i:i + batch_size], dtype)).numpy())
    return np.concatenate(out)


def probs_to_labels(probs) -> np.ndarray:
    return np.asarray(probs).argmax(axis=-3).astype(np.int64)


def pihot_forward(model, image, mask, backends, cfg, depth_sidecar=None,
                  depth_sidecar_nohuman=None) -> np.ndarray:
    """Full pipeline for one image; returns a (C_y, H, W) probability map."""
    p = prepare(image, mask, backends, cfg, depth_sidecar, depth_sidecar_nohuman)
    return predict_probs(model, [p])[0]
