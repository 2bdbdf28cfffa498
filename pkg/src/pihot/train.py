"""Seeded, resumable training loop.

Batch choice and augmentation for step ``t`` come from an RNG keyed on
``(seed, t)``, so a run resumed from a checkpoint at step ``k`` replays
exactly the batches an uninterrupted run would have seen.
"""
import logging
from pathlib import Path

import numpy as np
import torch

from pihot import checkpoint as ckpt
from pihot.metrics import aggregate, evaluate
from pihot.network import PIHOT, hot_loss
from pihot.pipeline import Backends, predict_probs, prepare_sample, probs_to_labels, to_tensors
from pihot.synthdata import Dataset, load_dataset

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.ckpt"
LOSS_LOG_NAME = "loss.csv"


class TrainingError(RuntimeError):
    pass


def class_weights_from(cfg):
    text = cfg["loss.class_weights"].strip()
    if not text:
        return None
    return [float(v) for v in text.split(",")]


def build_model(cfg, dtype=torch.float32):
    torch.manual_seed(cfg["train.seed"])
    return PIHOT.from_config(cfg).to(dtype)


def make_optimizer(model, cfg):
    return torch.optim.Adam(model.parameters(), lr=cfg["train.lr"])


def prepare_dataset(dataset, cfg, backends=None):
    backends = backends or Backends.from_config(cfg)
    prepped = [prepare_sample(s, backends, cfg) for s in dataset]
    labels = torch.from_numpy(np.stack([s.labels for s in dataset]))
    return prepped, labels


def batch_indices(seed, step, n, batch_size):
    rng = np.random.default_rng([seed, step])
    if batch_size <= n:
        idx = rng.choice(n, size=batch_size, replace=False)
    else:
        idx = rng.integers(0, n, size=batch_size)
    return np.sort(idx), rng


def augment(tensors, labels, rng, flip, crop, pad=4):
    """Random horizontal flip and pad-and-crop shift, same draw for every input."""
    img, img_o, d_s = tensors
    if flip and rng.random() < 0.5:
        img, img_o, d_s, labels = (t.flip(-1) for t in (img, img_o, d_s, labels))
    if crop:
        dy, dx = (int(v) for v in rng.integers(0, 2 * pad + 1, size=2))
        h, w = labels.shape[-2:]

        def shift(t):
            p = torch.nn.functional.pad(t, (pad, pad, pad, pad))
            return p[..., dy:dy + h, dx:dx + w]

        img, img_o, d_s = shift(img), shift(img_o), shift(d_s)
        labels = shift(labels)
    return (img, img_o, d_s), labels


def loss_for(model, tensors, labels, cfg):
    probs = model(*tensors)
    return hot_loss(probs, labels, cfg["loss.background_weight"], class_weights_from(cfg),
                    cfg["loss.reduction"])


def train(cfg, dataset, out_dir, resume=None, prepared=None):
    """Train for ``cfg['train.steps']`` total steps; returns the model.

    ``dataset`` is a path or a loaded ``Dataset``. Writes ``checkpoint.ckpt``
    and appends ``step,loss`` rows to ``loss.csv`` in ``out_dir``.
    """
    torch.use_deterministic_algorithms(True)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    if dataset.num_classes != cfg["model.num_classes"]:
        raise TrainingError(
            f"dataset has {dataset.num_classes} classes but model.num_classes is "
            f"{cfg['model.num_classes']}")

    model = build_model(cfg)
    optimizer = make_optimizer(model, cfg)
    start = 0
    if resume is not None:
        manifest, arrays = ckpt.read_checkpoint(resume)
        ckpt.load_into(model, arrays, optimizer)
        start = manifest["step"]
        for group in optimizer.param_groups:
            group["lr"] = cfg["train.lr"]

    if prepared is None:
        prepared = prepare_dataset(dataset, cfg)
    prepped, labels = prepared
    all_tensors = to_tensors(prepped)
    n = len(prepped)

    log_path = out_dir / LOSS_LOG_NAME
    mode = "a" if resume is not None and log_path.exists() else "w"
    seed = cfg["train.seed"]
    every = cfg["train.checkpoint_every"]
    with open(log_path, mode) as log_file:
        if mode == "w":
            log_file.write("step,loss\n")
        for step in range(start, cfg["train.steps"]):
            idx, rng = batch_indices(seed, step, n, cfg["train.batch_size"])
            sel = torch.from_numpy(idx)
            batch = tuple(t[sel] for t in all_tensors)
            batch, y = augment(batch, labels[sel], rng, cfg["train.flip"], cfg["train.crop"])
            model.train()
            optimizer.zero_grad()
            loss = loss_for(model, batch, y, cfg)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step + 1}")
            loss.backward()
            optimizer.step()
            log_file.write(f"{step + 1},{loss.item()!r}\n")
            if every and (step + 1) % every == 0:
                ckpt.save_checkpoint(out_dir / CHECKPOINT_NAME, model, cfg, step + 1, optimizer)
            if (step + 1) % 100 == 0:
                log.info("step %d loss %.5f", step + 1, loss.item())
    ckpt.save_checkpoint(out_dir / CHECKPOINT_NAME, model, cfg, max(start, cfg["train.steps"]),
                         optimizer)
    return model


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, config, step)."""
    manifest, arrays = ckpt.read_checkpoint(path)
    cfg = manifest["config"]
    model = PIHOT.from_config(cfg)
    ckpt.load_into(model, arrays)
    model.eval()
    return model, cfg, manifest["step"]


def evaluate_model(model, dataset, cfg, prepared=None):
    """Predict every sample and return (aggregate report, per-image reports)."""
    if prepared is None:
        prepared = prepare_dataset(dataset, cfg)
    prepped, labels = prepared
    pred = probs_to_labels(predict_probs(model, prepped))
    n_cls = cfg["model.num_classes"]
    reports = [evaluate(p, g, n_cls) for p, g in zip(pred, labels.numpy())]
    return aggregate(reports, cfg["metrics.aggregation"]), reports
