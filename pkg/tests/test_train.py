import json
import math
import zipfile

import numpy as np
import pytest
import torch

from pihot import checkpoint as ckpt
from pihot import config
from pihot.train import TrainingError, batch_indices, load_model, train


def _params(model):
    return {k: v.clone() for k, v in model.state_dict().items()}


def test_loss_log_and_checkpoint(tmp_path, small_cfg, small_dataset):
    train(small_cfg, small_dataset, tmp_path / "run")
    rows = (tmp_path / "run" / "loss.csv").read_text().splitlines()
    assert rows[0] == "step,loss" and len(rows) == 4
    assert all(math.isfinite(float(r.split(",")[1])) for r in rows[1:])
    manifest, arrays = ckpt.read_checkpoint(tmp_path / "run" / "checkpoint.ckpt")
    assert manifest["step"] == 3 and manifest["format_version"] == 1
    assert manifest["config"] == small_cfg
    assert any(k.startswith("optim.") for k in arrays)


def test_fixed_seed_is_bit_reproducible(tmp_path, small_cfg, small_dataset):
    a = train(small_cfg, small_dataset, tmp_path / "a")
    b = train(small_cfg, small_dataset, tmp_path / "b")
    for k, v in _params(a).items():
        assert torch.equal(v, b.state_dict()[k]), k
    assert (tmp_path / "a" / "loss.csv").read_text() == (tmp_path / "b" / "loss.csv").read_text()
    assert ((tmp_path / "a" / "checkpoint.ckpt").read_bytes()
            == (tmp_path / "b" / "checkpoint.ckpt").read_bytes())


def test_resume_matches_uninterrupted(tmp_path, small_cfg, small_dataset):
    cfg = config.update(small_cfg, {"train.flip": True, "train.crop": True})
    full = train({**cfg, "train.steps": 6}, small_dataset, tmp_path / "full")
    train({**cfg, "train.steps": 4}, small_dataset, tmp_path / "part")
    resumed = train({**cfg, "train.steps": 6}, small_dataset, tmp_path / "part",
                    resume=tmp_path / "part" / "checkpoint.ckpt")
    for k, v in full.state_dict().items():
        assert torch.equal(v, resumed.state_dict()[k]), k
    full_log = (tmp_path / "full" / "loss.csv").read_text()
    part_log = (tmp_path / "part" / "loss.csv").read_text()
    assert full_log == part_log


def test_periodic_checkpoints(tmp_path, small_cfg, small_dataset):
    cfg = config.update(small_cfg, {"train.checkpoint_every": 2, "train.steps": 2})
    train(cfg, small_dataset, tmp_path / "run")
    manifest, _ = ckpt.read_checkpoint(tmp_path / "run" / "checkpoint.ckpt")
    assert manifest["step"] == 2


def test_class_count_mismatch(tmp_path, small_cfg, small_dataset):
    with pytest.raises(TrainingError, match="classes"):
        train({**small_cfg, "model.num_classes": 18}, small_dataset, tmp_path / "run")


def test_batch_indices_depend_only_on_seed_and_step():
    a, _ = batch_indices(3, 10, 8, 4)
    b, _ = batch_indices(3, 10, 8, 4)
    assert a.tolist() == b.tolist() and len(set(a.tolist())) == 4
    big, _ = batch_indices(0, 0, 2, 5)
    assert len(big) == 5 and big.max() < 2


def test_checkpoint_layout_is_documented_format(tmp_path, small_cfg, small_dataset):
    model = train(small_cfg, small_dataset, tmp_path / "run")
    path = tmp_path / "run" / "checkpoint.ckpt"
    with zipfile.ZipFile(path) as zf:
        assert sorted(zf.namelist()) == ["manifest.json", "tensors.bin"]
        manifest = json.loads(zf.read("manifest.json"))
        blob = zf.read("tensors.bin")
    entry = next(e for e in manifest["tensors"] if e["name"] == "model.head.classifier.weight")
    n = int(np.prod(entry["shape"]))
    raw = np.frombuffer(blob, dtype="<f4", count=n, offset=4 * entry["offset"])
    expected = model.state_dict()["head.classifier.weight"].numpy().ravel()
    np.testing.assert_array_equal(raw, expected)


def test_load_model_roundtrip(tmp_path, small_cfg, small_dataset):
    model = train(small_cfg, small_dataset, tmp_path / "run")
    loaded, cfg, step = load_model(tmp_path / "run" / "checkpoint.ckpt")
    assert step == 3 and cfg == small_cfg
    for k, v in model.state_dict().items():
        assert torch.equal(v.to(loaded.state_dict()[k].dtype), loaded.state_dict()[k])


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    with pytest.raises(ckpt.CheckpointError):
        ckpt.read_checkpoint(bad)
    with pytest.raises(ckpt.CheckpointError):
        ckpt.read_checkpoint(tmp_path / "missing.ckpt")
