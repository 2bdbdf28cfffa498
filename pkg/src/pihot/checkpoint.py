"""Checkpoint archive.

A checkpoint is a zip file with two members:

``manifest.json``
    ``format_version``, ``step``, the flat ``config`` snapshot, and
    ``tensors``: a list of ``{"name", "shape", "offset"}`` entries.
``tensors.bin``
    Every tensor's data back to back, row-major, little-endian float32.
    ``offset`` counts float32 elements from the start of the file.

Model tensors are named ``model.<state_dict key>``; optimizer state is
``optim.<param index>.<field>``.
"""
import io
import json
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _arrays_from_state(model, optimizer=None):
    arrays = {}
    for k, v in model.state_dict().items():
        arrays[f"model.{k}"] = v
    if optimizer is not None:
        for idx, st in optimizer.state_dict()["state"].items():
            for field, v in st.items():
                arrays[f"optim.{idx}.{field}"] = torch.as_tensor(v)
    return arrays


def save_checkpoint(path, model, config, step=0, optimizer=None) -> None:
    arrays = _arrays_from_state(model, optimizer)
    index, chunks, offset = [], [], 0
    for name, t in arrays.items():
        data = t.detach().cpu().numpy().astype("<f4", copy=False).ravel()
        index.append({"name": name, "shape": list(t.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.size
    manifest = {"format_version": FORMAT_VERSION, "step": int(step),
                "config": config, "tensors": index}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
            _write_member(zf, "manifest.json", json.dumps(manifest, sort_keys=True).encode())
            _write_member(zf, "tensors.bin", b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_member(zf, name, data):
    # fixed timestamp keeps archives byte-identical across runs
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    zf.writestr(info, data)


def read_checkpoint(path):
    """Return (manifest, {name: float32 ndarray})."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            blob = zf.read("tensors.bin")
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')}")
    flat = np.frombuffer(blob, dtype="<f4")
    arrays = {}
    for entry in manifest["tensors"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        if start + n > flat.size:
            raise CheckpointError(f"corrupt checkpoint {path}: tensor {entry['name']} truncated")
        arrays[entry["name"]] = flat[start:start + n].reshape(entry["shape"])
    return manifest, arrays


def load_into(model, arrays, optimizer=None) -> None:
    state = {}
    for k, ref in model.state_dict().items():
        key = f"model.{k}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint is missing {key}")
        state[k] = torch.from_numpy(arrays[key].copy()).to(ref.dtype).reshape(ref.shape)
    model.load_state_dict(state)
    if optimizer is None:
        return
    opt_state = optimizer.state_dict()
    params = opt_state["param_groups"][0]["params"]
    new_state = {}
    for idx in params:
        prefix = f"optim.{idx}."
        fields = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
        if fields:
            new_state[idx] = {f: torch.from_numpy(v.copy()) for f, v in fields.items()}
    opt_state["state"] = new_state
    optimizer.load_state_dict(opt_state)


def dump_manifest(path) -> str:
    manifest, _ = read_checkpoint(path)
    buf = io.StringIO()
    json.dump({k: v for k, v in manifest.items() if k != "tensors"}, buf, indent=1)
    return buf.getvalue()
