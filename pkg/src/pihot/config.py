"""Flat ``key = value`` run configuration.

Precedence, lowest to highest: built-in defaults, ``PIHOT_SEED`` (seed
only), config file, command-line overrides.
"""
import os
from pathlib import Path

# key -> (default, type, help)
DEFAULTS: dict[str, tuple[object, type, str]] = {
    "model.variant": ("tiny", str, "backbone: tiny | resnet50_shape"),
    "model.channels": (32, int, "backbone output channels"),
    "model.downsample": (8, int, "image -> feature scale factor"),
    "model.num_classes": (18, int, "output channels incl. background"),
    "model.attn_dim": (0, int, "attention token width; 0 = channel count"),
    "model.alpha": (0.1, float, "fusion weight on the object-attention feature"),
    "model.beta": (0.1, float, "fusion weight on the depth-attention feature"),
    "loss.background_weight": (0.2, float, "loss weight of class 0"),
    "loss.class_weights": ("", str, "comma list overriding all class weights"),
    "loss.reduction": ("mean", str, "mean | sum over pixels"),
    "plugins.inpainter": ("diffusion_stub", str, "diffusion_stub | external"),
    "plugins.inpainter_cmd": ("", str, "command template for the external inpainter"),
    "plugins.inpaint_iters": (100, int, "max diffusion sweeps"),
    "plugins.inpaint_tol": (1e-4, float, "diffusion convergence tolerance"),
    "plugins.depth": ("oracle_stub", str, "oracle_stub | constant_stub | external"),
    "plugins.depth_cmd": ("", str, "command template for the external depth model"),
    "plugins.depth_scale": (1000.0, float, "16-bit depth PNG units per depth unit"),
    "plugins.mask_cmd": ("", str, "command template producing a human mask"),
    "metrics.aggregation": ("micro", str, "micro | macro"),
    "mask.dilation_kernel": (3, int, "odd dilation window size"),
    "mask.dilation_iterations": (1, int, "dilation passes"),
    "train.seed": (0, int, "global seed"),
    "train.steps": (100, int, "optimizer steps"),
    "train.batch_size": (4, int, "samples per step"),
    "train.lr": (1e-5, float, "Adam learning rate"),
    "train.flip": (False, bool, "random horizontal flips"),
    "train.crop": (False, bool, "random shifted crops (pad + crop)"),
    "train.checkpoint_every": (0, int, "write a checkpoint every n steps; 0 = end only"),
    "train.oi": (True, bool, "object inpainting branch"),
    "train.ipi": (True, bool, "object/contact cross-attention"),
    "train.spo": (True, bool, "depth-difference map"),
    "train.idsi": (True, bool, "depth-guided attention"),
    "synth.height": (64, int, "generated canvas height"),
    "synth.width": (64, int, "generated canvas width"),
    "synth.num_classes": (18, int, "classes incl. background"),
    "synth.contact_radius": (2, int, "adjacency radius in pixels"),
    "synth.depth_tolerance": (0.1, float, "max depth gap for contact"),
    "synth.max_objects": (3, int, "objects per scene"),
    "synth.noise": (0.02, float, "texture noise amplitude"),
}

ABLATION_FLAGS = ("oi", "ipi", "spo", "idsi")


class ConfigError(ValueError):
    pass


def _coerce(key: str, value):
    _, typ, _ = DEFAULTS[key]
    if isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return text


def default_config() -> dict:
    cfg = {k: v[0] for k, v in DEFAULTS.items()}
    env_seed = os.environ.get("PIHOT_SEED")
    if env_seed:
        cfg["train.seed"] = _coerce("train.seed", env_seed)
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def update(cfg: dict, overrides: dict) -> dict:
    new = dict(cfg)
    for key, value in overrides.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        new[key] = _coerce(key, value)
    return new


def load_config(path=None, overrides=None) -> dict:
    cfg = default_config()
    if path is not None:
        cfg.update(parse_config_text(Path(path).read_text(), str(path)))
    if overrides:
        cfg = update(cfg, overrides)
    return cfg


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {_fmt(cfg[k])}\n" for k in sorted(cfg))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)
