"""Command-line entry point: ``pihot <command> ...``."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from pihot import config as config_mod
from pihot import pngio, synthdata
from pihot.checkpoint import CheckpointError
from pihot.config import ABLATION_FLAGS, ConfigError
from pihot.depth_ops import to_gray8
from pihot.mask_ops import MaskError, load_mask
from pihot.metrics import format_report
from pihot.pipeline import Backends, pihot_forward, prepare, probs_to_labels
from pihot.plugins import BackendError, external_mask

EXPECTED_ERRORS = (ConfigError, CheckpointError, synthdata.DatasetError, BackendError,
                   MaskError, ValueError, OSError, RuntimeError)


class CLIError(RuntimeError):
    pass


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _add_config_args(p):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", type=_kv, default=[],
                   metavar="KEY=VALUE", help="override a config key (repeatable)")


def _resolve_config(args, flag_keys):
    """Defaults < PIHOT_SEED < --config file < --set < dedicated flags."""
    overrides = dict(args.overrides)
    for attr, key in flag_keys.items():
        v = getattr(args, attr, None)
        if v is not None:
            overrides[key] = v
    return config_mod.load_config(args.config, overrides)


def build_parser():
    parser = argparse.ArgumentParser(prog="pihot", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic contact dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--size", type=int, help="square canvas side in pixels")
    p.add_argument("--num-classes", type=int)
    _add_config_args(p)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=_positive)
    p.add_argument("--ablate", action="append", choices=ABLATION_FLAGS, default=[],
                   help="switch a module off (repeatable)")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    _add_config_args(p)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--report", type=Path, help="write the text report here as well")
    p.add_argument("--json", type=Path, help="write a machine-readable report")
    p.add_argument("--aggregation", choices=("micro", "macro"))

    p = sub.add_parser("infer", help="predict contact labels for one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--mask", type=Path, help="0/255 human mask PNG")
    p.add_argument("--depth", type=Path, help="16-bit depth sidecar for the oracle stub")
    p.add_argument("--depth-nohuman", type=Path, help="human-free depth sidecar")
    p.add_argument("--out", type=Path, required=True, help="indexed label PNG")
    p.add_argument("--probs", type=Path, help="write class probabilities (.npy)")
    p.add_argument("--overlay", type=Path, help="write an RGB overlay PNG")
    p.add_argument("--meta", type=Path, help="dataset meta file providing the palette")
    _add_config_args(p)

    p = sub.add_parser("visualize-depth", help="dump d_i, d_o and d_s as grayscale PNGs")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--id", required=True, help="sample id, e.g. 000003")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_config_args(p)
    return parser


def cmd_gen_data(args):
    flags = {"num_classes": "synth.num_classes", "seed": "train.seed"}
    cfg = _resolve_config(args, flags)
    if args.size is not None:
        cfg = config_mod.update(cfg, {"synth.height": args.size, "synth.width": args.size})
    params = synthdata.synth_params(cfg)
    samples = synthdata.generate(args.out, cfg["train.seed"], args.count, **params)
    n_contact = sum(int((s.labels > 0).sum()) for s in samples)
    n_pos = sum(int((s.labels > 0).any()) for s in samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    print(f"contact-positive samples: {n_pos}")
    print(f"contact pixels: {n_contact}")
    return 0


def cmd_train(args):
    from pihot import train as train_mod

    flags = {"seed": "train.seed", "steps": "train.steps", "lr": "train.lr",
             "batch_size": "train.batch_size"}
    if args.resume is not None:
        from pihot.checkpoint import read_checkpoint

        manifest, _ = read_checkpoint(args.resume)
        overrides = dict(args.overrides)
        for attr, key in flags.items():
            if getattr(args, attr) is not None:
                overrides[key] = getattr(args, attr)
        cfg = config_mod.update(manifest["config"], overrides)
    else:
        cfg = _resolve_config(args, flags)
    cfg = config_mod.update(cfg, {f"train.{name}": False for name in args.ablate})
    if not args.data.exists():
        raise CLIError(f"dataset not found: {args.data}")
    train_mod.train(cfg, args.data, args.out, resume=args.resume)
    last = (args.out / train_mod.LOSS_LOG_NAME).read_text().strip().splitlines()[-1]
    print(f"trained to step {cfg['train.steps']}; last log row {last}")
    print(f"checkpoint: {args.out / train_mod.CHECKPOINT_NAME}")
    return 0


def cmd_eval(args):
    from pihot import train as train_mod

    model, cfg, step = train_mod.load_model(args.checkpoint)
    if args.aggregation:
        cfg = config_mod.update(cfg, {"metrics.aggregation": args.aggregation})
    dataset = synthdata.load_dataset(args.data)
    if dataset.num_classes != cfg["model.num_classes"]:
        raise CLIError(f"class-count mismatch: checkpoint has {cfg['model.num_classes']}, "
                       f"dataset has {dataset.num_classes}")
    report, _ = train_mod.evaluate_model(model, dataset, cfg)
    text = format_report(report, dataset.meta.get("class_names"))
    if report.sc_acc is None:
        text = "notice: no contact pixels in the ground truth; SC-Acc and C-Acc undefined\n" + text
    sys.stdout.write(text)
    if args.report:
        args.report.write_text(text)
    if args.json:
        payload = report.as_dict()
        payload.update({"checkpoint_step": step, "samples": len(dataset),
                        "aggregation": cfg["metrics.aggregation"]})
        args.json.write_text(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def _palette(meta_path, num_classes):
    if meta_path is not None:
        meta = json.loads(Path(meta_path).read_text())
        pal = np.asarray(meta["palette"], dtype=np.float64) / 255.0
    else:
        pal = np.asarray(synthdata.class_palette(num_classes))
    if len(pal) < num_classes:
        raise CLIError(f"palette has {len(pal)} colours, need {num_classes}")
    return pal


def overlay(image, labels, palette, alpha=0.5):
    out = np.asarray(image, dtype=np.float64).copy()
    hit = labels > 0
    out[hit] = (1 - alpha) * out[hit] + alpha * palette[labels[hit]]
    return out


def cmd_infer(args):
    from pihot import train as train_mod

    model, ckpt_cfg, _ = train_mod.load_model(args.checkpoint)
    cfg = ckpt_cfg
    if args.config is not None:
        cfg = config_mod.update(cfg, config_mod.parse_config_text(args.config.read_text()))
    cfg = config_mod.update(cfg, dict(args.overrides))
    image = pngio.load_image(args.image)
    if args.mask is not None:
        mask = load_mask(args.mask)
    elif cfg["plugins.mask_cmd"]:
        mask = external_mask(cfg["plugins.mask_cmd"], image)
    else:
        raise CLIError("no --mask given and no mask plugin configured (plugins.mask_cmd)")
    scale = cfg["plugins.depth_scale"]
    d_i = pngio.load_depth(args.depth, scale) if args.depth else None
    d_o = pngio.load_depth(args.depth_nohuman, scale) if args.depth_nohuman else None
    probs = pihot_forward(model, image, mask, Backends.from_config(cfg), cfg, d_i, d_o)
    palette = _palette(args.meta, probs.shape[0]) if args.overlay else None
    labels = probs_to_labels(probs)
    pngio.save_labels(args.out, labels)
    if args.probs:
        with open(args.probs, "wb") as fh:
            np.save(fh, probs.astype(np.float32))
    if args.overlay:
        pngio.save_image(args.overlay, overlay(image, labels, palette))
    print(f"wrote {args.out} ({labels.shape[0]}x{labels.shape[1]}, "
          f"{int((labels > 0).sum())} contact pixels)")
    return 0


def cmd_visualize_depth(args):
    cfg = _resolve_config(args, {})
    dataset = synthdata.load_dataset(args.data)
    by_id = {s.id: s for s in dataset}
    if args.id not in by_id:
        raise CLIError(f"no sample {args.id!r} in {args.data}")
    s = by_id[args.id]
    p = prepare(s.image, s.human_mask, Backends.from_config(cfg), cfg,
                s.depth_with_human, s.depth_no_human)
    if p.d_i is None:
        raise CLIError("depth maps are disabled (train.spo = false)")
    args.out.mkdir(parents=True, exist_ok=True)
    for name, arr in (("d_i", p.d_i), ("d_o", p.d_o), ("d_s", p.d_s)):
        pngio.save_gray(args.out / f"{args.id}_{name}.png", to_gray8(arr))
    print(f"wrote d_i, d_o, d_s for {args.id} to {args.out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "visualize-depth": cmd_visualize_depth,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CLIError, *EXPECTED_ERRORS) as exc:
        msg = " ".join(str(exc).split())
        print(f"pihot {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
