"""Procedural scenes with exact ground truth.

Each scene is a wall, a few flat-coloured objects and one human, painted
back to front by depth. The generator renders every scene twice (with and
without the human) and records both depth buffers. Contact labels follow a
3-D proximity rule: a visible human pixel is in contact with an object
when it lies within ``contact_radius`` pixels (Chebyshev) of the object's
full footprint and the two depths differ by at most ``depth_tolerance``.
Objects sitting well behind the human overlap it in 2-D but never touch it.
"""
import colorsys
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import UnidentifiedImageError

from pihot import kernels, pngio
from pihot.mask_ops import MaskError, load_mask, save_mask

DEPTH_SCALE = 1000.0
FORMAT_VERSION = 1
MIN_CANVAS = 16
_TOL_SLACK = 1e-9


class DatasetError(RuntimeError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class MissingFileError(DatasetError):
    pass


class CorruptFileError(DatasetError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


class InvariantError(DatasetError):
    pass


@dataclass
class Shape:
    kind: str  # "rect" or "ellipse"
    top: int
    left: int
    bottom: int  # exclusive
    right: int  # exclusive

    def footprint(self, height, width):
        yy, xx = np.mgrid[0:height, 0:width]
        if self.kind == "rect":
            return (yy >= self.top) & (yy < self.bottom) & (xx >= self.left) & (xx < self.right)
        cy = (self.top + self.bottom - 1) / 2.0
        cx = (self.left + self.right - 1) / 2.0
        ry = max((self.bottom - self.top) / 2.0, 0.5)
        rx = max((self.right - self.left) / 2.0, 0.5)
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


@dataclass
class Layer:
    shapes: list
    depth: float
    color: tuple
    class_id: int = 0

    def footprint(self, height, width):
        out = np.zeros((height, width), dtype=bool)
        for s in self.shapes:
            out |= s.footprint(height, width)
        return out


@dataclass
class SceneSpec:
    height: int
    width: int
    human: Layer
    objects: list = field(default_factory=list)
    wall_depth: float = 3.0
    wall_color: tuple = (0.6, 0.6, 0.6)
    contact_radius: int = 2
    depth_tolerance: float = 0.1
    noise: float = 0.02
    noise_seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        def layer(ld):
            return Layer([Shape(**s) for s in ld["shapes"]], ld["depth"],
                         tuple(ld["color"]), ld["class_id"])

        kw = dict(d)
        kw["human"] = layer(d["human"])
        kw["objects"] = [layer(o) for o in d["objects"]]
        kw["wall_color"] = tuple(d["wall_color"])
        return cls(**kw)


@dataclass
class SceneSample:
    id: str
    image: np.ndarray  # H x W x 3 float32 in [0, 1]
    image_no_human: np.ndarray
    human_mask: np.ndarray  # H x W uint8 {0, 1}
    depth_with_human: np.ndarray  # H x W float64
    depth_no_human: np.ndarray
    labels: np.ndarray  # H x W int64
    spec: SceneSpec | None = None


def class_palette(num_classes):
    """Fixed, well separated RGB colour per class id; class 0 is black."""
    pal = [(0.0, 0.0, 0.0)]
    for k in range(1, num_classes):
        h = ((k - 1) * 0.618034) % 1.0
        pal.append(colorsys.hsv_to_rgb(h, 0.75, 0.85))
    return pal


def _validate_spec(spec: SceneSpec, num_classes=None):
    if spec.height < MIN_CANVAS or spec.width < MIN_CANVAS:
        raise ValueError(f"canvas {spec.height}x{spec.width} too small (min {MIN_CANVAS})")
    depths = [spec.wall_depth, spec.human.depth] + [o.depth for o in spec.objects]
    if min(depths) <= 0:
        raise ValueError("all depths must be positive")
    for o in spec.objects:
        if o.class_id < 1 or (num_classes is not None and o.class_id >= num_classes):
            raise ValueError(f"object class id {o.class_id} out of range")


def render(spec: SceneSpec):
    """Paint the scene; returns (image, image_no_human, mask, depth, depth_no_human)."""
    _validate_spec(spec)
    h, w = spec.height, spec.width
    rng = np.random.default_rng(spec.noise_seed)
    n_layers = 2 + len(spec.objects)
    textures = rng.uniform(-spec.noise, spec.noise, size=(n_layers, h, w, 3))

    def paint(include_human):
        img = np.empty((h, w, 3))
        img[:] = spec.wall_color
        img += textures[0]
        depth = np.full((h, w), float(spec.wall_depth))
        owner = np.full((h, w), -1)
        layers = [(o.depth, 1, i, o) for i, o in enumerate(spec.objects)]
        if include_human:
            # ties go to the human (drawn last among equal depths)
            layers.append((spec.human.depth, 0, -1, spec.human))
        for d, _, i, layer in sorted(layers, key=lambda t: (-t[0], -t[1], t[2])):
            fp = layer.footprint(h, w)
            tex = textures[1 + i] if i >= 0 else textures[-1]
            img[fp] = np.asarray(layer.color) + tex[fp]
            depth[fp] = d
            owner[fp] = i
        return np.clip(img, 0.0, 1.0), depth, owner

    img, depth, owner = paint(True)
    img_nh, depth_nh, _ = paint(False)
    mask = (owner == -1) & spec.human.footprint(h, w)
    return img, img_nh, mask.astype(np.uint8), depth, depth_nh


def contact_labels(spec: SceneSpec, human_mask) -> np.ndarray:
    """Apply the proximity rule; the first qualifying object (list order) wins."""
    h, w = spec.height, spec.width
    labels = np.zeros((h, w), dtype=np.int64)
    visible = np.asarray(human_mask).astype(bool)
    size = 2 * spec.contact_radius + 1
    for obj in spec.objects:
        if abs(spec.human.depth - obj.depth) > spec.depth_tolerance + _TOL_SLACK:
            continue
        near = kernels.dilate(obj.footprint(h, w).astype(np.uint8), size).astype(bool)
        labels[visible & near & (labels == 0)] = obj.class_id
    return labels


def sample_from_spec(spec: SceneSpec, sample_id="000000", depth_scale=DEPTH_SCALE) -> SceneSample:
    """Render a spec and quantize it exactly as it will be stored on disk."""
    img, img_nh, mask, depth, depth_nh = render(spec)
    return SceneSample(
        id=sample_id,
        image=pngio.quantize_image(img),
        image_no_human=pngio.quantize_image(img_nh),
        human_mask=mask,
        depth_with_human=pngio.quantize_depth(depth, depth_scale),
        depth_no_human=pngio.quantize_depth(depth_nh, depth_scale),
        labels=contact_labels(spec, mask),
        spec=spec,
    )


def _q(v, scale=DEPTH_SCALE):
    return round(v * scale) / scale


def random_scene(rng, height=64, width=64, num_classes=18, contact_radius=2,
                 depth_tolerance=0.1, max_objects=3, noise=0.02) -> SceneSpec:
    if height < MIN_CANVAS or width < MIN_CANVAS:
        raise ValueError(f"canvas {height}x{width} too small (min {MIN_CANVAS})")
    if num_classes < 2:
        raise ValueError("need at least one contact class")
    pal = class_palette(num_classes)

    th = int(rng.integers(int(0.35 * height), int(0.5 * height) + 1))
    tw = int(rng.integers(int(0.15 * width), int(0.25 * width) + 1))
    head = max(int(0.14 * height), 3)
    top = int(rng.integers(head + 1, height - th - 1))
    left = int(rng.integers(int(0.25 * width), int(0.75 * width) - tw + 1))
    torso = Shape("rect", top, left, top + th, left + tw)
    hx = left + tw // 2 - head // 2
    head_shape = Shape("ellipse", top - head, hx, top, hx + head)
    human_depth = _q(rng.uniform(0.9, 1.3))
    skin = tuple(float(c) for c in np.array([0.92, 0.75, 0.62]) + rng.uniform(-0.05, 0.05, 3))
    human = Layer([torso, head_shape], human_depth, skin, 0)

    objects = []
    n_obj = int(rng.integers(1, max_objects + 1))
    for _ in range(n_obj):
        cls = int(rng.integers(1, num_classes))
        oh = int(rng.integers(int(0.15 * height), int(0.35 * height) + 1))
        ow = int(rng.integers(int(0.15 * width), int(0.3 * width) + 1))
        side = rng.integers(0, 2)
        # straddle a torso side so the object overlaps or abuts the human
        reach = int(rng.integers(0, max(ow // 2, 1) + 1))
        if side == 0:
            ol = left - ow + reach
        else:
            ol = left + tw - reach
        ot = int(rng.integers(top - oh // 2, top + th - oh // 2 + 1))
        ol = int(np.clip(ol, 0, width - ow))
        ot = int(np.clip(ot, 0, height - oh))
        kind = "rect" if rng.random() < 0.7 else "ellipse"
        if rng.random() < 0.5:
            depth = _q(human_depth + rng.uniform(0.0, depth_tolerance / 2))
        else:
            depth = _q(min(human_depth + rng.uniform(0.5, 1.5), 2.7))
        objects.append(Layer([Shape(kind, ot, ol, ot + oh, ol + ow)], depth,
                             tuple(float(c) for c in pal[cls]), cls))

    wall = float(rng.uniform(0.35, 0.55))
    return SceneSpec(
        height=height, width=width, human=human, objects=objects, wall_depth=3.0,
        wall_color=(wall, wall, wall), contact_radius=contact_radius,
        depth_tolerance=depth_tolerance, noise=noise,
        noise_seed=int(rng.integers(0, 2**31 - 1)),
    )


def synth_params(cfg) -> dict:
    return {
        "height": cfg["synth.height"],
        "width": cfg["synth.width"],
        "num_classes": cfg["synth.num_classes"],
        "contact_radius": cfg["synth.contact_radius"],
        "depth_tolerance": cfg["synth.depth_tolerance"],
        "max_objects": cfg["synth.max_objects"],
        "noise": cfg["synth.noise"],
    }


_DIRS = ("images", "images_nohuman", "masks", "depth", "depth_nohuman", "labels")


def generate_samples(seed: int, count: int, **params) -> list[SceneSample]:
    if count < 1:
        raise ValueError("count must be >= 1")
    samples = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        spec = random_scene(rng, **params)
        samples.append(sample_from_spec(spec, f"{i:06d}"))
    return samples


def write_dataset(root, samples, seed, params, depth_scale=DEPTH_SCALE):
    root = Path(root)
    for d in _DIRS:
        (root / d).mkdir(parents=True, exist_ok=True)
    for s in samples:
        pngio.save_image(root / "images" / f"{s.id}.png", s.image)
        pngio.save_image(root / "images_nohuman" / f"{s.id}.png", s.image_no_human)
        save_mask(root / "masks" / f"{s.id}.png", s.human_mask)
        pngio.save_depth(root / "depth" / f"{s.id}.png", s.depth_with_human, depth_scale)
        pngio.save_depth(root / "depth_nohuman" / f"{s.id}.png", s.depth_no_human, depth_scale)
        pngio.save_labels(root / "labels" / f"{s.id}.png", s.labels)
    num_classes = params["num_classes"]
    meta = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "count": len(samples),
        "params": params,
        "depth_scale": depth_scale,
        "num_classes": num_classes,
        "class_names": ["background"] + [f"contact_{k:02d}" for k in range(1, num_classes)],
        "palette": [[round(c * 255) for c in rgb] for rgb in class_palette(num_classes)],
        "scenes": {s.id: s.spec.to_dict() for s in samples if s.spec is not None},
    }
    _atomic(lambda p: Path(p).write_text(json.dumps(meta, indent=1, sort_keys=True)), root / "meta")
    return meta


def _atomic(write, path):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def generate(root, seed: int, count: int, **params) -> list[SceneSample]:
    """Generate ``count`` scenes deterministically from ``seed`` into ``root``."""
    samples = generate_samples(seed, count, **params)
    write_dataset(root, samples, seed, params)
    return samples


class Dataset:
    """Samples of a generated dataset, in lexicographic id order."""

    def __init__(self, root, samples, meta):
        self.root = Path(root)
        self.samples = samples
        self.meta = meta

    @property
    def num_classes(self):
        return self.meta["num_classes"]

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _read(loader, path, *args):
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    try:
        return loader(path, *args)
    except (OSError, UnidentifiedImageError, ValueError, MaskError) as exc:
        raise CorruptFileError(f"cannot parse {path}: {exc}") from exc


def load_dataset(root, check_invariants=True) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise MissingFileError(f"dataset directory not found: {root}")
    img_dir = root / "images"
    ids = sorted(p.stem for p in img_dir.glob("*.png")) if img_dir.is_dir() else []
    meta_path = root / "meta"
    if not ids:
        raise EmptyDatasetError(f"empty dataset: no images under {img_dir}")
    if not meta_path.exists():
        raise MissingFileError(f"missing file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"cannot parse {meta_path}: {exc}") from exc
    scale = float(meta.get("depth_scale", DEPTH_SCALE))
    num_classes = int(meta["num_classes"])

    samples = []
    for sid in ids:
        image = _read(pngio.load_image, root / "images" / f"{sid}.png")
        image_nh = _read(pngio.load_image, root / "images_nohuman" / f"{sid}.png")
        mask = _read(load_mask, root / "masks" / f"{sid}.png")
        depth = _read(pngio.load_depth, root / "depth" / f"{sid}.png", scale)
        depth_nh = _read(pngio.load_depth, root / "depth_nohuman" / f"{sid}.png", scale)
        labels = _read(pngio.load_labels, root / "labels" / f"{sid}.png")
        shape = image.shape[:2]
        for name, arr in (("images_nohuman", image_nh), ("masks", mask), ("depth", depth),
                          ("depth_nohuman", depth_nh), ("labels", labels)):
            if arr.shape[:2] != shape:
                raise DimensionMismatchError(
                    f"{name}/{sid}.png is {arr.shape[:2]}, expected {shape}")
        if labels.max() >= num_classes:
            raise LabelRangeError(
                f"labels/{sid}.png has label {labels.max()} >= num_classes {num_classes}")
        spec_d = meta.get("scenes", {}).get(sid)
        spec = SceneSpec.from_dict(spec_d) if spec_d else None
        sample = SceneSample(sid, image, image_nh, mask, depth, depth_nh, labels, spec)
        if check_invariants:
            check_sample(sample)
        samples.append(sample)
    return Dataset(root, samples, meta)


def check_sample(s: SceneSample) -> None:
    outside = s.human_mask == 0
    if not np.array_equal(s.image[outside], s.image_no_human[outside]):
        raise InvariantError(f"{s.id}: human-free image differs outside the human mask")
    if not np.array_equal(s.depth_with_human[outside], s.depth_no_human[outside]):
        raise InvariantError(f"{s.id}: human-free depth differs outside the human mask")
    if (s.labels[outside] != 0).any():
        raise InvariantError(f"{s.id}: contact labels outside the human mask")
