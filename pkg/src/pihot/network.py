"""Model assembly: shared backbone, contact branch, attention blocks,
fusion, segmentation head and the weighted per-class BCE loss."""
import math

import torch
import torch.nn.functional as F
from torch import nn

from pihot.attention import DepthGuidedAttention, ObjectContactAttention

PROB_EPS = 1e-7


def conv_block(in_ch, out_ch, kernel=3, stride=1):
    # no conv bias: the following batch norm would cancel it
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=False),
    )


class TinyBackbone(nn.Module):
    """Four 3x3 conv blocks; the first log2(downsample) of them stride 2."""

    def __init__(self, channels=32, downsample=8):
        super().__init__()
        n_stride = int(round(math.log2(downsample))) if downsample >= 1 else -1
        if n_stride < 0 or 2 ** n_stride != downsample or n_stride > 4:
            raise ValueError(f"tiny backbone downsample must be 1, 2, 4, 8 or 16, got {downsample}")
        widths = [max(channels // 2, 8), channels, channels, channels]
        blocks, in_ch = [], 3
        for i, w in enumerate(widths):
            blocks.append(conv_block(in_ch, w, stride=2 if i < n_stride else 1))
            in_ch = w
        self.blocks = nn.Sequential(*blocks)
        self.downsample = downsample
        self.out_channels = channels

    def forward(self, x):
        return self.blocks(x)


class ResNet50Backbone(nn.Module):
    """ResNet-50 stage layout (random init) truncated at the stage whose
    stride matches ``downsample``, followed by a 1x1 reduction."""

    _stage_for = {4: 1, 8: 2, 16: 3, 32: 4}
    _stage_channels = {1: 256, 2: 512, 3: 1024, 4: 2048}

    def __init__(self, channels=32, downsample=32):
        super().__init__()
        if downsample not in self._stage_for:
            raise ValueError(f"resnet50_shape downsample must be 4, 8, 16 or 32, got {downsample}")
        from torchvision.models import resnet50

        net = resnet50(weights=None)
        n = self._stage_for[downsample]
        layers = [net.conv1, net.bn1, net.relu, net.maxpool]
        layers += [net.layer1, net.layer2, net.layer3, net.layer4][:n]
        self.trunk = nn.Sequential(*layers)
        self.reduce = nn.Conv2d(self._stage_channels[n], channels, 1)
        self.downsample = downsample
        self.out_channels = channels

    def forward(self, x):
        return self.reduce(self.trunk(x))


def make_backbone(variant="tiny", channels=32, downsample=8):
    if variant == "tiny":
        return TinyBackbone(channels, downsample)
    if variant == "resnet50_shape":
        return ResNet50Backbone(channels, downsample)
    raise ValueError(f"unknown backbone variant {variant!r}")


def backbone_forward(backbone, image):
    """Run the backbone after checking the image tiles evenly into features."""
    h, w = image.shape[-2:]
    f = backbone.downsample
    if h % f or w % f:
        raise ValueError(f"image size {h}x{w} is not divisible by downsample factor {f}")
    return backbone(image)


class ContactBranch(nn.Module):
    # placeholder design: two channel-preserving conv/BN/ReLU blocks
    def __init__(self, channels):
        super().__init__()
        self.blocks = nn.Sequential(conv_block(channels, channels), conv_block(channels, channels))

    def forward(self, x):
        return self.blocks(x)


def cpo_fuse(x_c, o_a, d_s, d_a, alpha=0.1, beta=0.1):
    """(x_c + alpha*o_a) * d_s + (x_c + alpha*o_a) + beta*d_a.

    ``d_s`` is a single-channel map broadcast over feature channels; it may
    be (H', W'), (B, H', W') or (B, 1, H', W').
    """
    if x_c.shape != o_a.shape or x_c.shape != d_a.shape:
        raise ValueError(
            f"fusion inputs differ: {tuple(x_c.shape)}, {tuple(o_a.shape)}, {tuple(d_a.shape)}"
        )
    if d_s.shape[-2:] != x_c.shape[-2:]:
        raise ValueError(f"depth map {tuple(d_s.shape)} does not match features {tuple(x_c.shape)}")
    if d_s.dim() == 3 and x_c.dim() == 4:
        d_s = d_s.unsqueeze(1)
    base = x_c + alpha * o_a
    return base * d_s + base + beta * d_a


class SegmentHead(nn.Module):
    """Three 1x1 conv/BN/ReLU sets, a final 1x1 conv to per-class logits,
    bilinear upsampling to image size, then a sigmoid."""

    def __init__(self, channels, num_classes=18):
        super().__init__()
        self.body = nn.Sequential(*(conv_block(channels, channels, kernel=1) for _ in range(3)))
        self.classifier = nn.Conv2d(channels, num_classes, 1)
        nn.init.zeros_(self.classifier.bias)

    def logits(self, x, size):
        out = self.classifier(self.body(x))
        return F.interpolate(out, size=size, mode="bilinear", align_corners=False)

    def forward(self, x, size):
        return torch.sigmoid(self.logits(x, size)).clamp(PROB_EPS, 1 - PROB_EPS)


def class_weight_vector(num_classes, background_weight=0.2, class_weights=None):
    if class_weights is not None:
        w = torch.as_tensor(class_weights, dtype=torch.float64)
        if w.numel() != num_classes:
            raise ValueError(f"need {num_classes} class weights, got {w.numel()}")
    else:
        w = torch.ones(num_classes, dtype=torch.float64)
        w[0] = background_weight
    if (w <= 0).any():
        raise ValueError("loss weights must be positive")
    return w


def hot_loss(pred, target, background_weight=0.2, class_weights=None, reduction="mean"):
    """Class-weighted binary cross-entropy summed over classes.

    ``pred`` holds per-class probabilities (B, C, H, W) or (C, H, W);
    ``target`` holds integer labels (B, H, W) or (H, W). The result is
    averaged over pixels (``mean``) or summed (``sum``).
    """
    if pred.dim() == 3:
        pred = pred.unsqueeze(0)
        target = target.unsqueeze(0)
    n_cls = pred.shape[1]
    if target.shape != pred.shape[:1] + pred.shape[2:]:
        raise ValueError(f"target shape {tuple(target.shape)} does not match {tuple(pred.shape)}")
    if target.min() < 0 or target.max() >= n_cls:
        raise ValueError(f"labels must lie in [0, {n_cls})")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    w = class_weight_vector(n_cls, background_weight, class_weights).to(pred.dtype)
    y = F.one_hot(target.long(), n_cls).permute(0, 3, 1, 2).to(pred.dtype)
    p = pred.clamp(PROB_EPS, 1 - PROB_EPS)
    bce = -(y * torch.log(p) + (1 - y) * torch.log(1 - p))
    per_pixel = (bce * w.view(1, -1, 1, 1)).sum(dim=1)
    return per_pixel.mean() if reduction == "mean" else per_pixel.sum()


class PIHOT(nn.Module):
    """Full contact-segmentation network.

    ``forward(image, image_o, d_s)`` takes the original image, the
    human-removed image (both (B, 3, H, W) in [0, 1]) and the normalized
    depth-difference map at image resolution (B, 1, H, W). Disabled
    modules are replaced as follows: ``oi`` off uses ``image`` for
    ``image_o``; ``ipi`` off passes the object features through;
    ``spo`` off uses an all-ones depth map; ``idsi`` off contributes zeros.
    """

    def __init__(self, variant="tiny", channels=32, downsample=8, num_classes=18,
                 attn_dim=0, alpha=0.1, beta=0.1, oi=True, ipi=True, spo=True, idsi=True):
        super().__init__()
        self.backbone = make_backbone(variant, channels, downsample)
        self.contact = ContactBranch(channels)
        self.ipi = ObjectContactAttention(channels, attn_dim or None)
        self.idsi = DepthGuidedAttention(channels, attn_dim or None)
        self.head = SegmentHead(channels, num_classes)
        self.alpha = alpha
        self.beta = beta
        self.flags = {"oi": oi, "ipi": ipi, "spo": spo, "idsi": idsi}
        self.num_classes = num_classes

    @classmethod
    def from_config(cls, cfg):
        return cls(
            variant=cfg["model.variant"],
            channels=cfg["model.channels"],
            downsample=cfg["model.downsample"],
            num_classes=cfg["model.num_classes"],
            attn_dim=cfg["model.attn_dim"],
            alpha=cfg["model.alpha"],
            beta=cfg["model.beta"],
            **{k: cfg[f"train.{k}"] for k in ("oi", "ipi", "spo", "idsi")},
        )

    def parts(self, image, image_o, d_s):
        size = image.shape[-2:]
        x = backbone_forward(self.backbone, image - 0.5)
        x_c = self.contact(x)
        if self.flags["oi"]:
            x_o = backbone_forward(self.backbone, image_o - 0.5)
        else:
            x_o = x
        o_a = self.ipi(x_o, x_c) if self.flags["ipi"] else x_o
        fh, fw = x.shape[-2:]
        if self.flags["spo"]:
            if d_s.dim() == 3:
                d_s = d_s.unsqueeze(1)
            ds = F.avg_pool2d(d_s, kernel_size=(size[0] // fh, size[1] // fw))
        else:
            ds = torch.ones(x.shape[0], 1, fh, fw, dtype=x.dtype, device=x.device)
        d_a = self.idsi(ds, o_a) if self.flags["idsi"] else torch.zeros_like(o_a)
        fused = cpo_fuse(x_c, o_a, ds, d_a, self.alpha, self.beta)
        probs = self.head(fused, size)
        return {"x": x, "x_c": x_c, "x_o": x_o, "o_a": o_a, "d_s": ds, "d_a": d_a,
                "fused": fused, "probs": probs}

    def forward(self, image, image_o, d_s):
        return self.parts(image, image_o, d_s)["probs"]
