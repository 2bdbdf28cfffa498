"""Scaled dot-product feature attention and the two interaction blocks.

``ObjectContactAttention`` lets inpainted-object features query the
contact features; ``DepthGuidedAttention`` lets the depth-difference map
query the result. Attention is computed per image over its H'*W' tokens.
"""
import math

import numpy as np
import torch
from torch import nn


class _FeatureAttention(torch.autograd.Function):
    @staticmethod
    def forward(ctx, q, k, v):
        scale = 1.0 / math.sqrt(q.shape[-1])
        logits = torch.matmul(q, k.transpose(-2, -1)) * scale
        weights = torch.softmax(logits, dim=-1)
        ctx.save_for_backward(q, k, v, weights)
        ctx.scale = scale
        return torch.matmul(weights, v)

    @staticmethod
    def backward(ctx, grad_out):
        q, k, v, p = ctx.saved_tensors
        grad_v = torch.matmul(p.transpose(-2, -1), grad_out)
        grad_p = torch.matmul(grad_out, v.transpose(-2, -1))
        # softmax Jacobian-vector product, row by row
        grad_logits = p * (grad_p - (grad_p * p).sum(dim=-1, keepdim=True))
        grad_logits = grad_logits * ctx.scale
        grad_q = torch.matmul(grad_logits, k)
        grad_k = torch.matmul(grad_logits.transpose(-2, -1), q)
        return grad_q, grad_k, grad_v


def feature_attention(q, k, v):
    """softmax(Q K^T / sqrt(d)) V over the last two axes.

    ``q`` is (..., Lq, d), ``k`` is (..., Lk, d), ``v`` is (..., Lk, dv);
    ``d`` is the query/key width. Accepts numpy arrays (returns numpy) or
    tensors (differentiable, with a hand-written backward).
    """
    as_numpy = isinstance(q, np.ndarray)
    if as_numpy:
        q, k, v = (torch.from_numpy(np.asarray(a, dtype=np.float64)) for a in (q, k, v))
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key widths differ: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value lengths differ: {k.shape[-2]} vs {v.shape[-2]}")
    if q.ndim < 2 or q.shape[-1] < 1 or q.shape[-2] < 1 or k.shape[-2] < 1:
        raise ValueError("token matrices need at least one row and one column")
    out = _FeatureAttention.apply(q, k, v)
    return out.numpy() if as_numpy else out


def tokens(x: torch.Tensor) -> torch.Tensor:
    """(B, C, H, W) -> (B, H*W, C)."""
    return x.flatten(2).transpose(1, 2)


def untokens(t: torch.Tensor, height: int, width: int) -> torch.Tensor:
    return t.transpose(1, 2).reshape(t.shape[0], t.shape[2], height, width)


def projection(in_ch: int, out_ch: int, bias: bool = True) -> nn.Conv2d:
    """1x1 projection, small-uniform weights, zero bias."""
    conv = nn.Conv2d(in_ch, out_ch, kernel_size=1, bias=bias)
    bound = 1.0 / math.sqrt(in_ch)
    nn.init.uniform_(conv.weight, -bound, bound)
    if bias:
        nn.init.zeros_(conv.bias)
    return conv


class ObjectContactAttention(nn.Module):
    """Queries from the object features, keys and values from the contact features."""

    def __init__(self, channels: int, attn_dim: int | None = None):
        super().__init__()
        d = attn_dim or channels
        self.query = projection(channels, d)
        self.key = projection(channels, d, bias=False)  # softmax ignores a key bias
        self.value = projection(channels, channels)

    def forward(self, x_o, x_c):
        if x_o.shape != x_c.shape:
            raise ValueError(f"feature shapes differ: {tuple(x_o.shape)} vs {tuple(x_c.shape)}")
        h, w = x_c.shape[-2:]
        out = feature_attention(
            tokens(self.query(x_o)), tokens(self.key(x_c)), tokens(self.value(x_c))
        )
        return untokens(out, h, w)


class DepthGuidedAttention(nn.Module):
    """Queries from the depth-difference map, keys and values from ``o_a``."""

    def __init__(self, channels: int, attn_dim: int | None = None):
        super().__init__()
        d = attn_dim or channels
        self.query = projection(1, d)
        self.key = projection(channels, d, bias=False)  # softmax ignores a key bias
        self.value = projection(channels, channels)

    def forward(self, d_s, o_a):
        if d_s.dim() == 3:
            d_s = d_s.unsqueeze(1)
        if d_s.shape[0] != o_a.shape[0] or d_s.shape[1] != 1 or d_s.shape[-2:] != o_a.shape[-2:]:
            raise ValueError(
                f"depth map {tuple(d_s.shape)} does not match features {tuple(o_a.shape)}"
            )
        h, w = o_a.shape[-2:]
        out = feature_attention(
            tokens(self.query(d_s)), tokens(self.key(o_a)), tokens(self.value(o_a))
        )
        return untokens(out, h, w)


# short aliases matching the module names used in configs and logs
IPI = ObjectContactAttention
IDSI = DepthGuidedAttention
