"""Trainable layers: linear, layer norm, multi-head attention, transformer block.

All layers operate on float64 Tensors and register their parameters through
the Module protocol so optimizers and checkpoints see one flat, stably
ordered list.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


class Module:
    """Base class; collects parameters from attributes in definition order."""

    def parameters(self):
        out = []
        for name, val in vars(self).items():
            if isinstance(val, Tensor):
                if val.requires_grad:
                    out.append((name, val))
            elif isinstance(val, Module):
                out.extend((f"{name}.{n}", p) for n, p in val.parameters())
            elif isinstance(val, (list, tuple)):
                for i, entry in enumerate(val):
                    if isinstance(entry, Module):
                        out.extend((f"{name}.{i}.{n}", p) for n, p in entry.parameters())
        return out

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()


class Linear(Module):
    """y = x @ W + b with Xavier-normal init."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        std = math.sqrt(2.0 / (d_in + d_out))
        self.weight = Tensor(rng.normal(0.0, std, size=(d_in, d_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x.matmul(self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return x.layer_norm(self.gamma, self.beta, self.eps)


class MultiHeadAttention(Module):
    """Scaled dot-product attention over set elements.

    No positional information anywhere, so the layer is permutation
    equivariant in its rows: reordering inputs reorders outputs identically.
    `mask` is an additive array broadcast onto the attention logits; padded
    keys carry a large negative value so they collect ~zero weight.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if d % heads != 0:
            raise ConfigError(f"model dim {d} not divisible by {heads} heads")
        self.heads = heads
        self.d_head = d // heads
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None, kv: Tensor | None = None) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        if kv is None:
            kv = x
        elif kv.ndim == 2:
            kv = kv.reshape(1, *kv.shape)
        B, L, d = x.shape
        Lk = kv.shape[1]
        h, dh = self.heads, self.d_head

        def split(t: Tensor, length: int) -> Tensor:
            # (B, L, d) -> (B, h, L, dh)
            return t.reshape(B, length, h, dh).transpose(1, 2)

        q = split(self.wq(x), L)
        k = split(self.wk(kv), Lk)
        v = split(self.wv(kv), Lk)
        scores = q.matmul(k.transpose(-1, -2)) * (1.0 / math.sqrt(dh))
        if mask is not None:
            scores = scores + Tensor(mask)
        attn = scores.softmax(axis=-1)
        mixed = attn.matmul(v)                      # (B, h, L, dh)
        mixed = mixed.transpose(1, 2).reshape(B, L, d)
        out = self.wo(mixed)
        if squeeze:
            out = out.select(0, 0)
        return out


class FeedForward(Module):
    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        self.lin1 = Linear(d, hidden, rng)
        self.lin2 = Linear(hidden, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(self.lin1(x).gelu())


class EncoderBlock(Module):
    """Pre-norm transformer block: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, d: int, heads: int, ff_hidden: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.ff = FeedForward(d, ff_hidden, rng)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.ln1(x), mask=mask)
        x = x + self.ff(self.ln2(x))
        return x


class MLPHead(Module):
    """Two-layer head: linear -> GELU -> linear, optional sigmoid on the end."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator,
                 sigmoid_out: bool = False):
        self.lin1 = Linear(d_in, hidden, rng)
        self.lin2 = Linear(hidden, d_out, rng)
        self.sigmoid_out = sigmoid_out

    def __call__(self, x: Tensor) -> Tensor:
        out = self.lin2(self.lin1(x).gelu())
        if self.sigmoid_out:
            out = out.sigmoid()
        return out
