"""Per-item feature extraction.

Each catalog item carries a numeric image payload and a text description.
The image side goes through a small trainable backbone (MLP over the payload,
or a tiny CNN when payloads are 32x32 grayscale images). The text side is a
hashed bag-of-words pushed through a frozen random projection, with only a
linear head left trainable. Image and text halves are concatenated, image
first, into the item feature vector.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .nn import Linear, Module, Tensor

HASH_BUCKETS = 4096
# Bucket 0 is reserved so empty descriptions still map to a real embedding.
_EMPTY_BUCKET = 0

# The projection is part of the architecture, not of a training run, so its
# seed is a fixed constant rather than the run seed.
_TEXT_PROJECTION_SEED = 7150

_PUNCT_RE = re.compile(r"[^\w\s]")
_WS_RE = re.compile(r"\s+")


def normalize_text(s: str) -> str:
    """Lowercase, drop punctuation, collapse runs of whitespace."""
    s = _PUNCT_RE.sub(" ", s.lower())
    return _WS_RE.sub(" ", s).strip()


def hash_token(token: str) -> int:
    """Stable token -> bucket id in [1, HASH_BUCKETS). md5, not Python's
    salted hash, so ids survive across processes."""
    digest = hashlib.md5(token.encode("utf-8")).hexdigest()
    return 1 + int(digest[:8], 16) % (HASH_BUCKETS - 1)


def text_buckets(s: str) -> list:
    norm = normalize_text(s)
    if not norm:
        return [_EMPTY_BUCKET]
    return [hash_token(t) for t in norm.split(" ")]


@dataclass
class ItemEncoderConfig:
    d_img: int = 64
    d_text: int = 64
    payload_dim: int = 32
    image_encoder: str = "mlp"       # mlp | cnn
    text_encoder: str = "hash_bow"
    image_hidden: int = 64
    text_proj_dim: int = 64

    def validate(self) -> None:
        if self.d_img < 1 or self.d_text < 1:
            raise ConfigError("embedding dims must be positive")
        if self.image_encoder not in ("mlp", "cnn"):
            raise ConfigError(f"unknown image_encoder {self.image_encoder!r}")
        if self.text_encoder != "hash_bow":
            raise ConfigError(f"unknown text_encoder {self.text_encoder!r}")

    @property
    def feature_dim(self) -> int:
        return self.d_img + self.d_text


class MlpImageEncoder(Module):
    """Two-layer MLP over a fixed-length float payload."""

    def __init__(self, cfg: ItemEncoderConfig, rng: np.random.Generator):
        self.payload_dim = cfg.payload_dim
        self.lin1 = Linear(cfg.payload_dim, cfg.image_hidden, rng)
        self.lin2 = Linear(cfg.image_hidden, cfg.d_img, rng)

    def _check(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.ndim != 2 or batch.shape[1] != self.payload_dim:
            raise InputError(
                f"image payload must have {self.payload_dim} values, got shape {batch.shape}")
        return batch

    def __call__(self, payload_batch) -> Tensor:
        x = Tensor(self._check(payload_batch))
        return self.lin2(self.lin1(x).gelu())


class TinyCnnImageEncoder(Module):
    """One conv layer over 32x32 grayscale, global average pool, linear out."""

    SIDE = 32

    def __init__(self, cfg: ItemEncoderConfig, rng: np.random.Generator,
                 channels: int = 8, kernel: int = 5):
        self.channels = channels
        self.kernel = Tensor(
            rng.normal(0.0, 1.0 / kernel, size=(channels, 1, kernel, kernel)),
            requires_grad=True)
        self.out = Linear(channels, cfg.d_img, rng)

    def _check(self, batch) -> np.ndarray:
        x = np.asarray(batch, dtype=np.float64)
        side = self.SIDE
        if x.ndim == 2 and x.shape == (side, side):
            x = x[None]
        if x.ndim == 3 and x.shape[1:] == (side, side):
            x = x[:, None]
        elif x.ndim == 2 and x.shape[1] == side * side:
            x = x.reshape(-1, 1, side, side)
        if x.ndim != 4 or x.shape[1:] != (1, side, side):
            raise InputError(f"cnn payload must be {side}x{side} grayscale, got shape {np.asarray(batch).shape}")
        return x

    def __call__(self, payload_batch) -> Tensor:
        x = Tensor(self._check(payload_batch))
        feat = x.conv2d(self.kernel).relu().mean(axis=(2, 3))   # (B, channels)
        return self.out(feat)


class HashedBowTextEncoder(Module):
    """Hashed bag-of-words -> frozen random projection -> trainable head.

    The projection matrix never trains; gradients only reach the head, which
    mirrors a frozen featurizer with a tunable fc on top.
    """

    def __init__(self, cfg: ItemEncoderConfig, rng: np.random.Generator):
        proj_rng = np.random.default_rng(_TEXT_PROJECTION_SEED)
        self.projection = Tensor(proj_rng.normal(
            0.0, 1.0 / math.sqrt(cfg.text_proj_dim),
            size=(HASH_BUCKETS, cfg.text_proj_dim)))    # frozen: requires_grad stays False
        self.head = Linear(cfg.text_proj_dim, cfg.d_text, rng)
        self._base_cache: dict = {}

    def frozen_base(self, text: str) -> np.ndarray:
        key = normalize_text(text)
        hit = self._base_cache.get(key)
        if hit is None:
            buckets = text_buckets(key)
            hit = self.projection.data[buckets].sum(axis=0)
            self._base_cache[key] = hit
        return hit

    def __call__(self, texts) -> Tensor:
        if isinstance(texts, str):
            texts = [texts]
        base = np.stack([self.frozen_base(t) for t in texts])
        return self.head(Tensor(base))


class ItemEncoder(Module):
    """Maps items to feature vectors: image embedding then text embedding."""

    def __init__(self, cfg: ItemEncoderConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        if cfg.image_encoder == "mlp":
            self.image = MlpImageEncoder(cfg, rng)
        else:
            self.image = TinyCnnImageEncoder(cfg, rng)
        self.text = HashedBowTextEncoder(cfg, rng)

    def encode_text(self, texts) -> Tensor:
        return self.text(texts)

    def encode_items(self, items) -> Tensor:
        """items: sequence with .image_payload and .description -> (L, d) features."""
        if len(items) == 0:
            raise InputError("cannot encode an empty item list")
        if self.cfg.image_encoder == "mlp":
            payloads = np.stack([np.asarray(it.image_payload, dtype=np.float64)
                                 for it in items])
        else:
            payloads = [it.image_payload for it in items]
        img = self.image(payloads)
        txt = self.text([it.description for it in items])
        return Tensor.concat([img, txt], axis=1)
