"""Set encoder over item features with two task heads.

A shared transformer trunk reads a sequence of item feature vectors with a
task token prepended at position 0. No positional encodings exist anywhere,
so outputs are invariant to item order. The compatibility head turns the
position-0 output into a probability; the retrieval head turns it into a
target embedding living in the same space as item features, so nearest
neighbor search against a catalog is meaningful.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoders import ItemEncoder, ItemEncoderConfig
from .errors import ConfigError, InputError
from .nn import EncoderBlock, LayerNorm, MLPHead, Module, Tensor

MASK_NEG = -1e9


@dataclass
class TargetSpec:
    """What the missing item should be: a category name or free text."""
    kind: str
    text: str

    def validate(self) -> None:
        if self.kind not in ("category", "free_text"):
            raise InputError(f"unknown target kind {self.kind!r}")
        if not self.text or not self.text.strip():
            raise InputError("target text must be non-empty")


@dataclass
class ModelConfig:
    model_dim: int = 128
    layers: int = 2
    heads: int = 4
    ff_hidden: int = 256
    max_outfit_len: int = 8
    encoder: ItemEncoderConfig = field(default_factory=ItemEncoderConfig)

    def validate(self) -> None:
        self.encoder.validate()
        if self.model_dim != self.encoder.d_img + self.encoder.d_text:
            raise ConfigError(
                f"model_dim {self.model_dim} must equal d_img + d_text "
                f"({self.encoder.d_img} + {self.encoder.d_text})")
        if self.model_dim % self.heads != 0:
            raise ConfigError("model_dim must divide evenly across heads")
        if self.layers < 1:
            raise ConfigError("need at least one encoder layer")
        if self.max_outfit_len < 2:
            raise ConfigError("max_outfit_len must be at least 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        enc = ItemEncoderConfig(**d.pop("encoder"))
        return ModelConfig(encoder=enc, **d)


def full_scale_config() -> ModelConfig:
    """Full-size preset: deeper trunk, more heads, same 128-dim features."""
    return ModelConfig(layers=6, heads=16, ff_hidden=512)


def build_padding_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """Additive attention mask over [token] + max_len item slots.

    Shape (B, 1, 1, max_len + 1): zeros where a key is real, MASK_NEG where
    padded. Position 0 is the task token and is never masked.
    """
    B = len(lengths)
    mask = np.full((B, 1, 1, max_len + 1), MASK_NEG)
    mask[:, :, :, 0] = 0.0
    for i, n in enumerate(lengths):
        mask[i, :, :, 1:1 + int(n)] = 0.0
    return mask


def pack_features(features: Tensor, index_lists) -> tuple:
    """Pad variable-length outfits into one (B, Lmax, d) tensor.

    `features` is an (N, d) matrix; `index_lists` gives each outfit's row
    indices into it. Padded slots point at a constant zero row appended to
    the table, so their gradient contribution is discarded for free.
    """
    B = len(index_lists)
    lengths = np.array([len(ix) for ix in index_lists], dtype=np.int64)
    lmax = int(lengths.max())
    n = features.shape[0]
    idx = np.full((B, lmax), n, dtype=np.int64)
    for i, ix in enumerate(index_lists):
        idx[i, :len(ix)] = ix
    table = Tensor.concat([features, Tensor(np.zeros((1, features.shape[1])))], axis=0)
    return table.gather_rows(idx), lengths


class OutfitModel(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        d = config.model_dim
        self.item_encoder = ItemEncoder(config.encoder, rng)
        self.outfit_token = Tensor(rng.normal(0.0, 0.02, size=(1, d)), requires_grad=True)
        self.empty_image_embedding = Tensor(
            rng.normal(0.0, 0.02, size=(1, config.encoder.d_img)), requires_grad=True)
        self.blocks = [EncoderBlock(d, config.heads, config.ff_hidden, rng)
                       for _ in range(config.layers)]
        self.ln_final = LayerNorm(d)
        self.cp_head = MLPHead(d, d, 1, rng, sigmoid_out=True)
        self.cir_head = MLPHead(d, d, d, rng, sigmoid_out=False)
        # plain counters (ints are invisible to parameters())
        self.cp_calls = 0
        self.cir_calls = 0

    # ---- trunk ----

    def _encode_sequence(self, seq: Tensor, mask: np.ndarray | None) -> Tensor:
        for blk in self.blocks:
            seq = blk(seq, mask=mask)
        return self.ln_final(seq)

    def _run(self, token_rows: Tensor, padded: Tensor, lengths: np.ndarray) -> Tensor:
        """token_rows: (B, 1, d); padded: (B, Lmax, d). Returns (B, d) at position 0."""
        seq = Tensor.concat([token_rows, padded], axis=1)
        mask = build_padding_mask(lengths, padded.shape[1])
        return self._encode_sequence(seq, mask).select(1, 0)

    def _broadcast_token(self, token: Tensor, B: int) -> Tensor:
        return token.gather_rows(np.zeros((B, 1), dtype=np.int64))

    # ---- compatibility scoring ----

    def cp_forward_batch(self, padded: Tensor, lengths: np.ndarray) -> Tensor:
        if np.any(lengths < 2):
            raise InputError("compatibility scoring needs at least 2 items per outfit")
        if np.any(lengths > self.config.max_outfit_len):
            raise InputError(f"outfit exceeds max length {self.config.max_outfit_len}")
        self.cp_calls += 1
        B = padded.shape[0]
        tok = self._broadcast_token(self.outfit_token, B)
        pooled = self._run(tok, padded, lengths)
        return self.cp_head(pooled).reshape(B)

    def cp_forward(self, features: Tensor) -> Tensor:
        """features: (L, d) for one outfit -> scalar score in (0, 1)."""
        L = features.shape[0]
        padded = features.reshape(1, L, features.shape[1])
        return self.cp_forward_batch(padded, np.array([L])).select(0, 0)

    # ---- target item embedding ----

    def cir_forward_batch(self, padded: Tensor, lengths: np.ndarray, specs) -> Tensor:
        if np.any(lengths < 1):
            raise InputError("retrieval needs a non-empty partial outfit")
        if np.any(lengths > self.config.max_outfit_len):
            raise InputError(f"outfit exceeds max length {self.config.max_outfit_len}")
        for spec in specs:
            spec.validate()
        self.cir_calls += 1
        B = padded.shape[0]
        img = self._broadcast_token(self.empty_image_embedding, B).select(1, 0)
        txt = self.item_encoder.encode_text([s.text for s in specs])
        tok = Tensor.concat([img, txt], axis=1).reshape(B, 1, self.config.model_dim)
        pooled = self._run(tok, padded, lengths)
        return self.cir_head(pooled)

    def cir_forward(self, features: Tensor, spec: TargetSpec) -> Tensor:
        """features: (L, d) partial outfit -> (model_dim,) target embedding."""
        L = features.shape[0]
        padded = features.reshape(1, L, features.shape[1])
        return self.cir_forward_batch(padded, np.array([L]), [spec]).select(0, 0)

    # ---- identity ----

    def fingerprint(self) -> str:
        """sha256 over config and every parameter, in registration order."""
        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        for name, p in self.parameters():
            h.update(name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def trunk_fingerprint(self) -> str:
        """Hash of everything except the task heads; used to verify that
        fine-tuning actually started from the pretrained trunk."""
        h = hashlib.sha256()
        for name, p in self.parameters():
            if name.startswith(("cp_head", "cir_head")):
                continue
            h.update(name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def state_arrays(self):
        """Named parameter arrays in stable order (for checkpoints)."""
        return [(name, p.data) for name, p in self.parameters()]

    def load_state_arrays(self, named) -> None:
        params = dict(self.parameters())
        seen = set()
        for name, arr in named:
            if name not in params:
                raise ConfigError(f"unknown parameter {name!r} in state")
            if params[name].data.shape != arr.shape:
                raise ConfigError(f"shape mismatch for {name!r}")
            params[name].data = arr.astype(np.float64).copy()
            seen.add(name)
        missing = set(params) - seen
        if missing:
            raise ConfigError(f"state is missing parameters: {sorted(missing)}")
