"""Catalog embedding index and exact nearest-neighbor retrieval.

Every item gets exactly one embedding, so index size is n*d floats no matter
how many categories exist. Queries are answered by a vectorized full linear
scan (exact by construction); ties in distance break by item_id so results
are totally ordered and reproducible. A per-index/per-model call counter
lets tests assert that completing an outfit costs one encoder call and one
KNN query regardless of outfit length.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, restore_model
from .data import Catalog
from .errors import CheckpointError, InputError
from .model import OutfitModel, TargetSpec
from .nn import no_grad

INDEX_MAGIC = b"OFKI"
INDEX_VERSION = 1


@dataclass
class KnnResult:
    matches: list                   # [(item_id, distance)]
    status: str = "ok"              # ok | empty_filter


@dataclass
class CompletionResult:
    candidates: list                # [(item_id, distance, fine_category)]
    status: str
    encoder_calls: int
    knn_calls: int


class EmbeddingIndex:
    def __init__(self, item_ids, vectors: np.ndarray, fine_cats, high_cats,
                 fingerprint: str):
        n = len(item_ids)
        if vectors.shape[0] != n or len(fine_cats) != n or len(high_cats) != n:
            raise InputError("index tables disagree on item count")
        self.item_ids = list(item_ids)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        self.fine_cats = list(fine_cats)
        self.high_cats = list(high_cats)
        self.fingerprint = fingerprint
        self.query_count = 0
        self._row: dict = {i: k for k, i in enumerate(self.item_ids)}
        self.by_fine: dict = {}
        self.by_high: dict = {}
        for k in range(n):
            self.by_fine.setdefault(fine_cats[k], []).append(k)
            self.by_high.setdefault(high_cats[k], []).append(k)

    def __len__(self):
        return len(self.item_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, item_id) -> bool:
        return item_id in self._row

    def vector_of(self, item_id: str) -> np.ndarray:
        try:
            return self.vectors[self._row[item_id]]
        except KeyError:
            raise InputError(f"item {item_id!r} not in index") from None

    def payload_bytes(self) -> int:
        return self.vectors.size * 8

    def candidate_rows(self, category_filter) -> np.ndarray:
        if category_filter is None:
            return np.arange(len(self.item_ids))
        rows = self.by_fine.get(category_filter)
        if rows is None:
            rows = self.by_high.get(category_filter, [])
        return np.asarray(rows, dtype=np.int64)


def build_index(catalog: Catalog, model_or_ckpt) -> EmbeddingIndex:
    """Embed every catalog item once with the trained item encoders."""
    model = model_or_ckpt
    if isinstance(model_or_ckpt, Checkpoint):
        model = restore_model(model_or_ckpt)
    ids = catalog.ids()
    items = catalog.get_many(ids)
    with no_grad():
        vectors = model.item_encoder.encode_items(items).data
    return EmbeddingIndex(
        item_ids=ids,
        vectors=vectors,
        fine_cats=[it.fine_category for it in items],
        high_cats=[it.high_category for it in items],
        fingerprint=model.fingerprint(),
    )


def knn_query(index: EmbeddingIndex, t: np.ndarray, k: int,
              category_filter=None) -> KnnResult:
    """Exact k nearest items by Euclidean distance, ascending; equal
    distances order by item_id."""
    if k < 1:
        raise InputError("k must be >= 1")
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (index.dim,):
        raise InputError(f"query dim {t.shape} != index dim {index.dim}")
    index.query_count += 1
    rows = index.candidate_rows(category_filter)
    if rows.size == 0:
        return KnnResult(matches=[], status="empty_filter")
    diffs = index.vectors[rows] - t
    dists = np.sqrt(np.einsum("nd,nd->n", diffs, diffs))
    ids = np.array([index.item_ids[r] for r in rows])
    order = np.lexsort((ids, dists))[:k]
    return KnnResult(matches=[(str(ids[i]), float(dists[i])) for i in order])


def complete_outfit(index: EmbeddingIndex, model: OutfitModel, partial_items,
                    spec: TargetSpec, k: int) -> CompletionResult:
    """Retrieve ranked completion candidates for a partial outfit.

    One target embedding, one KNN query — cost independent of outfit length.
    The partial outfit's own items are dropped from the result.
    """
    if not partial_items:
        raise InputError("partial outfit must be non-empty")
    if index.fingerprint != model.fingerprint():
        raise CheckpointError("index was built from a different model snapshot")
    enc0, knn0 = model.cir_calls, index.query_count
    with no_grad():
        feats = model.item_encoder.encode_items(partial_items)
        t = model.cir_forward(feats, spec).data
    filt = spec.text if spec.kind == "category" else None
    own = {it.item_id for it in partial_items}
    res = knn_query(index, t, k + len(own), category_filter=filt)
    kept = [(i, d, index.fine_cats[index._row[i]])
            for i, d in res.matches if i not in own][:k]
    return CompletionResult(
        candidates=kept,
        status="ok" if kept else "empty_pool",
        encoder_calls=model.cir_calls - enc0,
        knn_calls=index.query_count - knn0,
    )


def subspace_baseline_report(index: EmbeddingIndex, num_categories: int | None = None) -> dict:
    """Size comparison against a one-embedding-per-(item, category) scheme."""
    C = num_categories if num_categories is not None else len(index.by_fine)
    single = index.payload_bytes()
    return {
        "items": len(index),
        "dim": index.dim,
        "categories": C,
        "single_embedding_bytes": single,
        "subspace_bytes": single * C,
        "ratio": float(C),
    }


# ---- on-disk format ----


def _index_header(index: EmbeddingIndex) -> bytes:
    meta = {
        "fingerprint": index.fingerprint,
        "dim": index.dim,
        "count": len(index),
        "item_ids": index.item_ids,
        "fine_cats": index.fine_cats,
        "high_cats": index.high_cats,
    }
    body = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    return INDEX_MAGIC + struct.pack("<I", INDEX_VERSION) + struct.pack("<Q", len(body)) + body


def index_sizes(index: EmbeddingIndex) -> dict:
    header = len(_index_header(index))
    return {"header_bytes": header, "payload_bytes": index.payload_bytes(),
            "total_bytes": header + index.payload_bytes()}


def save_index(index: EmbeddingIndex, path) -> None:
    with open(path, "wb") as f:
        f.write(_index_header(index))
        f.write(np.ascontiguousarray(index.vectors, dtype="<f8").tobytes())


def load_index(path) -> EmbeddingIndex:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != INDEX_MAGIC:
        raise CheckpointError(f"{path} is not an index file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != INDEX_VERSION:
        raise CheckpointError(f"unsupported index version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    try:
        meta = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt index header in {path}: {e}") from None
    n, d = meta["count"], meta["dim"]
    expected = 16 + hlen + n * d * 8
    if len(raw) != expected:
        raise CheckpointError(f"index file size mismatch: {len(raw)} != {expected}")
    vectors = np.frombuffer(raw, dtype="<f8", offset=16 + hlen).reshape(n, d)
    return EmbeddingIndex(
        item_ids=meta["item_ids"],
        vectors=vectors.astype(np.float64),
        fine_cats=meta["fine_cats"],
        high_cats=meta["high_cats"],
        fingerprint=meta["fingerprint"],
    )
