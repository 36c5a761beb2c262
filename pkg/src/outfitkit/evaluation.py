"""Task metrics: scoring AUC, fill-in-the-blank accuracy, retrieval recall@k.

Metric code is deliberately independent of the training stack: AUC is a
rank-based computation on raw arrays, FITB reduces to an argmax over four
candidate scores, and recall ranks the ground truth inside its category
pool. Every report carries per-query records sufficient to recompute the
headline numbers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Catalog
from .errors import MetricError
from .index import EmbeddingIndex
from .model import OutfitModel, TargetSpec, pack_features
from .nn import Tensor, no_grad

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    task: str                       # cp | fitb | cir
    metrics: dict
    records: list
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps({
            "task": self.task, "metrics": self.metrics, "records": self.records,
            "config": self.config, "seed": self.seed,
        }, sort_keys=True, separators=(",", ":"))


# ---- AUC ----


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative; ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != len(labels):
        raise MetricError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined with a single class")
    # average ranks: group of size c ending at cumulative count m gets m-(c-1)/2
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    avg_rank = np.cumsum(counts) - (counts - 1) / 2.0
    ranks = avg_rank[inverse]
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---- batched model scoring helpers ----


def cp_scores(model: OutfitModel, catalog: Catalog, outfits,
              batch_size: int = 100) -> np.ndarray:
    """Compatibility scores for a list of outfits (no gradients)."""
    out = np.empty(len(outfits))
    with no_grad():
        for lo in range(0, len(outfits), batch_size):
            chunk = outfits[lo:lo + batch_size]
            feats, idx_lists = _encode_union(
                model, catalog, [o.items for o in chunk])
            padded, lengths = pack_features(feats, idx_lists)
            out[lo:lo + len(chunk)] = model.cp_forward_batch(padded, lengths).data
    return out


def cir_embeddings(model: OutfitModel, catalog: Catalog, partials, spec_texts,
                   kind: str = "category", batch_size: int = 100) -> np.ndarray:
    """Target embeddings for (partial outfit, target text) pairs."""
    dim = model.config.model_dim
    out = np.empty((len(partials), dim))
    with no_grad():
        for lo in range(0, len(partials), batch_size):
            chunk = partials[lo:lo + batch_size]
            feats, idx_lists = _encode_union(model, catalog, chunk)
            padded, lengths = pack_features(feats, idx_lists)
            specs = [TargetSpec(kind, t) for t in spec_texts[lo:lo + len(chunk)]]
            out[lo:lo + len(chunk)] = model.cir_forward_batch(padded, lengths, specs).data
    return out


def _encode_union(model, catalog, id_lists):
    ids = sorted({i for ids in id_lists for i in ids})
    row = {i: k for k, i in enumerate(ids)}
    feats = model.item_encoder.encode_items(catalog.get_many(ids))
    return feats, [[row[i] for i in ids_] for ids_ in id_lists]


def cp_eval(model: OutfitModel, catalog: Catalog, outfits, seed=None) -> EvalReport:
    labeled = [o for o in outfits if o.label is not None]
    scores = cp_scores(model, catalog, labeled)
    labels = np.array([o.label for o in labeled])
    records = [{"outfit_id": o.outfit_id, "score": float(s), "label": int(o.label)}
               for o, s in zip(labeled, scores)]
    return EvalReport(task="cp", metrics={"auc": auc(scores, labels)},
                      records=records, seed=seed)


# ---- fill in the blank ----


def _fitb_from_matrix(questions, score_matrix: np.ndarray) -> EvalReport:
    """Shared FITB reduction: argmax per row, higher better. Exact ties pick
    the lowest index and are logged."""
    records = []
    correct = 0
    ties = 0
    for qi, q in enumerate(questions):
        scores = score_matrix[qi]
        best = int(np.argmax(scores))      # first max wins ties
        tie = bool((scores == scores[best]).sum() > 1)
        ties += tie
        hit = best == q.answer_index
        correct += hit
        records.append({"question": qi, "chosen": best, "tie": tie,
                        "correct": bool(hit), "scores": [float(s) for s in scores]})
    if ties:
        log.info("FITB: %d of %d questions had tied candidate scores", ties, len(questions))
    acc = correct / len(questions) if questions else 0.0
    return EvalReport(task="fitb", metrics={"accuracy": acc, "ties": ties},
                      records=records)


def fitb_eval_scored(score_fn, questions) -> EvalReport:
    """FITB for an arbitrary scorer: score_fn(question) -> 4 scores."""
    matrix = np.empty((len(questions), 4))
    for qi, q in enumerate(questions):
        scores = np.asarray(score_fn(q), dtype=np.float64)
        if scores.shape != (4,):
            raise MetricError("FITB questions need exactly 4 candidate scores")
        matrix[qi] = scores
    return _fitb_from_matrix(questions, matrix)


def fitb_eval(model: OutfitModel, catalog: Catalog, questions,
              mode: str = "cir", batch_size: int = 100) -> EvalReport:
    """mode "cp": argmax compatibility of each completed outfit.
    mode "cir": argmin distance from the target embedding to each candidate."""
    if mode == "cp":
        outfits = [q.partial + [c] for q in questions for c in q.candidates]
        scores = np.empty(len(outfits))
        with no_grad():
            for lo in range(0, len(outfits), batch_size):
                chunk = outfits[lo:lo + batch_size]
                feats, idx_lists = _encode_union(model, catalog, chunk)
                padded, lengths = pack_features(feats, idx_lists)
                scores[lo:lo + len(chunk)] = model.cp_forward_batch(padded, lengths).data
        report = _fitb_from_matrix(questions, scores.reshape(-1, 4))
    elif mode == "cir":
        targets = cir_embeddings(
            model, catalog, [q.partial for q in questions],
            [q.blank_category for q in questions], batch_size=batch_size)
        cand_ids = sorted({c for q in questions for c in q.candidates})
        with no_grad():
            cand_vecs = model.item_encoder.encode_items(
                catalog.get_many(cand_ids)).data
        row = {i: k for k, i in enumerate(cand_ids)}
        dists = np.empty((len(questions), 4))
        for qi, q in enumerate(questions):
            vecs = cand_vecs[[row[c] for c in q.candidates]]
            dists[qi] = np.linalg.norm(vecs - targets[qi], axis=1)
        report = _fitb_from_matrix(questions, -dists)
    else:
        raise MetricError(f"unknown FITB mode {mode!r}")
    report.metrics["mode"] = mode
    return report


def fitb_accuracy(model, catalog, questions, mode="cir") -> float:
    return fitb_eval(model, catalog, questions, mode).metrics["accuracy"]


# ---- retrieval recall ----


def recall_eval(model: OutfitModel, catalog: Catalog, index: EmbeddingIndex,
                queries, ks=(1, 5, 10, 30), seed=None) -> EvalReport:
    """Rank each query's held-out item among all same-category candidates.

    Equal distances rank the ground truth pessimistically (last in the tie
    group). Queries whose ground truth is missing from the index are skipped
    but stay in the denominator, so recall can never be inflated by skips.
    """
    targets = cir_embeddings(model, catalog,
                             [q.partial for q in queries],
                             [q.target_category for q in queries])
    records = []
    ranks = []
    skipped = 0
    for qi, q in enumerate(queries):
        if q.ground_truth not in index:
            skipped += 1
            records.append({"query": qi, "skipped": True, "rank": None})
            continue
        rows = index.candidate_rows(q.target_category)
        pool = index.vectors[rows]
        dists = np.linalg.norm(pool - targets[qi], axis=1)
        gt_ids = [index.item_ids[r] for r in rows]
        gt_pos = gt_ids.index(q.ground_truth)
        d_gt = dists[gt_pos]
        others = np.delete(dists, gt_pos)
        rank = 1 + int((others < d_gt).sum()) + int((others == d_gt).sum())
        ranks.append(rank)
        records.append({"query": qi, "skipped": False, "rank": rank,
                        "pool_size": int(rows.size)})
    n = len(queries)
    ranks_arr = np.asarray(ranks)
    metrics = {f"recall@{k}": float((ranks_arr <= k).sum() / n) if n else 0.0
               for k in ks}
    metrics["skipped"] = skipped
    metrics["queries"] = n
    return EvalReport(task="cir", metrics=metrics, records=records, seed=seed)
