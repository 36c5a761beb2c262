"""Training objectives: focal loss for compatibility, set-wise ranking loss
for retrieval.

The ranking loss compares one target embedding against one positive and S
negatives per instance, so its cost is O(S) distance evaluations regardless
of outfit length. A module-level counter tracks distance computations so
tests can assert that bound.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .nn import Tensor

SCORE_CLAMP = 1e-7

_distance_calls = 0


def reset_distance_counter() -> None:
    global _distance_calls
    _distance_calls = 0


def distance_call_count() -> int:
    return _distance_calls


def _count(n: int) -> None:
    global _distance_calls
    _distance_calls += n


def pair_distance(a: Tensor, b: Tensor, squared: bool = False) -> Tensor:
    """Euclidean distance along the last axis. a and b broadcast together;
    every (vector, vector) pair costs one counted distance call."""
    if a.shape[-1] != b.shape[-1]:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    sq = diff.power(2.0).sum(axis=-1)
    _count(int(np.prod(sq.shape)) if sq.shape else 1)
    return sq if squared else sq.sqrt()


def focal_loss(scores: Tensor, labels, gamma: float = 2.0, alpha: float = 0.5) -> Tensor:
    """Mean focal loss over a batch of probabilities and 0/1 labels.

    With gamma=0 and alpha=0.5 this is exactly half of binary cross-entropy.
    Scores are clamped away from 0/1 so the log stays finite.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != scores.shape:
        raise InputError(f"labels shape {labels.shape} != scores shape {scores.shape}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise InputError("labels must be 0 or 1")
    lab = Tensor(labels)
    p_t = scores * lab + (1.0 - scores) * (1.0 - lab)
    p_t = p_t.clip(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    alpha_t = alpha * labels + (1.0 - alpha) * (1.0 - labels)
    weight = (1.0 - p_t).power(gamma) * Tensor(alpha_t)
    return -(weight * p_t.log()).mean()


def setwise_ranking_loss(t: Tensor, f_pos: Tensor, negatives: Tensor,
                         margin: float = 2.0, squared: bool = False,
                         use_all: bool = True, use_hard: bool = True) -> Tensor:
    """Ranking loss for one instance: target t (d,), positive (d,), negatives (S, d).

    averaged hinge over all negatives, plus a hinge against the single
    closest negative. Gradients reach t, the positive, and every negative.
    """
    if negatives.ndim != 2 or negatives.shape[0] < 1:
        raise InputError("need at least one negative, shaped (S, d)")
    return setwise_ranking_loss_batch(
        t.reshape(1, -1), f_pos.reshape(1, -1),
        negatives.reshape(1, *negatives.shape),
        margin=margin, squared=squared, use_all=use_all, use_hard=use_hard)


def setwise_ranking_loss_batch(t: Tensor, f_pos: Tensor, negatives: Tensor,
                               margin: float = 2.0, squared: bool = False,
                               use_all: bool = True, use_hard: bool = True) -> Tensor:
    """Batched ranking loss: t (B, d), positives (B, d), negatives (B, S, d).

    Returns the mean over the batch of L_all + L_hard (each term can be
    switched off for ablations, but not both).
    """
    if margin <= 0:
        raise InputError("margin must be positive")
    if not (use_all or use_hard):
        raise InputError("at least one loss term must be enabled")
    if t.ndim != 2 or f_pos.ndim != 2 or negatives.ndim != 3:
        raise InputError("expected t (B,d), positives (B,d), negatives (B,S,d)")
    B, d = t.shape
    if f_pos.shape != (B, d) or negatives.shape[0] != B or negatives.shape[2] != d:
        raise InputError(
            f"dimension mismatch: t {t.shape}, pos {f_pos.shape}, neg {negatives.shape}")

    d_pos = pair_distance(t, f_pos, squared=squared)                       # (B,)
    d_neg = pair_distance(t.reshape(B, 1, d), negatives, squared=squared)  # (B, S)

    total = None
    if use_all:
        hinge = (d_pos.reshape(B, 1) - d_neg + margin).relu()
        total = hinge.mean(axis=1)
    if use_hard:
        hard = (d_pos - d_neg.min(axis=1) + margin).relu()
        total = hard if total is None else total + hard
    return total.mean()
