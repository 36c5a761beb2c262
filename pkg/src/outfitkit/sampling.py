"""Training-instance construction: positive/partial splits, curriculum
negatives, and corrupted outfits for compatibility training.

The curriculum has two stages. Early training samples negatives from the
positive's broad category group; later training narrows the pool to the
positive's exact fine category, which makes negatives harder because they
look categorically identical and differ only in style.
"""

from __future__ import annotations

import enum
import logging

import numpy as np

from .data import Catalog, Item, Outfit
from .errors import DataError, InputError

log = logging.getLogger(__name__)


class CurriculumStage(enum.Enum):
    HIGH_LEVEL = "high_level"
    FINE_GRAINED = "fine_grained"


def stage_for_epoch(epoch: int, total_epochs: int, switch_fraction: float) -> CurriculumStage:
    """Stage schedule: HIGH_LEVEL until switch_fraction of epochs, then
    FINE_GRAINED. Transitions happen only in that direction."""
    if total_epochs <= 0:
        raise InputError("total_epochs must be positive")
    if epoch < switch_fraction * total_epochs:
        return CurriculumStage.HIGH_LEVEL
    return CurriculumStage.FINE_GRAINED


def make_cir_instance(outfit: Outfit, catalog: Catalog, rng) -> tuple | None:
    """Pick a uniformly random positive item; the rest become the partial
    outfit. Returns None (with a warning) for degenerate outfits."""
    if len(outfit.items) < 2:
        log.warning("skipping outfit %s: fewer than 2 items", outfit.outfit_id)
        return None
    pick = int(rng.integers(len(outfit.items)))
    positive = catalog.get(outfit.items[pick])
    partial = [catalog.get(i) for k, i in enumerate(outfit.items) if k != pick]
    return partial, positive


def sample_negatives(positive: Item, partial, catalog: Catalog,
                     stage: CurriculumStage, count: int, rng) -> list:
    """Draw `count` distinct negatives matching the stage's category filter.

    Negatives never collide with the positive or any partial item. If the
    fine-grained pool is too small the shortfall falls back to the
    high-level pool (logged); an exhausted high-level pool is an error.
    """
    if count < 1:
        raise InputError("negative count must be >= 1")
    excluded = {positive.item_id} | {it.item_id for it in partial}
    if stage is CurriculumStage.FINE_GRAINED:
        pool = [i for i in catalog.by_fine.get(positive.fine_category, [])
                if i not in excluded]
    else:
        pool = [i for i in catalog.by_high.get(positive.high_category, [])
                if i not in excluded]
    if len(pool) >= count:
        chosen = list(rng.choice(pool, size=count, replace=False))
        return catalog.get_many(chosen)

    shortfall = count - len(pool)
    log.info("negative pool for %s (%s) has %d items; drawing %d from the broad pool",
             positive.fine_category, stage.value, len(pool), shortfall)
    broad = [i for i in catalog.by_high.get(positive.high_category, [])
             if i not in excluded and i not in pool]
    if len(broad) < shortfall:
        raise DataError(
            f"cannot sample {count} negatives for {positive.item_id}: "
            f"only {len(pool) + len(broad)} eligible items")
    extra = list(rng.choice(broad, size=shortfall, replace=False))
    return catalog.get_many(pool + extra)


def make_negative_outfit(source: Outfit, catalog: Catalog, rng,
                         positive_sets=None, max_attempts: int = 20) -> Outfit:
    """Corrupt a real outfit by swapping every item for a random item of the
    same fine category. The result keeps the category multiset but (with
    overwhelming probability) breaks whatever made the source coherent.
    Never returns the source itself or any known positive outfit."""
    positive_sets = positive_sets or set()
    for attempt in range(max_attempts):
        replacement = []
        used = set()
        for item_id in source.items:
            fine = catalog.get(item_id).fine_category
            pool = [i for i in catalog.by_fine[fine]
                    if i != item_id and i not in used]
            if not pool:
                replacement.append(item_id)   # singleton category: keep
                used.add(item_id)
                continue
            pick = pool[int(rng.integers(len(pool)))]
            replacement.append(pick)
            used.add(pick)
        candidate = frozenset(replacement)
        if candidate != source.as_set() and candidate not in positive_sets:
            return Outfit(f"{source.outfit_id}-neg", replacement, label=0)
    raise DataError(
        f"failed to corrupt outfit {source.outfit_id} after {max_attempts} attempts")
