"""Datasets: catalog/outfit types, a planted-rule synthetic generator, and
loaders for the standard outfit-list directory layout.

Synthetic items carry a hidden style; an outfit is compatible exactly when
every member shares one style. The style is recoverable from the description
(last token), which gives tests a ground-truth oracle for scoring, FITB and
retrieval without any trained model.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InputError

log = logging.getLogger(__name__)

_HIGH_NAMES = ["tops", "bottoms", "shoes", "bags", "hats", "coats", "dresses", "scarves"]
_STYLE_RE = re.compile(r"^style(\d+)$")


@dataclass(eq=False)
class Item:
    item_id: str
    image_payload: object          # numeric vector (or image array for the CNN path)
    description: str
    fine_category: str
    high_category: str


@dataclass
class Outfit:
    """An unordered set of catalog item ids. Stored sorted so two outfits
    with the same members compare equal regardless of source order."""
    outfit_id: str
    items: list
    label: int | None = None

    def __post_init__(self):
        if len(self.items) < 2:
            raise InputError(f"outfit {self.outfit_id} has fewer than 2 items")
        if len(set(self.items)) != len(self.items):
            raise InputError(f"outfit {self.outfit_id} has duplicate items")
        self.items = sorted(self.items)

    def as_set(self) -> frozenset:
        return frozenset(self.items)


class Catalog:
    def __init__(self, items):
        self.items: dict = {}
        self.by_fine: dict = {}
        self.by_high: dict = {}
        self.fine_to_high: dict = {}
        for it in items:
            if it.item_id in self.items:
                raise DataError(f"duplicate item_id {it.item_id!r}")
            known_high = self.fine_to_high.get(it.fine_category)
            if known_high is not None and known_high != it.high_category:
                raise DataError(
                    f"fine category {it.fine_category!r} maps to both "
                    f"{known_high!r} and {it.high_category!r}")
            self.items[it.item_id] = it
            self.fine_to_high[it.fine_category] = it.high_category
            self.by_fine.setdefault(it.fine_category, []).append(it.item_id)
            self.by_high.setdefault(it.high_category, []).append(it.item_id)
        for pool in self.by_fine.values():
            pool.sort()
        for pool in self.by_high.values():
            pool.sort()

    def __len__(self):
        return len(self.items)

    def __contains__(self, item_id):
        return item_id in self.items

    def get(self, item_id: str) -> Item:
        try:
            return self.items[item_id]
        except KeyError:
            raise DataError(f"unknown item_id {item_id!r}") from None

    def get_many(self, item_ids) -> list:
        return [self.get(i) for i in item_ids]

    def ids(self) -> list:
        return sorted(self.items)

    def fine_categories(self) -> list:
        return sorted(self.by_fine)


@dataclass
class DatasetSplit:
    train: list
    valid: list
    test: list
    catalog: Catalog
    disjoint: bool = False

    def validate(self) -> None:
        for split in (self.train, self.valid, self.test):
            for o in split:
                for item_id in o.items:
                    if item_id not in self.catalog:
                        raise DataError(
                            f"outfit {o.outfit_id} references unknown item {item_id!r}")
        ids = [o.outfit_id for s in (self.train, self.valid, self.test) for o in s]
        if len(ids) != len(set(ids)):
            raise DataError("outfit_id reused across splits")
        if self.disjoint:
            pools = [set(i for o in s for i in o.items)
                     for s in (self.train, self.valid, self.test)]
            for a in range(3):
                for b in range(a + 1, 3):
                    overlap = pools[a] & pools[b]
                    if overlap:
                        raise DataError(
                            f"disjoint split shares items, e.g. {sorted(overlap)[:3]}")

    def positives(self, split: str) -> list:
        outfits = getattr(self, split)
        return [o for o in outfits if o.label in (None, 1)]


@dataclass
class SyntheticSpec:
    num_styles: int = 4
    num_high_categories: int = 3
    fine_per_high: int = 4
    items_per_fine: int = 200
    outfit_len_min: int = 3
    outfit_len_max: int = 5
    payload_dim: int = 32
    noise_sigma: float = 0.1
    outfits_train: int = 600
    outfits_valid: int = 200
    outfits_test: int = 200

    def validate(self) -> None:
        counts = (self.num_styles, self.num_high_categories, self.fine_per_high,
                  self.items_per_fine, self.outfit_len_min, self.outfit_len_max,
                  self.payload_dim, self.outfits_train, self.outfits_valid,
                  self.outfits_test)
        if any(c < 1 for c in counts):
            raise InputError("all synthetic spec counts must be >= 1")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be >= 0")
        if self.outfit_len_min < 2 or self.outfit_len_max < self.outfit_len_min:
            raise InputError("outfit length range must satisfy 2 <= min <= max")
        if self.outfit_len_max > self.num_high_categories * self.fine_per_high:
            raise InputError("outfit length exceeds number of fine categories")
        if self.payload_dim < self.num_styles + self.num_high_categories * self.fine_per_high:
            raise InputError("payload_dim too small for style + category one-hots")

    @property
    def fine_names(self) -> list:
        names = []
        for h in range(self.num_high_categories):
            high = _high_name(h)
            for v in range(self.fine_per_high):
                names.append(f"{high}-v{v + 1}")
        return names


def _high_name(i: int) -> str:
    if i < len(_HIGH_NAMES):
        return _HIGH_NAMES[i]
    return f"{_HIGH_NAMES[i % len(_HIGH_NAMES)]}{i // len(_HIGH_NAMES) + 1}"


def planted_style(item: Item) -> int:
    """Recover the hidden style of a synthetic item from its description."""
    for token in item.description.split():
        m = _STYLE_RE.match(token)
        if m:
            return int(m.group(1))
    raise DataError(f"item {item.item_id} carries no style token")


def generate_synthetic(spec: SyntheticSpec, seed: int) -> DatasetSplit:
    """Build a fully labeled desk-scale dataset with a known compatibility rule."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n_fine = spec.num_high_categories * spec.fine_per_high
    fine_names = spec.fine_names
    fine_index = {name: i for i, name in enumerate(fine_names)}

    items = []
    by_cell: dict = {}      # (fine, style) -> item ids
    for fi, fine in enumerate(fine_names):
        high = fine.split("-")[0]
        for n in range(spec.items_per_fine):
            style = n % spec.num_styles + 1     # balanced cells by construction
            payload = np.zeros(spec.payload_dim)
            payload[style - 1] = 1.0
            payload[spec.num_styles + fi] = 1.0
            if spec.noise_sigma > 0:
                payload = payload + rng.normal(0.0, spec.noise_sigma, spec.payload_dim)
            item_id = f"{fine}-s{style}-{n:04d}"
            items.append(Item(
                item_id=item_id,
                image_payload=payload,
                description=f"{fine} style{style}",
                fine_category=fine,
                high_category=high,
            ))
            by_cell.setdefault((fine, style), []).append(item_id)
    catalog = Catalog(items)

    def make_positive(oid: str) -> Outfit:
        style = int(rng.integers(1, spec.num_styles + 1))
        length = int(rng.integers(spec.outfit_len_min, spec.outfit_len_max + 1))
        fines = rng.choice(n_fine, size=length, replace=False)
        members = [by_cell[(fine_names[f], style)][
            rng.integers(len(by_cell[(fine_names[f], style)]))] for f in fines]
        return Outfit(outfit_id=oid, items=members, label=1)

    train = [make_positive(f"tr{i:05d}") for i in range(spec.outfits_train)]
    valid = [make_positive(f"va{i:05d}") for i in range(spec.outfits_valid)]
    test = [make_positive(f"te{i:05d}") for i in range(spec.outfits_test)]

    # Held-out splits get frozen labeled negatives so evaluation is
    # reproducible; training corrupts positives on the fly instead. A random
    # corruption occasionally lands on a single-style set, which would be a
    # mislabeled negative, so retry until the rule is genuinely broken.
    from .sampling import make_negative_outfit
    positive_sets = {o.as_set() for o in train + valid + test}
    for split in (valid, test):
        negatives = []
        for o in list(split):
            for _ in range(50):
                neg = make_negative_outfit(o, catalog, rng, positive_sets)
                if len({planted_style(catalog.get(i)) for i in neg.items}) > 1:
                    break
            else:
                raise DataError(f"could not build an incompatible negative for {o.outfit_id}")
            negatives.append(Outfit(f"{o.outfit_id}n", neg.items, label=0))
        split.extend(negatives)

    ds = DatasetSplit(train=train, valid=valid, test=test, catalog=catalog)
    ds.validate()
    return ds


# ---- on-disk layout ----
#
# directory/
#   train.json / valid.json / test.json   outfit lists
#   polyvore_item_metadata.json           item_id -> metadata
#   categories.csv                        fine_id,fine_name,high_name
#   fill_in_blank_{split}.json            optional FITB question files


def save_dataset(ds: DatasetSplit, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        payload = []
        for o in sorted(getattr(ds, name), key=lambda x: x.outfit_id):
            entry = {
                "set_id": o.outfit_id,
                "items": [{"item_id": i, "index": k + 1}
                          for k, i in enumerate(o.items)],
            }
            if o.label is not None:
                entry["label"] = o.label
            payload.append(entry)
        _dump_json(payload, directory / f"{name}.json")

    meta = {}
    fine_ids = {f: i + 1 for i, f in enumerate(ds.catalog.fine_categories())}
    for item_id in ds.catalog.ids():
        it = ds.catalog.get(item_id)
        entry = {
            "description": it.description,
            "category_id": str(fine_ids[it.fine_category]),
            "semantic_category": it.high_category,
        }
        if it.image_payload is not None:
            entry["payload"] = np.asarray(it.image_payload).tolist()
        meta[item_id] = entry
    _dump_json(meta, directory / "polyvore_item_metadata.json")

    lines = [f"{fine_ids[f]},{f},{ds.catalog.fine_to_high[f]}"
             for f in ds.catalog.fine_categories()]
    (directory / "categories.csv").write_text("\n".join(lines) + "\n")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def _read_json(path: Path):
    if not path.exists():
        raise DataError(f"missing dataset file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"malformed JSON in {path}: {e}") from None


def load_dataset(directory, disjoint: bool = False,
                 max_outfit_len: int | None = None, seed: int = 0) -> DatasetSplit:
    """Load a dataset directory. Outfit order inside files is discarded.

    Outfits longer than max_outfit_len are truncated to a seeded random
    subset and the count is logged; None disables truncation.
    """
    directory = Path(directory)
    cat_by_id: dict = {}        # fine_id -> (fine_name, high_name)
    cat_file = directory / "categories.csv"
    if cat_file.exists():
        for line in cat_file.read_text().splitlines():
            if not line.strip():
                continue
            fid, fine, high = line.split(",", 2)
            cat_by_id[fid.strip()] = (fine.strip(), high.strip())

    raw_meta = _read_json(directory / "polyvore_item_metadata.json")
    items = []
    for item_id, m in raw_meta.items():
        cid = str(m.get("category_id", ""))
        if cid in cat_by_id:
            fine, high = cat_by_id[cid]
        else:
            fine = cid or m.get("semantic_category", "unknown")
            high = m.get("semantic_category", fine)
        payload = m.get("payload")
        items.append(Item(
            item_id=item_id,
            image_payload=np.asarray(payload, dtype=np.float64) if payload is not None else None,
            description=m.get("description", ""),
            fine_category=fine,
            high_category=high,
        ))
    catalog = Catalog(items)

    rng = np.random.default_rng(seed)
    truncated = 0

    def load_split(name: str) -> list:
        nonlocal truncated
        outfits = []
        for entry in _read_json(directory / f"{name}.json"):
            ids = [ref["item_id"] for ref in entry["items"]]
            missing = [i for i in ids if i not in catalog]
            if missing:
                raise DataError(
                    f"outfit {entry['set_id']} references missing items: {missing}")
            if max_outfit_len is not None and len(ids) > max_outfit_len:
                ids = list(rng.permutation(ids)[:max_outfit_len])
                truncated += 1
            outfits.append(Outfit(entry["set_id"], ids, entry.get("label")))
        return outfits

    ds = DatasetSplit(
        train=load_split("train"),
        valid=load_split("valid"),
        test=load_split("test"),
        catalog=catalog,
        disjoint=disjoint,
    )
    if truncated:
        log.info("truncated %d outfits to max length %s", truncated, max_outfit_len)
    ds.validate()
    return ds


# ---- evaluation question builders ----


@dataclass
class FitbQuestion:
    partial: list               # item ids with the blank removed
    candidates: list            # 4 item ids
    answer_index: int
    blank_category: str


@dataclass
class CirQuery:
    partial: list
    target_category: str
    ground_truth: str


def build_fitb_questions(outfits, catalog: Catalog, rng,
                         wrong_style_distractors: bool = True) -> list:
    """One 4-candidate question per positive outfit.

    With wrong_style_distractors, distractors share the answer's fine
    category but carry a different planted style, so a style-aware scorer
    can always win while category cues alone say nothing.
    """
    questions = []
    for o in outfits:
        if o.label == 0:
            continue
        ids = list(o.items)
        blank = int(rng.integers(len(ids)))
        answer = ids[blank]
        partial = ids[:blank] + ids[blank + 1:]
        answer_item = catalog.get(answer)
        pool = [i for i in catalog.by_fine[answer_item.fine_category]
                if i != answer and i not in partial]
        if wrong_style_distractors:
            style = planted_style(answer_item)
            pool = [i for i in pool if planted_style(catalog.get(i)) != style]
        if len(pool) < 3:
            continue
        distractors = list(rng.choice(pool, size=3, replace=False))
        slot = int(rng.integers(4))
        candidates = distractors[:slot] + [answer] + distractors[slot:]
        questions.append(FitbQuestion(
            partial=partial,
            candidates=candidates,
            answer_index=slot,
            blank_category=answer_item.fine_category,
        ))
    return questions


def build_cir_queries(outfits, catalog: Catalog, rng) -> list:
    """One held-one-out retrieval query per positive outfit."""
    queries = []
    for o in outfits:
        if o.label == 0:
            continue
        ids = list(o.items)
        blank = int(rng.integers(len(ids)))
        gt = ids[blank]
        queries.append(CirQuery(
            partial=ids[:blank] + ids[blank + 1:],
            target_category=catalog.get(gt).fine_category,
            ground_truth=gt,
        ))
    return queries


def save_fitb_questions(questions, directory, split: str) -> None:
    payload = [{
        "question": q.partial,
        "answers": q.candidates,
        "answer_index": q.answer_index,
        "blank_category": q.blank_category,
    } for q in questions]
    _dump_json(payload, Path(directory) / f"fill_in_blank_{split}.json")


def load_fitb_questions(directory, split: str) -> list:
    raw = _read_json(Path(directory) / f"fill_in_blank_{split}.json")
    out = []
    for q in raw:
        out.append(FitbQuestion(
            partial=list(q["question"]),
            candidates=list(q["answers"]),
            answer_index=int(q["answer_index"]),
            blank_category=q.get("blank_category", ""),
        ))
        if len(out[-1].candidates) != 4:
            raise DataError("FITB questions must have exactly 4 candidates")
    return out
