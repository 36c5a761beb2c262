import numpy as np
import pytest

from outfitkit.data import Catalog, Item, Outfit, generate_synthetic, planted_style
from outfitkit.errors import DataError
from outfitkit.sampling import (
    CurriculumStage,
    make_cir_instance,
    make_negative_outfit,
    sample_negatives,
    stage_for_epoch,
)
from test_data import small_spec


def toy_catalog(n_per_fine=15):
    """Two high groups, two fine categories each."""
    items = []
    for high, fines in (("shoes", ["boots", "sneakers"]), ("tops", ["shirts", "hoodies"])):
        for fine in fines:
            for n in range(n_per_fine):
                items.append(Item(f"{fine}{n}", None, fine, fine, high))
    return Catalog(items)


class TestCirInstance:
    def test_two_item_outfit(self):
        cat = toy_catalog()
        out = make_cir_instance(Outfit("o", ["boots0", "shirts0"]), cat,
                                np.random.default_rng(0))
        partial, positive = out
        assert len(partial) == 1
        assert positive.item_id not in [p.item_id for p in partial]

    def test_degenerate_outfit_skipped_with_warning(self, caplog):
        cat = toy_catalog()
        o = Outfit("o", ["boots0", "shirts0"])
        o.items = ["boots0"]  # mutate past the constructor check
        with caplog.at_level("WARNING", logger="outfitkit.sampling"):
            assert make_cir_instance(o, cat, np.random.default_rng(0)) is None
        assert "skipping" in caplog.text

    def test_positive_choice_uniform(self):
        cat = Catalog([Item(f"x{i}", None, "", f"f{i}", "h") for i in range(4)])
        outfit = Outfit("o", [f"x{i}" for i in range(4)])
        rng = np.random.default_rng(1)
        counts = np.zeros(4)
        n = 10000
        for _ in range(n):
            _, pos = make_cir_instance(outfit, cat, rng)
            counts[int(pos.item_id[1])] += 1
        freqs = counts / n
        assert np.all(np.abs(freqs - 0.25) < 0.02)
        chi2 = ((counts - n / 4) ** 2 / (n / 4)).sum()
        assert chi2 < 16.27  # 0.999 quantile, df=3


class TestNegativeSampling:
    def test_fine_grained_filter_exact(self):
        cat = toy_catalog()
        pos = cat.get("boots0")
        partial = [cat.get("shirts0")]
        negs = sample_negatives(pos, partial, cat, CurriculumStage.FINE_GRAINED,
                                10, np.random.default_rng(2))
        assert len(negs) == 10
        assert len({n.item_id for n in negs}) == 10
        for n in negs:
            assert n.fine_category == "boots"
            assert n.item_id != "boots0"

    def test_high_level_filter_exact(self):
        cat = toy_catalog()
        pos = cat.get("boots0")
        negs = sample_negatives(pos, [], cat, CurriculumStage.HIGH_LEVEL,
                                10, np.random.default_rng(3))
        for n in negs:
            assert n.high_category == "shoes"

    def test_exact_pool_enumeration(self):
        # exactly S+1 eligible fine-grained items -> S distinct from that pool
        cat = toy_catalog(n_per_fine=11)
        pos = cat.get("boots0")
        eligible = {f"boots{i}" for i in range(1, 11)}
        negs = sample_negatives(pos, [], cat, CurriculumStage.FINE_GRAINED,
                                10, np.random.default_rng(4))
        got = {n.item_id for n in negs}
        assert len(got) == 10
        assert got <= eligible

    def test_shortfall_falls_back_to_high_pool(self, caplog):
        cat = toy_catalog(n_per_fine=4)
        pos = cat.get("boots0")
        with caplog.at_level("INFO", logger="outfitkit.sampling"):
            negs = sample_negatives(pos, [], cat, CurriculumStage.FINE_GRAINED,
                                    6, np.random.default_rng(5))
        assert len(negs) == 6
        assert len({n.item_id for n in negs}) == 6
        assert "broad pool" in caplog.text
        fine_matches = sum(n.fine_category == "boots" for n in negs)
        assert fine_matches == 3  # whole eligible fine pool included first
        assert all(n.high_category == "shoes" for n in negs)

    def test_exhausted_pool_raises(self):
        cat = toy_catalog(n_per_fine=2)
        with pytest.raises(DataError):
            sample_negatives(cat.get("boots0"), [], cat,
                             CurriculumStage.HIGH_LEVEL, 10, np.random.default_rng(6))

    def test_partial_items_excluded(self):
        cat = toy_catalog(n_per_fine=12)
        pos = cat.get("boots0")
        partial = [cat.get(f"boots{i}") for i in range(1, 6)]
        for _ in range(20):
            negs = sample_negatives(pos, partial, cat, CurriculumStage.FINE_GRAINED,
                                    6, np.random.default_rng(7))
            banned = {p.item_id for p in partial} | {pos.item_id}
            assert not banned & {n.item_id for n in negs}

    def test_deterministic_stream(self):
        cat = toy_catalog()
        pos = cat.get("sneakers3")
        a = [n.item_id for n in sample_negatives(
            pos, [], cat, CurriculumStage.HIGH_LEVEL, 8, np.random.default_rng(42))]
        b = [n.item_id for n in sample_negatives(
            pos, [], cat, CurriculumStage.HIGH_LEVEL, 8, np.random.default_rng(42))]
        assert a == b


class TestCurriculumSchedule:
    def test_half_switch(self):
        stages = [stage_for_epoch(e, 10, 0.5) for e in range(10)]
        assert stages[:5] == [CurriculumStage.HIGH_LEVEL] * 5
        assert stages[5:] == [CurriculumStage.FINE_GRAINED] * 5

    def test_extremes(self):
        assert stage_for_epoch(0, 10, 0.0) is CurriculumStage.FINE_GRAINED
        assert all(stage_for_epoch(e, 10, 1.0) is CurriculumStage.HIGH_LEVEL
                   for e in range(10))

    def test_monotone_one_way(self):
        seen_fine = False
        for e in range(20):
            s = stage_for_epoch(e, 20, 0.35)
            if s is CurriculumStage.FINE_GRAINED:
                seen_fine = True
            else:
                assert not seen_fine


class TestNegativeOutfits:
    def setup_method(self):
        self.ds = generate_synthetic(small_spec(items_per_fine=40), seed=11)
        self.rng = np.random.default_rng(8)

    def test_category_multiset_preserved(self):
        for o in self.ds.train[:20]:
            neg = make_negative_outfit(o, self.ds.catalog, self.rng)
            assert neg.label == 0
            assert len(neg.items) == len(o.items)
            orig = sorted(self.ds.catalog.get(i).fine_category for i in o.items)
            got = sorted(self.ds.catalog.get(i).fine_category for i in neg.items)
            assert orig == got
            assert neg.as_set() != o.as_set()

    def test_never_collides_with_positives(self):
        positives = {o.as_set() for o in self.ds.train}
        for o in self.ds.train[:30]:
            neg = make_negative_outfit(o, self.ds.catalog, self.rng, positives)
            assert neg.as_set() not in positives

    def test_corruption_breaks_style_often_enough(self):
        # per slot, the replacement keeps the source style with prob ~1/styles,
        # so the source style survives in every slot with prob <= (1/styles)^L
        spec = small_spec(num_styles=4, outfit_len_min=3, outfit_len_max=3,
                          items_per_fine=80, payload_dim=20,
                          outfits_train=150)
        ds = generate_synthetic(spec, seed=12)
        rng = np.random.default_rng(9)
        broken = 0
        trials = 0
        for _ in range(14):
            for o in ds.train:
                src_style = planted_style(ds.catalog.get(o.items[0]))
                neg = make_negative_outfit(o, ds.catalog, rng)
                styles = {planted_style(ds.catalog.get(i)) for i in neg.items}
                broken += styles != {src_style}
                trials += 1
        bound = 1.0 - 0.25 ** 3
        assert broken / trials >= bound - 0.01
