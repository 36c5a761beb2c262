import numpy as np
import pytest
from fastapi.testclient import TestClient

from outfitkit.data import SyntheticSpec, generate_synthetic
from outfitkit.encoders import ItemEncoderConfig
from outfitkit.index import build_index
from outfitkit.model import ModelConfig, OutfitModel
from outfitkit.service import SCHEMA_VERSION, ServiceState, create_app


def small_spec(**kw):
    base = dict(num_styles=3, num_high_categories=2, fine_per_high=2,
                items_per_fine=20, outfit_len_min=2, outfit_len_max=3,
                payload_dim=12, noise_sigma=0.1,
                outfits_train=20, outfits_valid=8, outfits_test=8)
    base.update(kw)
    return SyntheticSpec(**base)


def tiny_model_config():
    return ModelConfig(
        model_dim=16, layers=1, heads=2, ff_hidden=32, max_outfit_len=8,
        encoder=ItemEncoderConfig(d_img=8, d_text=8, payload_dim=12))


@pytest.fixture(scope="module")
def dataset():
    return generate_synthetic(small_spec(), seed=9)


@pytest.fixture(scope="module")
def snapshot(dataset):
    model = OutfitModel(tiny_model_config(), np.random.default_rng(3))
    index = build_index(dataset.catalog, model)
    return ServiceState(model, index, dataset.catalog)


@pytest.fixture(scope="module")
def client(snapshot):
    return TestClient(create_app(snapshot))


@pytest.fixture(scope="module")
def some_ids(dataset):
    for o in dataset.positives("train"):
        if len(o.items) >= 2:
            return list(o.items)
    raise AssertionError("no multi-item outfit in fixture data")


class TestHealth:
    def test_ready_after_verify(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        body = r.json()
        assert body["v"] == SCHEMA_VERSION
        assert body["status"] == "ready"
        assert body["items"] > 0

    def test_not_ready_until_fingerprints_match(self, snapshot):
        other = OutfitModel(tiny_model_config(), np.random.default_rng(99))
        state = ServiceState(other, snapshot.index, snapshot.catalog)
        c = TestClient(create_app(state))
        r = c.get("/healthz")
        assert r.status_code == 503
        assert r.json()["status"] == "not_ready"
        # data endpoints refuse too
        r = c.post("/compatibility", json={"item_ids": ["a", "b"]})
        assert r.status_code == 503
        assert r.json()["error"]["code"] == "not_ready"


class TestItems:
    def test_paging_covers_catalog(self, client, snapshot):
        seen = []
        page = 0
        while True:
            r = client.get("/items", params={"page": page, "page_size": 30})
            assert r.status_code == 200
            body = r.json()
            assert body["total"] == len(snapshot.catalog.ids())
            if not body["items"]:
                break
            seen.extend(row["item_id"] for row in body["items"])
            page += 1
        assert seen == snapshot.catalog.ids()

    def test_rows_carry_metadata_not_vectors(self, client):
        r = client.get("/items", params={"page_size": 1})
        row = r.json()["items"][0]
        assert set(row) == {"item_id", "description", "fine_category", "high_category"}

    def test_category_filter(self, client, snapshot):
        fine = snapshot.catalog.fine_categories()[0]
        r = client.get("/items", params={"category": fine, "page_size": 500})
        body = r.json()
        assert body["total"] == len(snapshot.catalog.by_fine[fine])
        assert all(row["fine_category"] == fine for row in body["items"])

    def test_high_category_filter(self, client, snapshot):
        high = sorted(snapshot.catalog.by_high)[0]
        r = client.get("/items", params={"category": high, "page_size": 500})
        assert r.json()["total"] == len(snapshot.catalog.by_high[high])

    def test_unknown_category_empty(self, client):
        r = client.get("/items", params={"category": "no-such"})
        assert r.status_code == 200
        assert r.json() == {"v": SCHEMA_VERSION, "total": 0, "page": 0,
                            "page_size": 50, "items": []}

    def test_bad_paging_rejected(self, client):
        assert client.get("/items", params={"page": -1}).status_code == 400
        assert client.get("/items", params={"page_size": 0}).status_code == 400
        assert client.get("/items", params={"page_size": 501}).status_code == 400
        assert client.get("/items", params={"page": "x"}).status_code == 400


class TestCompatibility:
    def test_score_in_open_interval(self, client, some_ids):
        r = client.post("/compatibility", json={"item_ids": some_ids})
        assert r.status_code == 200
        body = r.json()
        assert 0.0 < body["score"] < 1.0
        assert body["latency_ms"] >= 0.0
        assert body["v"] == SCHEMA_VERSION

    def test_order_invariant_through_the_wire(self, client, some_ids):
        a = client.post("/compatibility", json={"item_ids": some_ids}).json()
        b = client.post("/compatibility",
                        json={"item_ids": list(reversed(some_ids))}).json()
        assert a["score"] == b["score"]

    def test_unknown_id_named_in_404(self, client, some_ids):
        r = client.post("/compatibility", json={"item_ids": some_ids[:1] + ["zzz"]})
        assert r.status_code == 404
        err = r.json()["error"]
        assert err["code"] == "unknown_item"
        assert "zzz" in err["message"]

    def test_too_few_items(self, client, some_ids):
        r = client.post("/compatibility", json={"item_ids": some_ids[:1]})
        assert r.status_code == 400
        assert "2" in r.json()["error"]["message"]

    def test_duplicates_rejected(self, client, some_ids):
        r = client.post("/compatibility",
                        json={"item_ids": [some_ids[0], some_ids[0]]})
        assert r.status_code == 400

    def test_malformed_bodies(self, client):
        assert client.post("/compatibility", content=b"not json").status_code == 400
        assert client.post("/compatibility", json=[1, 2]).status_code == 400
        assert client.post("/compatibility", json={}).status_code == 400
        assert client.post("/compatibility",
                           json={"item_ids": [1, 2]}).status_code == 400

    def test_error_shape(self, client):
        body = client.post("/compatibility", json={}).json()
        assert set(body) == {"v", "error"}
        assert set(body["error"]) == {"code", "message"}


class TestComplete:
    def _target(self, snapshot):
        return {"kind": "category", "text": snapshot.catalog.fine_categories()[0]}

    def test_candidates_sorted_and_capped(self, client, snapshot, some_ids):
        r = client.post("/complete", json={
            "item_ids": some_ids, "target": self._target(snapshot), "k": 5})
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert 0 < len(body["candidates"]) <= 5
        dists = [c["distance"] for c in body["candidates"]]
        assert dists == sorted(dists)
        target_cat = self._target(snapshot)["text"]
        for c in body["candidates"]:
            assert set(c) == {"item_id", "distance", "category"}
            assert c["category"] == target_cat
            assert c["item_id"] not in some_ids

    def test_repeat_request_identical_bytes(self, client, snapshot, some_ids):
        payload = {"item_ids": some_ids, "target": self._target(snapshot), "k": 7}
        a = client.post("/complete", json=payload)
        b = client.post("/complete", json=payload)
        assert a.content == b.content

    def test_empty_pool_is_200_with_status(self, client, some_ids):
        r = client.post("/complete", json={
            "item_ids": some_ids,
            "target": {"kind": "category", "text": "no-such-category"},
            "k": 3})
        assert r.status_code == 200
        body = r.json()
        assert body["candidates"] == []
        assert body["status"] == "empty_pool"

    def test_k_defaults_and_validation(self, client, snapshot, some_ids):
        base = {"item_ids": some_ids, "target": self._target(snapshot)}
        r = client.post("/complete", json=base)
        assert r.status_code == 200
        assert len(r.json()["candidates"]) <= 10
        for bad in (0, -1, "5", 2.5, True):
            r = client.post("/complete", json=dict(base, k=bad))
            assert r.status_code == 400, bad

    def test_bad_target_rejected(self, client, some_ids):
        for target in (None, "shoes", {"kind": "color", "text": "red"},
                       {"kind": "category", "text": "  "},
                       {"kind": "category"}, {"kind": 3, "text": "shoes"}):
            r = client.post("/complete",
                            json={"item_ids": some_ids, "target": target, "k": 3})
            assert r.status_code == 400, target

    def test_unknown_partial_item(self, client, snapshot):
        r = client.post("/complete", json={
            "item_ids": ["zzz"], "target": self._target(snapshot), "k": 3})
        assert r.status_code == 404
        assert "zzz" in r.json()["error"]["message"]

    def test_free_text_target(self, client, snapshot, some_ids):
        item = snapshot.catalog.get(snapshot.catalog.ids()[0])
        r = client.post("/complete", json={
            "item_ids": some_ids,
            "target": {"kind": "free_text", "text": item.description},
            "k": 4})
        assert r.status_code == 200
        assert r.json()["status"] == "ok"
        # no category filter: candidates may span categories
        assert len(r.json()["candidates"]) == 4


class TestDeterminismAcrossApps:
    def test_same_snapshot_same_bytes(self, snapshot, some_ids):
        payload = {"item_ids": some_ids,
                   "target": {"kind": "category",
                              "text": snapshot.catalog.fine_categories()[0]},
                   "k": 6}
        c1 = TestClient(create_app(snapshot))
        c2 = TestClient(create_app(snapshot))
        assert (c1.post("/complete", json=payload).content
                == c2.post("/complete", json=payload).content)

    def test_compatibility_repeat_identical_score(self, client, some_ids):
        scores = {client.post("/compatibility",
                              json={"item_ids": some_ids}).json()["score"]
                  for _ in range(3)}
        assert len(scores) == 1
