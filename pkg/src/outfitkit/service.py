"""HTTP facade over a frozen model + index snapshot.

The app serves read-only scoring and retrieval. State never changes after
startup, so every response is a pure function of the request body and the
snapshot; repeated identical requests produce identical bytes.
"""

from __future__ import annotations

import logging
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .data import Catalog
from .errors import InputError
from .index import EmbeddingIndex, complete_outfit
from .model import OutfitModel, TargetSpec
from .nn import no_grad

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_PAGE_SIZE = 500


class ServiceState:
    """Immutable serving snapshot: model, its index, and catalog metadata."""

    def __init__(self, model: OutfitModel, index: EmbeddingIndex, catalog: Catalog):
        self.model = model
        self.index = index
        self.catalog = catalog
        self.ready = False

    def verify(self) -> bool:
        """Mark ready only once the index provably matches the model."""
        self.ready = self.model.fingerprint() == self.index.fingerprint
        if not self.ready:
            log.error("fingerprint mismatch: model %s vs index %s",
                      self.model.fingerprint()[:12], self.index.fingerprint[:12])
        return self.ready


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"v": SCHEMA_VERSION,
                                 "error": {"code": code, "message": message}})


def _ok(payload: dict) -> JSONResponse:
    body = {"v": SCHEMA_VERSION}
    body.update(payload)
    return JSONResponse(status_code=200, content=body)


async def _read_body(request: Request):
    try:
        body = await request.json()
    except Exception:
        return None
    return body if isinstance(body, dict) else None


def _check_item_ids(state: ServiceState, ids, minimum: int):
    """Validate an item_ids field; returns an error response or None."""
    if (not isinstance(ids, list) or not ids
            or not all(isinstance(i, str) for i in ids)):
        return _error(400, "invalid_request",
                      "item_ids must be a non-empty list of strings")
    if len(set(ids)) != len(ids):
        return _error(400, "invalid_request", "item_ids contains duplicates")
    if len(ids) < minimum:
        return _error(400, "invalid_request",
                      f"need at least {minimum} items, got {len(ids)}")
    unknown = sorted(i for i in ids if i not in state.catalog)
    if unknown:
        listing = ", ".join(repr(u) for u in unknown)
        return _error(404, "unknown_item", f"unknown item id(s): {listing}")
    return None


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="outfitkit", docs_url=None, redoc_url=None,
                  openapi_url=None)
    state.verify()

    @app.get("/healthz")
    async def healthz():
        if not state.ready:
            return JSONResponse(status_code=503,
                                content={"v": SCHEMA_VERSION, "status": "not_ready"})
        return _ok({"status": "ready",
                    "fingerprint": state.index.fingerprint,
                    "items": len(state.index)})

    def _gate():
        if not state.ready:
            return _error(503, "not_ready", "snapshot fingerprints not verified")
        return None

    @app.get("/items")
    async def items(request: Request):
        bad = _gate()
        if bad is not None:
            return bad
        q = request.query_params
        category = q.get("category")
        try:
            page = int(q.get("page", "0"))
            page_size = int(q.get("page_size", "50"))
        except ValueError:
            return _error(400, "invalid_request", "page and page_size must be integers")
        if page < 0 or page_size < 1 or page_size > MAX_PAGE_SIZE:
            return _error(400, "invalid_request",
                          f"page must be >= 0 and 1 <= page_size <= {MAX_PAGE_SIZE}")
        if category is None:
            ids = state.catalog.ids()
        else:
            ids = (state.catalog.by_fine.get(category)
                   or state.catalog.by_high.get(category, []))
        chunk = ids[page * page_size:(page + 1) * page_size]
        rows = [{"item_id": it.item_id,
                 "description": it.description,
                 "fine_category": it.fine_category,
                 "high_category": it.high_category}
                for it in state.catalog.get_many(chunk)]
        return _ok({"total": len(ids), "page": page,
                    "page_size": page_size, "items": rows})

    @app.post("/compatibility")
    async def compatibility(request: Request):
        bad = _gate()
        if bad is not None:
            return bad
        body = await _read_body(request)
        if body is None:
            return _error(400, "invalid_request", "body must be a JSON object")
        bad = _check_item_ids(state, body.get("item_ids"), minimum=2)
        if bad is not None:
            return bad
        # sort before encoding: the outfit is a set, so wire order must not
        # change the score, down to the last bit
        items = state.catalog.get_many(sorted(body["item_ids"]))
        start = time.perf_counter()
        try:
            with no_grad():
                feats = state.model.item_encoder.encode_items(items)
                score = float(state.model.cp_forward(feats).data)
        except InputError as e:
            return _error(400, "invalid_request", str(e))
        latency_ms = (time.perf_counter() - start) * 1000.0
        return _ok({"score": score, "latency_ms": latency_ms})

    @app.post("/complete")
    async def complete(request: Request):
        bad = _gate()
        if bad is not None:
            return bad
        body = await _read_body(request)
        if body is None:
            return _error(400, "invalid_request", "body must be a JSON object")
        bad = _check_item_ids(state, body.get("item_ids"), minimum=1)
        if bad is not None:
            return bad
        k = body.get("k", 10)
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            return _error(400, "invalid_request", "k must be an integer >= 1")
        target = body.get("target")
        if (not isinstance(target, dict)
                or not isinstance(target.get("kind"), str)
                or not isinstance(target.get("text"), str)):
            return _error(400, "invalid_request",
                          "target must be an object with string kind and text")
        spec = TargetSpec(kind=target["kind"], text=target["text"])
        try:
            spec.validate()
        except InputError as e:
            return _error(400, "invalid_request", str(e))
        partial = state.catalog.get_many(sorted(body["item_ids"]))
        try:
            result = complete_outfit(state.index, state.model, partial, spec, k)
        except InputError as e:
            return _error(400, "invalid_request", str(e))
        rows = [{"item_id": i, "distance": d, "category": c}
                for i, d, c in result.candidates]
        return _ok({"status": result.status, "candidates": rows})

    return app
