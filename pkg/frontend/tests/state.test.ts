/** Reducer unit tests and the event-log replay invariant. */

import { describe, expect, it } from "vitest";

import { WorkbenchController } from "../src/controller.js";
import { demoCatalog, MockApiClient } from "../src/mockServer.js";
import { initialState, reducer, replay } from "../src/state.js";
import type { WorkbenchEvent, WorkbenchState } from "../src/types.js";
import { flush, pick, rng32 } from "./helpers.js";

function seed(events: WorkbenchEvent[], from?: WorkbenchState): WorkbenchState {
  return replay(events, from);
}

describe("reducer", () => {
  it("adding an item clears results, score, and in-flight requests", () => {
    const before: WorkbenchState = {
      ...initialState(),
      outfit: ["a"],
      results: [{ item_id: "x", distance: 1.5, category: "c" }],
      resultsStatus: "ok",
      score: 0.7,
      pendingScoreSeq: 4,
      pendingQuerySeq: 5,
    };
    const after = reducer(before, { type: "item_added", itemId: "b" });
    expect(after.outfit).toEqual(["a", "b"]);
    expect(after.results).toEqual([]);
    expect(after.resultsStatus).toBe("idle");
    expect(after.score).toBeNull();
    expect(after.pendingScoreSeq).toBeNull();
    expect(after.pendingQuerySeq).toBeNull();
  });

  it("duplicate add changes nothing but the notice", () => {
    const before = seed([
      { type: "item_added", itemId: "a" },
      { type: "item_added", itemId: "b" },
    ]);
    const after = reducer(before, { type: "item_added", itemId: "a" });
    expect(after.notice).toContain('"a" is already in the outfit');
    expect({ ...after, notice: null }).toEqual({ ...before, notice: null });
  });

  it("removing an unknown item is a no-op with a notice", () => {
    const before = seed([{ type: "item_added", itemId: "a" }]);
    const after = reducer(before, { type: "item_removed", itemId: "zzz" });
    expect(after.outfit).toEqual(["a"]);
    expect(after.notice).toContain("zzz");
  });

  it("score responses only land while their sequence number is current", () => {
    let s = seed([
      { type: "item_added", itemId: "a" },
      { type: "item_added", itemId: "b" },
      { type: "score_requested", seq: 1 },
    ]);
    s = reducer(s, { type: "score_received", seq: 99, score: 0.9 });
    expect(s.score).toBeNull(); // stale seq ignored
    s = reducer(s, { type: "score_received", seq: 1, score: 0.6 });
    expect(s.score).toBe(0.6);
    expect(s.pendingScoreSeq).toBeNull();
    // a second arrival of the same response is stale by then
    s = reducer(s, { type: "score_received", seq: 1, score: 0.1 });
    expect(s.score).toBe(0.6);
  });

  it("a newer completion request supersedes the pending one", () => {
    const base = seed([
      { type: "item_added", itemId: "a" },
      { type: "completion_requested", seq: 1 },
      { type: "completion_requested", seq: 2 },
    ]);
    const hitA = [{ item_id: "old", distance: 1.0, category: "c" }];
    const hitB = [{ item_id: "new", distance: 2.0, category: "c" }];

    // slow first response arrives after the second was issued: dropped
    let s = reducer(base, {
      type: "completion_received", seq: 1, status: "ok", candidates: hitA,
    });
    expect(s.results).toEqual([]);
    s = reducer(s, {
      type: "completion_received", seq: 2, status: "ok", candidates: hitB,
    });
    expect(s.results).toEqual(hitB);

    // and in arrival order B then A, A is equally dead
    let t = reducer(base, {
      type: "completion_received", seq: 2, status: "ok", candidates: hitB,
    });
    t = reducer(t, {
      type: "completion_received", seq: 1, status: "ok", candidates: hitA,
    });
    expect(t.results).toEqual(hitB);
  });

  it("an empty pool is a state, not an error", () => {
    const s = seed([
      { type: "item_added", itemId: "a" },
      { type: "completion_requested", seq: 1 },
      { type: "completion_received", seq: 1, status: "empty_pool", candidates: [] },
    ]);
    expect(s.resultsStatus).toBe("empty");
    expect(s.banner).toBeNull();
  });

  it("a failed query banners the error and preserves the old results", () => {
    const hits = [{ item_id: "x", distance: 1.25, category: "c" }];
    const before = seed([
      { type: "item_added", itemId: "a" },
      { type: "completion_requested", seq: 1 },
      { type: "completion_received", seq: 1, status: "ok", candidates: hits },
      { type: "completion_requested", seq: 2 },
    ]);
    const after = reducer(before, {
      type: "completion_failed", seq: 2, message: "internal: boom",
    });
    expect(after.banner).toBe("internal: boom");
    expect(after.results).toEqual(hits);
    expect(after.resultsStatus).toBe("ok");
    expect(after.pendingQuerySeq).toBeNull();
    const dismissed = reducer(after, { type: "banner_dismissed" });
    expect(dismissed.banner).toBeNull();
  });

  it("issuing a new request keeps the previous list until the response lands", () => {
    const hits = [{ item_id: "x", distance: 3.0, category: "c" }];
    const s = seed([
      { type: "item_added", itemId: "a" },
      { type: "completion_requested", seq: 1 },
      { type: "completion_received", seq: 1, status: "ok", candidates: hits },
      { type: "draft_changed", kind: "free_text", text: "something else" },
      { type: "completion_requested", seq: 2 },
    ]);
    expect(s.results).toEqual(hits); // old list still shown while loading
    expect(s.pendingQuerySeq).toBe(2);
  });
});

describe("replay", () => {
  it("replaying an empty log gives the initial state", () => {
    expect(replay([])).toEqual(initialState());
  });

  it("replaying a handcrafted log reproduces a manual fold", () => {
    const events: WorkbenchEvent[] = [
      { type: "item_added", itemId: "a" },
      { type: "item_added", itemId: "b" },
      { type: "score_requested", seq: 1 },
      { type: "draft_changed", kind: "category", text: "shoes" },
      { type: "completion_requested", seq: 2 },
      { type: "score_received", seq: 1, score: 0.25 },
      { type: "completion_received", seq: 2, status: "ok",
        candidates: [{ item_id: "shoes-1", distance: 0.5, category: "shoes" }] },
      { type: "item_removed", itemId: "a" },
      { type: "score_received", seq: 3, score: 0.99 }, // never requested: stale
    ];
    let manual = initialState();
    for (const e of events) manual = reducer(manual, e);
    expect(replay(events)).toEqual(manual);
    expect(manual.score).toBeNull(); // the stale seq-3 score stayed dead
  });

  it("replaying a live controller session reproduces its final state", async () => {
    const ids = demoCatalog().map((it) => it.item_id);
    const texts = ["shoes", "pants", "navy", "does-not-exist", ""];

    for (let loop = 0; loop < 15; loop++) {
      const rand = rng32(loop + 1);
      const mock = new MockApiClient(demoCatalog(), {
        seed: 1000 + loop,
        maxLatencyMs: 8,
      });
      const controller = new WorkbenchController(mock, 5);
      const pending: Array<Promise<void>> = [];

      for (let step = 0; step < 30; step++) {
        const r = rand();
        if (r < 0.35) {
          pending.push(controller.addItem(pick(rand, ids)));
        } else if (r < 0.5) {
          pending.push(controller.removeItem(pick(rand, ids)));
        } else if (r < 0.62) {
          controller.setDraft(rand() < 0.5 ? "category" : "free_text",
                              pick(rand, texts));
        } else if (r < 0.92) {
          pending.push(controller.runQuery());
        } else {
          controller.dismissBanner();
        }
        // sometimes let in-flight responses land mid-session
        if (rand() < 0.3) await flush();
      }
      await Promise.all(pending);

      expect(replay(controller.log)).toEqual(controller.state);
      expect(controller.state.pendingQuerySeq).toBeNull();
      expect(controller.state.pendingScoreSeq).toBeNull();
    }
    console.log(
      "[criterion 11] PASS reducer replay reproduces final state " +
      "(15 randomized sessions, 30 steps each)",
    );
  });
});
