/**
 * In-memory stand-in for the backend, for demos and for running the UI
 * test suite without the Python service.
 *
 * Responses are pure functions of the request (scores and distances come
 * from hashes, never from clocks or call order), so tests can predict
 * them; only the latency is random, drawn from a seeded generator so a
 * given seed always produces the same interleaving pressure.
 */

import { ApiError } from "./api.js";
import type { ApiClient, ListItemsOptions } from "./api.js";
import type {
  Candidate,
  CompatibilityResponse,
  CompleteResponse,
  HealthResponse,
  ItemMeta,
  ItemsResponse,
  TargetSpec,
} from "./types.js";

// mulberry32: tiny deterministic PRNG, keeps the browser graph free of
// runtime dependencies
function seededRandom(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** A small canned catalog: four fine categories, three "styles" each. */
export function demoCatalog(): ItemMeta[] {
  const fines: Array<[string, string]> = [
    ["jackets", "outerwear"],
    ["shirts", "tops"],
    ["pants", "bottoms"],
    ["shoes", "footwear"],
  ];
  const styles = ["navy", "ivory", "charcoal"];
  const items: ItemMeta[] = [];
  for (const [fine, high] of fines) {
    styles.forEach((style, i) => {
      items.push({
        item_id: `${fine}-${i + 1}`,
        description: `${style} ${fine.replace(/s$/, "")}`,
        fine_category: fine,
        high_category: high,
      });
    });
  }
  return items;
}

export interface MockOptions {
  seed?: number;
  /** Upper bound for the uniform per-request delay; 0 disables delays. */
  maxLatencyMs?: number;
}

export class MockApiClient implements ApiClient {
  readonly calls = { healthz: 0, items: 0, compatibility: 0, complete: 0 };

  /** When set, the next matching request fails once with this message. */
  failNextCompatibility: string | null = null;
  failNextComplete: string | null = null;

  private readonly rand: () => number;
  private readonly maxLatencyMs: number;
  private readonly byId: Map<string, ItemMeta>;

  constructor(
    private readonly catalog: ItemMeta[] = demoCatalog(),
    opts: MockOptions = {},
  ) {
    this.rand = seededRandom(opts.seed ?? 1);
    this.maxLatencyMs = opts.maxLatencyMs ?? 0;
    this.byId = new Map(catalog.map((it) => [it.item_id, it]));
  }

  private async delay(): Promise<number> {
    if (this.maxLatencyMs <= 0) return 0;
    const ms = this.rand() * this.maxLatencyMs;
    await sleep(ms);
    return ms;
  }

  private checkIds(itemIds: string[], minimum: number): void {
    if (itemIds.length < minimum) {
      throw new ApiError(
        400,
        "invalid_request",
        `need at least ${minimum} items, got ${itemIds.length}`,
      );
    }
    if (new Set(itemIds).size !== itemIds.length) {
      throw new ApiError(400, "invalid_request", "item_ids contains duplicates");
    }
    const unknown = itemIds.filter((id) => !this.byId.has(id)).sort();
    if (unknown.length > 0) {
      throw new ApiError(
        404,
        "unknown_item",
        `unknown item id(s): ${unknown.map((u) => `'${u}'`).join(", ")}`,
      );
    }
  }

  async healthz(): Promise<HealthResponse> {
    this.calls.healthz += 1;
    await this.delay();
    return { v: 1, status: "ready", fingerprint: "mock", items: this.catalog.length };
  }

  async listItems(opts: ListItemsOptions = {}): Promise<ItemsResponse> {
    this.calls.items += 1;
    await this.delay();
    const page = opts.page ?? 0;
    const pageSize = opts.pageSize ?? 50;
    let pool = this.catalog;
    if (opts.category !== undefined) {
      // fine name wins over high name, matching the service
      const fine = pool.filter((it) => it.fine_category === opts.category);
      pool = fine.length > 0
        ? fine
        : pool.filter((it) => it.high_category === opts.category);
    }
    return {
      v: 1,
      total: pool.length,
      page,
      page_size: pageSize,
      items: pool.slice(page * pageSize, (page + 1) * pageSize),
    };
  }

  async compatibility(itemIds: string[]): Promise<CompatibilityResponse> {
    this.calls.compatibility += 1;
    const ms = await this.delay();
    if (this.failNextCompatibility !== null) {
      const message = this.failNextCompatibility;
      this.failNextCompatibility = null;
      throw new ApiError(500, "internal", message);
    }
    this.checkIds(itemIds, 2);
    // hash of the sorted ids: order-free, and identical whenever the same
    // set comes back (the backend is stateless)
    const h = fnv1a([...itemIds].sort().join("|"));
    return { v: 1, score: (h % 9973) / 9973, latency_ms: ms };
  }

  async complete(
    itemIds: string[],
    target: TargetSpec,
    k = 10,
  ): Promise<CompleteResponse> {
    this.calls.complete += 1;
    await this.delay();
    if (this.failNextComplete !== null) {
      const message = this.failNextComplete;
      this.failNextComplete = null;
      throw new ApiError(500, "internal", message);
    }
    this.checkIds(itemIds, 1);
    if (target.text.trim() === "") {
      throw new ApiError(400, "invalid_request", "target text must be non-empty");
    }
    const own = new Set(itemIds);
    let pool: ItemMeta[];
    if (target.kind === "category") {
      const fine = this.catalog.filter((it) => it.fine_category === target.text);
      pool = fine.length > 0
        ? fine
        : this.catalog.filter((it) => it.high_category === target.text);
    } else {
      pool = this.catalog.filter((it) => it.description.includes(target.text));
    }
    if (pool.length === 0) {
      return { v: 1, status: "empty_pool", candidates: [] };
    }
    const candidates: Candidate[] = pool
      .filter((it) => !own.has(it.item_id))
      .map((it) => ({
        item_id: it.item_id,
        distance: fnv1a(`${it.item_id}::${target.kind}::${target.text}`) / 2 ** 28,
        category: it.fine_category,
      }))
      .sort((a, b) => a.distance - b.distance || (a.item_id < b.item_id ? -1 : 1))
      .slice(0, k);
    return { v: 1, status: "ok", candidates };
  }
}
