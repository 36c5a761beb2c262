/** Shared test plumbing: deterministic rng, deferred responses, clocks. */

import type { ApiClient, ListItemsOptions } from "../src/api.js";
import type {
  CompatibilityResponse,
  CompleteResponse,
  HealthResponse,
  ItemsResponse,
  TargetSpec,
} from "../src/types.js";

/** mulberry32, same generator the mock uses for its latencies. */
export function rng32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function pick<T>(rand: () => number, pool: readonly T[]): T {
  const value = pool[Math.floor(rand() * pool.length)];
  if (value === undefined) throw new Error("pick from empty pool");
  return value;
}

/** Let queued timers and promise continuations run. */
export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

export class Deferred<T> {
  readonly promise: Promise<T>;
  resolve!: (value: T) => void;
  reject!: (reason: unknown) => void;

  constructor() {
    this.promise = new Promise((res, rej) => {
      this.resolve = res;
      this.reject = rej;
    });
  }
}

/**
 * An ApiClient whose responses the test releases by hand, so response
 * order is under full control rather than left to latency luck.
 */
export class ManualClient implements ApiClient {
  readonly completes: Array<{
    itemIds: string[];
    target: TargetSpec;
    deferred: Deferred<CompleteResponse>;
  }> = [];
  readonly scores: Array<{
    itemIds: string[];
    deferred: Deferred<CompatibilityResponse>;
  }> = [];

  healthz(): Promise<HealthResponse> {
    return Promise.resolve({ v: 1, status: "ready" });
  }

  listItems(_opts?: ListItemsOptions): Promise<ItemsResponse> {
    return Promise.resolve({ v: 1, total: 0, page: 0, page_size: 50, items: [] });
  }

  compatibility(itemIds: string[]): Promise<CompatibilityResponse> {
    const deferred = new Deferred<CompatibilityResponse>();
    this.scores.push({ itemIds: [...itemIds], deferred });
    return deferred.promise;
  }

  complete(
    itemIds: string[],
    target: TargetSpec,
    _k?: number,
  ): Promise<CompleteResponse> {
    const deferred = new Deferred<CompleteResponse>();
    this.completes.push({ itemIds: [...itemIds], target: { ...target }, deferred });
    return deferred.promise;
  }
}

export function okCompletion(ids: string[]): CompleteResponse {
  return {
    v: 1,
    status: "ok",
    candidates: ids.map((id, i) => ({
      item_id: id,
      distance: i + 0.5,
      category: "mock",
    })),
  };
}
