/** Thin typed client for the backend HTTP API. */

import type {
  CompatibilityResponse,
  CompleteResponse,
  HealthResponse,
  ItemsResponse,
  TargetSpec,
} from "./types.js";

/** Raised for any non-2xx response; carries the service's error envelope. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ListItemsOptions {
  category?: string;
  page?: number;
  pageSize?: number;
}

/**
 * Everything the workbench needs from a backend. The HTTP client and the
 * in-memory mock both implement it, so the UI never knows which it has.
 */
export interface ApiClient {
  healthz(): Promise<HealthResponse>;
  listItems(opts?: ListItemsOptions): Promise<ItemsResponse>;
  compatibility(itemIds: string[]): Promise<CompatibilityResponse>;
  complete(
    itemIds: string[],
    target: TargetSpec,
    k?: number,
  ): Promise<CompleteResponse>;
}

export class HttpApiClient implements ApiClient {
  /** baseUrl has no trailing slash; "" means same origin. */
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "network", `cannot reach service: ${String(err)}`);
    }
    const body: unknown = await res.json().catch(() => null);
    if (!res.ok) {
      // errors arrive as {"v": 1, "error": {"code", "message"}}
      const envelope = (body as { error?: { code?: string; message?: string } } | null)?.error;
      throw new ApiError(
        res.status,
        envelope?.code ?? "http_error",
        envelope?.message ?? `request failed with status ${res.status}`,
      );
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  healthz(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/healthz");
  }

  listItems(opts: ListItemsOptions = {}): Promise<ItemsResponse> {
    const q = new URLSearchParams();
    if (opts.category !== undefined) q.set("category", opts.category);
    if (opts.page !== undefined) q.set("page", String(opts.page));
    if (opts.pageSize !== undefined) q.set("page_size", String(opts.pageSize));
    const qs = q.size > 0 ? `?${q.toString()}` : "";
    return this.request<ItemsResponse>(`/items${qs}`);
  }

  compatibility(itemIds: string[]): Promise<CompatibilityResponse> {
    return this.post<CompatibilityResponse>("/compatibility", {
      item_ids: itemIds,
    });
  }

  complete(
    itemIds: string[],
    target: TargetSpec,
    k = 10,
  ): Promise<CompleteResponse> {
    return this.post<CompleteResponse>("/complete", {
      item_ids: itemIds,
      target,
      k,
    });
  }
}
