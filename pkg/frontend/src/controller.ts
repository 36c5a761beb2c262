/**
 * Bridges the pure reducer to the async backend.
 *
 * The controller is the only thing that talks to the network and the only
 * thing that mints sequence numbers. Every state change, including request
 * starts and responses, is dispatched as an event and appended to the log,
 * so the reducer alone decides what counts and what is stale.
 */

import { ApiError } from "./api.js";
import type { ApiClient } from "./api.js";
import { initialState, reducer } from "./state.js";
import type { TargetKind, WorkbenchEvent, WorkbenchState } from "./types.js";

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}

export type Listener = (state: WorkbenchState) => void;

export class WorkbenchController {
  readonly log: WorkbenchEvent[] = [];

  private current: WorkbenchState = initialState();
  private nextSeq = 1;
  private listeners: Listener[] = [];

  constructor(
    private readonly client: ApiClient,
    private readonly k: number = 10,
  ) {}

  get state(): WorkbenchState {
    return this.current;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private dispatch(event: WorkbenchEvent): void {
    this.current = reducer(this.current, event);
    this.log.push(event);
    for (const fn of this.listeners) fn(this.current);
  }

  /**
   * Add an item. A duplicate is a local no-op; otherwise the score is
   * refreshed once the outfit has at least two items. The returned promise
   * settles when any triggered refresh has settled.
   */
  addItem(itemId: string): Promise<void> {
    const isNew = !this.current.outfit.includes(itemId);
    this.dispatch({ type: "item_added", itemId });
    if (!isNew) return Promise.resolve();
    return this.refreshScore();
  }

  removeItem(itemId: string): Promise<void> {
    const present = this.current.outfit.includes(itemId);
    this.dispatch({ type: "item_removed", itemId });
    if (!present) return Promise.resolve();
    return this.refreshScore();
  }

  setDraft(kind: TargetKind, text: string): void {
    this.dispatch({ type: "draft_changed", kind, text });
  }

  /** Clicking a result feeds it straight back into the outfit. */
  pickResult(itemId: string): Promise<void> {
    return this.addItem(itemId);
  }

  dismissBanner(): void {
    this.dispatch({ type: "banner_dismissed" });
  }

  /** Run the drafted completion query against the current outfit. */
  async runQuery(): Promise<void> {
    const { outfit, draft } = this.current;
    if (outfit.length === 0) {
      this.dispatch({
        type: "query_rejected",
        message: "add at least one item before querying",
      });
      return;
    }
    if (draft.text.trim() === "") {
      this.dispatch({
        type: "query_rejected",
        message: "describe the item you are looking for",
      });
      return;
    }
    const seq = this.nextSeq++;
    const itemIds = [...outfit];
    const target = { ...draft };
    this.dispatch({ type: "completion_requested", seq });
    try {
      const res = await this.client.complete(itemIds, target, this.k);
      this.dispatch({
        type: "completion_received",
        seq,
        status: res.status,
        candidates: res.candidates,
      });
    } catch (err) {
      this.dispatch({ type: "completion_failed", seq, message: describe(err) });
    }
  }

  private async refreshScore(): Promise<void> {
    // a single item has no pairwise score to show
    if (this.current.outfit.length < 2) return;
    const seq = this.nextSeq++;
    const itemIds = [...this.current.outfit];
    this.dispatch({ type: "score_requested", seq });
    try {
      const res = await this.client.compatibility(itemIds);
      this.dispatch({ type: "score_received", seq, score: res.score });
    } catch (err) {
      this.dispatch({ type: "score_failed", seq, message: describe(err) });
    }
  }
}
