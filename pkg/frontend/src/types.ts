/** Wire and UI types for the outfit workbench. */

/** Item metadata exactly as GET /items reports it (no vectors). */
export interface ItemMeta {
  item_id: string;
  description: string;
  fine_category: string;
  high_category: string;
}

/** One retrieval hit from POST /complete, distance untouched. */
export interface Candidate {
  item_id: string;
  distance: number;
  category: string;
}

export type TargetKind = "category" | "free_text";

export interface TargetSpec {
  kind: TargetKind;
  text: string;
}

export interface HealthResponse {
  v: number;
  status: "ready" | "not_ready";
  fingerprint?: string;
  items?: number;
}

export interface ItemsResponse {
  v: number;
  total: number;
  page: number;
  page_size: number;
  items: ItemMeta[];
}

export interface CompatibilityResponse {
  v: number;
  score: number;
  latency_ms: number;
}

export interface CompleteResponse {
  v: number;
  status: "ok" | "empty_pool";
  candidates: Candidate[];
}

/** Status of the result list the workbench currently holds. */
export type ResultsStatus = "idle" | "ok" | "empty";

/**
 * Full UI state. Plain data only, so any state is serializable and any
 * session is reproducible by replaying its event log.
 *
 * A request is in flight exactly while the matching pending*Seq is set;
 * responses carry their sequence number back, and the reducer drops any
 * response whose number no longer matches (superseded or invalidated).
 */
export interface WorkbenchState {
  outfit: string[];
  draft: TargetSpec;
  results: Candidate[];
  resultsStatus: ResultsStatus;
  score: number | null;
  pendingScoreSeq: number | null;
  pendingQuerySeq: number | null;
  banner: string | null;
  notice: string | null;
}

export type WorkbenchEvent =
  | { type: "item_added"; itemId: string }
  | { type: "item_removed"; itemId: string }
  | { type: "draft_changed"; kind: TargetKind; text: string }
  | { type: "query_rejected"; message: string }
  | { type: "score_requested"; seq: number }
  | { type: "score_received"; seq: number; score: number }
  | { type: "score_failed"; seq: number; message: string }
  | { type: "completion_requested"; seq: number }
  | {
      type: "completion_received";
      seq: number;
      status: "ok" | "empty_pool";
      candidates: Candidate[];
    }
  | { type: "completion_failed"; seq: number; message: string }
  | { type: "banner_dismissed" };
