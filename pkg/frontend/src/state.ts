/**
 * Pure state machine for the workbench.
 *
 * Every transition goes through reducer(state, event); nothing here talks
 * to the network or reads clocks, so replaying a recorded event log from
 * the initial state reproduces the final state bit for bit.
 */

import type { WorkbenchEvent, WorkbenchState } from "./types.js";

export function initialState(): WorkbenchState {
  return {
    outfit: [],
    draft: { kind: "category", text: "" },
    results: [],
    resultsStatus: "idle",
    score: null,
    pendingScoreSeq: null,
    pendingQuerySeq: null,
    banner: null,
    notice: null,
  };
}

// Changing the outfit invalidates everything derived from it: the score,
// the result list, and any responses still in flight for either.
function clearDerived(state: WorkbenchState): WorkbenchState {
  return {
    ...state,
    results: [],
    resultsStatus: "idle",
    score: null,
    pendingScoreSeq: null,
    pendingQuerySeq: null,
    banner: null,
    notice: null,
  };
}

export function reducer(
  state: WorkbenchState,
  event: WorkbenchEvent,
): WorkbenchState {
  switch (event.type) {
    case "item_added": {
      if (state.outfit.includes(event.itemId)) {
        // duplicate add is a no-op with a notice, never an error
        return { ...state, notice: `"${event.itemId}" is already in the outfit` };
      }
      return {
        ...clearDerived(state),
        outfit: [...state.outfit, event.itemId],
      };
    }

    case "item_removed": {
      if (!state.outfit.includes(event.itemId)) {
        return { ...state, notice: `"${event.itemId}" is not in the outfit` };
      }
      return {
        ...clearDerived(state),
        outfit: state.outfit.filter((id) => id !== event.itemId),
      };
    }

    case "draft_changed":
      return {
        ...state,
        draft: { kind: event.kind, text: event.text },
        notice: null,
      };

    case "query_rejected":
      return { ...state, notice: event.message };

    case "score_requested":
      return { ...state, pendingScoreSeq: event.seq, banner: null };

    case "score_received": {
      if (event.seq !== state.pendingScoreSeq) return state; // stale
      return { ...state, score: event.score, pendingScoreSeq: null };
    }

    case "score_failed": {
      if (event.seq !== state.pendingScoreSeq) return state;
      return { ...state, pendingScoreSeq: null, banner: event.message };
    }

    case "completion_requested":
      // the previous list stays on screen until the response lands, so a
      // refined query replaces results atomically rather than flickering
      return {
        ...state,
        pendingQuerySeq: event.seq,
        banner: null,
        notice: null,
      };

    case "completion_received": {
      if (event.seq !== state.pendingQuerySeq) return state; // stale
      const empty =
        event.status === "empty_pool" || event.candidates.length === 0;
      return {
        ...state,
        results: event.candidates,
        resultsStatus: empty ? "empty" : "ok",
        pendingQuerySeq: null,
      };
    }

    case "completion_failed": {
      if (event.seq !== state.pendingQuerySeq) return state;
      // state preserved: the old list stays, the failure is a banner
      return { ...state, pendingQuerySeq: null, banner: event.message };
    }

    case "banner_dismissed":
      return { ...state, banner: null };
  }
}

/** Fold an event log; the core replay invariant used by the tests. */
export function replay(
  events: Iterable<WorkbenchEvent>,
  from: WorkbenchState = initialState(),
): WorkbenchState {
  let state = from;
  for (const event of events) state = reducer(state, event);
  return state;
}
