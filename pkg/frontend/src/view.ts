/**
 * Pure text rendering of the workbench state.
 *
 * Numbers pass through String(): candidates show the backend-reported
 * distance unmodified, and the score display is exactly reproducible for
 * the same state.
 */

import type { WorkbenchState } from "./types.js";

export function renderText(state: WorkbenchState): string {
  const lines: string[] = [];

  lines.push(
    state.outfit.length === 0
      ? "outfit: (empty)"
      : `outfit: ${state.outfit.join(", ")}`,
  );

  const scoring = state.pendingScoreSeq !== null ? " (refreshing)" : "";
  lines.push(
    state.score === null
      ? `score: -${scoring}`
      : `score: ${String(state.score)}${scoring}`,
  );

  lines.push(`query [${state.draft.kind}] "${state.draft.text}"`);

  if (state.banner !== null) lines.push(`error: ${state.banner}`);
  if (state.notice !== null) lines.push(`note: ${state.notice}`);

  if (state.pendingQuerySeq !== null) {
    lines.push("searching...");
  }
  if (state.resultsStatus === "idle") {
    lines.push("results: none yet");
  } else if (state.resultsStatus === "empty") {
    lines.push("results: no matches");
  } else {
    lines.push(`results (${state.results.length}):`);
    state.results.forEach((c, i) => {
      lines.push(
        `  ${i + 1}. ${c.item_id} [${c.category}] distance ${String(c.distance)}`,
      );
    });
  }

  return lines.join("\n");
}
