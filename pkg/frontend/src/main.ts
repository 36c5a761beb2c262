/**
 * Browser entry point. Wires the controller to a small DOM shell.
 *
 * Served next to the backend it talks to the same origin; open with
 * ?mock=1 to drive the canned in-memory backend instead (no service
 * needed, handy for demos and UI work).
 */

import { HttpApiClient } from "./api.js";
import type { ApiClient } from "./api.js";
import { WorkbenchController } from "./controller.js";
import { MockApiClient } from "./mockServer.js";
import type { TargetKind, WorkbenchState } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  text?: string,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (text !== undefined) node.textContent = text;
  if (className !== undefined) node.className = className;
  return node;
}

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id} in index.html`);
  return node;
}

function render(state: WorkbenchState, controller: WorkbenchController): void {
  const outfit = must("outfit");
  outfit.replaceChildren();
  if (state.outfit.length === 0) {
    outfit.append(el("span", "(empty)", "muted"));
  }
  for (const id of state.outfit) {
    const chip = el("button", `${id} ×`, "chip");
    chip.title = "remove from outfit";
    chip.onclick = () => void controller.removeItem(id);
    outfit.append(chip);
  }

  const score = must("score");
  score.textContent =
    state.score === null ? "score: -" : `score: ${String(state.score)}`;
  if (state.pendingScoreSeq !== null) score.textContent += " (refreshing)";

  const banner = must("banner");
  banner.replaceChildren();
  if (state.banner !== null) {
    banner.append(el("span", state.banner, "error"));
    const dismiss = el("button", "dismiss");
    dismiss.onclick = () => controller.dismissBanner();
    banner.append(dismiss);
  }
  must("notice").textContent = state.notice ?? "";

  const results = must("results");
  results.replaceChildren();
  if (state.pendingQuerySeq !== null) {
    results.append(el("div", "searching...", "muted"));
  }
  if (state.resultsStatus === "empty") {
    results.append(el("div", "no matches", "muted"));
  }
  for (const c of state.results) {
    const row = el("button", undefined, "result");
    row.append(
      el("span", c.item_id),
      el("span", c.category, "badge"),
      el("span", String(c.distance), "muted"),
    );
    row.title = "add to outfit";
    row.onclick = () => void controller.pickResult(c.item_id);
    results.append(row);
  }
}

async function renderCatalog(
  client: ApiClient,
  controller: WorkbenchController,
): Promise<void> {
  const pane = must("catalog");
  const page = await client.listItems({ pageSize: 200 });
  for (const it of page.items) {
    const row = el("button", undefined, "result");
    row.append(
      el("span", it.item_id),
      el("span", it.fine_category, "badge"),
      el("span", it.description, "muted"),
    );
    row.onclick = () => void controller.addItem(it.item_id);
    pane.append(row);
  }
}

function boot(): void {
  const mock = new URLSearchParams(window.location.search).has("mock");
  const client: ApiClient = mock
    ? new MockApiClient(undefined, { seed: 7, maxLatencyMs: 150 })
    : new HttpApiClient("");
  const controller = new WorkbenchController(client);
  controller.subscribe((state) => render(state, controller));

  const kind = must("kind") as HTMLSelectElement;
  const text = must("text") as HTMLInputElement;
  const sync = () => controller.setDraft(kind.value as TargetKind, text.value);
  kind.onchange = sync;
  text.oninput = sync;
  (must("run") as HTMLButtonElement).onclick = () => void controller.runQuery();

  render(controller.state, controller);
  renderCatalog(client, controller).catch((err) => {
    must("banner").append(el("span", String(err), "error"));
  });
}

boot();
