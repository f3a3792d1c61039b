/**
 * Plain-DOM rendering of a UiSessionView. No framework: the controller
 * owns all state, this module only projects it into elements and wires
 * the two label buttons back to it.
 */

import { RankingEntry } from "./api.js";
import { Side, UiSessionView } from "./session.js";

export interface ViewHandlers {
  onChoose: (side: Side) => void;
}

export function render(root: HTMLElement, view: UiSessionView, handlers: ViewHandlers): void {
  root.replaceChildren(
    statusLine(view),
    progressLine(view),
    pairPanels(view, handlers),
    rankingBoard(view),
  );
}

function statusLine(view: UiSessionView): HTMLElement {
  const el = document.createElement("p");
  el.className = "status";
  if (view.error) {
    el.classList.add("error");
    el.textContent = view.error;
  } else {
    el.textContent = {
      idle: "configure a session and press start",
      loading: "contacting the ranking service...",
      awaiting_label: "which candidate is better?",
      complete: "session complete",
      error: "something went wrong",
    }[view.status];
  }
  return el;
}

function progressLine(view: UiSessionView): HTMLElement {
  const el = document.createElement("p");
  el.className = "progress";
  if (view.progress.budget > 0) {
    el.textContent = `labels: ${view.progress.labels} / ${view.progress.budget}`;
  }
  return el;
}

function pairPanels(view: UiSessionView, handlers: ViewHandlers): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "pair";
  if (view.status === "complete") {
    wrap.appendChild(exportLink(view));
    return wrap;
  }
  const sides: Side[] = ["left", "right"];
  for (const side of sides) {
    const panel = document.createElement("div");
    panel.className = "panel";
    const text = document.createElement("p");
    const button = document.createElement("button");
    if (view.pair) {
      const shown = view.pair[side];
      text.textContent = shown.text ?? `candidate #${shown.id}`;
      button.dataset.candidateId = String(shown.id);
    } else {
      text.textContent = "";
    }
    button.textContent = side === "left" ? "prefer left" : "prefer right";
    button.disabled = !view.canLabel;
    button.addEventListener("click", () => handlers.onChoose(side));
    panel.append(text, button);
    wrap.appendChild(panel);
  }
  return wrap;
}

function rankingBoard(view: UiSessionView): HTMLElement {
  const board = document.createElement("ol");
  board.className = "ranking";
  const utilities = view.ranking.map((r) => r.utility);
  const lo = Math.min(...utilities, 0);
  const hi = Math.max(...utilities, 0);
  const span = hi - lo || 1;
  for (const entry of view.ranking) {
    board.appendChild(rankingRow(entry, (entry.utility - lo) / span));
  }
  return board;
}

function rankingRow(entry: RankingEntry, fill: number): HTMLElement {
  const row = document.createElement("li");
  const bar = document.createElement("span");
  bar.className = "bar";
  bar.style.width = `${Math.round(6 + 94 * fill)}%`;
  const label = document.createElement("span");
  label.textContent = `#${entry.id} ${entry.text ?? ""} (${entry.utility.toFixed(3)})`;
  row.append(bar, label);
  return row;
}

function exportLink(view: UiSessionView): HTMLElement {
  const link = document.createElement("a");
  link.className = "export";
  link.download = `ranking-${view.sessionId ?? "session"}.json`;
  link.textContent = "download full ranking";
  const payload = JSON.stringify({ session_id: view.sessionId, ranking: view.ranking }, null, 2);
  link.href = `data:application/json;charset=utf-8,${encodeURIComponent(payload)}`;
  return link;
}
