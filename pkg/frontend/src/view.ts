/**
 * DOM rendering: a session list sidebar and the active session's translation
 * table. Every displayed field comes from a service response (or the user's
 * own in-flight draft, shown as "saving").
 */

import { SessionSummary } from "./api.js";
import { Row, SessionStore } from "./state.js";

export function renderSessionList(
  container: HTMLElement,
  sessions: SessionSummary[],
  activeId: string | null,
  onSelect: (sessionId: string) => void,
): void {
  container.replaceChildren();
  for (const s of sessions) {
    const button = document.createElement("button");
    button.className = "session" + (s.session_id === activeId ? " active" : "");
    button.textContent = `round ${s.round} — ${s.n_translated}/${s.n_items} ${s.status}`;
    button.addEventListener("click", () => onSelect(s.session_id));
    container.appendChild(button);
  }
  if (sessions.length === 0) {
    const empty = document.createElement("p");
    empty.textContent = "No sessions yet. The selection loop opens one per round.";
    container.appendChild(empty);
  }
}

export function renderSession(
  container: HTMLElement,
  store: SessionStore,
  onSubmit: (itemId: string, text: string) => void,
  onComplete: () => void,
): void {
  container.replaceChildren();
  const session = store.current;
  if (!session) {
    container.textContent = "Select a session.";
    return;
  }

  const header = document.createElement("h2");
  const [done, total] = store.progress();
  header.textContent = `Round ${session.round} — ${done}/${total} translated (${session.status})`;
  container.appendChild(header);

  if (store.staleSession) {
    const stale = document.createElement("p");
    stale.className = "warning";
    stale.textContent = "Session changed on the server; refreshing…";
    container.appendChild(stale);
  }

  const table = document.createElement("table");
  for (const row of store.rows()) {
    table.appendChild(renderRow(row, session.status === "open", onSubmit));
  }
  container.appendChild(table);

  const complete = document.createElement("button");
  complete.id = "complete";
  complete.textContent = store.isComplete() ? "Completed" : "Complete session";
  complete.disabled = !store.canComplete();
  complete.addEventListener("click", onComplete);
  container.appendChild(complete);
}

function renderRow(
  row: Row,
  editable: boolean,
  onSubmit: (itemId: string, text: string) => void,
): HTMLTableRowElement {
  const tr = document.createElement("tr");
  tr.dataset.itemId = row.item.item_id;

  const source = document.createElement("td");
  source.className = "source";
  const text = document.createElement("div");
  text.textContent = row.item.source_text;
  const gloss = document.createElement("code");
  gloss.textContent = row.item.lf_display;
  source.append(text, gloss);
  tr.appendChild(source);

  const edit = document.createElement("td");
  const input = document.createElement("input");
  input.value = row.display;
  input.disabled = !editable || row.status === "saving";
  input.placeholder = "translation";
  const save = document.createElement("button");
  save.textContent = row.status === "saving" ? "saving…" : "save";
  save.disabled = input.disabled;
  save.addEventListener("click", () => onSubmit(row.item.item_id, input.value));
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") onSubmit(row.item.item_id, input.value);
  });
  edit.append(input, save);
  if (row.error) {
    const err = document.createElement("span");
    err.className = "error";
    err.textContent = row.error;
    edit.appendChild(err);
  }
  if (row.item.updated_at !== null && row.item.translator) {
    const meta = document.createElement("span");
    meta.className = "meta";
    meta.textContent = `by ${row.item.translator} @ ${new Date(row.item.updated_at * 1000).toLocaleTimeString()}`;
    edit.appendChild(meta);
  }
  tr.appendChild(edit);
  return tr;
}
