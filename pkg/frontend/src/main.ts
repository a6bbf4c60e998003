/**
 * Wiring: configuration from the query string / localStorage, a 2 s poll of
 * the session list and the active session, and event plumbing between the
 * store and the DOM.
 */

import { AnnotationApi, SessionSummary } from "./api.js";
import { createPoller } from "./poller.js";
import { SessionStore } from "./state.js";
import { renderSession, renderSessionList } from "./view.js";

const POLL_INTERVAL_MS = 2000;

function configFromPage(): { baseUrl: string; token: string; translator: string | null } {
  const params = new URLSearchParams(window.location.search);
  const baseUrl =
    params.get("service") ??
    localStorage.getItem("annotation.service") ??
    window.location.origin;
  const token = params.get("token") ?? localStorage.getItem("annotation.token") ?? "";
  const translator =
    params.get("translator") ?? localStorage.getItem("annotation.translator");
  localStorage.setItem("annotation.service", baseUrl);
  if (token) localStorage.setItem("annotation.token", token);
  if (translator) localStorage.setItem("annotation.translator", translator);
  return { baseUrl, token, translator };
}

function main(): void {
  const { baseUrl, token, translator } = configFromPage();
  const listEl = document.getElementById("sessions") as HTMLElement;
  const sessionEl = document.getElementById("session") as HTMLElement;
  const statusEl = document.getElementById("status") as HTMLElement;

  const api = new AnnotationApi({ baseUrl, token });
  let sessions: SessionSummary[] = [];
  let store: SessionStore | null = null;

  function redraw(): void {
    renderSessionList(listEl, sessions, store?.sessionId ?? null, selectSession);
    if (store) {
      renderSession(sessionEl, store, submit, complete);
    }
  }

  function selectSession(sessionId: string): void {
    store = new SessionStore(api, sessionId, translator);
    void sessionPoller.fetchNow();
    redraw();
  }

  function submit(itemId: string, text: string): void {
    if (!store) return;
    store.clearError(itemId);
    redraw();
    store
      .submit(itemId, text)
      .catch(() => undefined) // the row carries the inline error
      .finally(redraw);
  }

  function complete(): void {
    if (!store) return;
    store
      .complete()
      .catch((err) => {
        statusEl.textContent = String(err);
      })
      .finally(() => void sessionPoller.fetchNow());
  }

  const listPoller = createPoller(
    () => api.listSessions(),
    (data) => {
      sessions = data.sessions;
      if (!store && sessions.length > 0) {
        selectSession(sessions[sessions.length - 1].session_id);
        return;
      }
      statusEl.textContent = "";
      redraw();
    },
    (err) => {
      statusEl.textContent = `service unreachable: ${String(err)}`;
    },
    POLL_INTERVAL_MS,
  );

  const sessionPoller = createPoller(
    async () => (store ? api.getSession(store.sessionId) : null),
    (session) => {
      if (session && store && session.session_id === store.sessionId) {
        store.applyServer(session);
        redraw();
      }
    },
    (err) => {
      statusEl.textContent = `session refresh failed: ${String(err)}`;
    },
    POLL_INTERVAL_MS,
  );

  listPoller.start();
  sessionPoller.start();
}

document.addEventListener("DOMContentLoaded", main);
