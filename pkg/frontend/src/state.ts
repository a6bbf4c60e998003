/**
 * View-model for one annotation session.
 *
 * The server payload is the single source of truth; user edits live in an
 * explicit pending overlay while their PUT is in flight and are rolled back
 * on an error response. Completion is offered only when the *server* state
 * says every item is translated, matching the service-side precondition.
 */

import { AnnotationApi, ApiError, Item, Session } from "./api.js";

export type RowStatus = "idle" | "saving" | "error";

export interface Row {
  item: Item;
  /** Text shown in the editor: pending draft while saving, else server text. */
  display: string;
  status: RowStatus;
  error: string | null;
}

interface Pending {
  draft: string;
  status: RowStatus;
  error: string | null;
}

export class SessionStore {
  private session: Session | null = null;
  private pending = new Map<string, Pending>();
  /** Set when the server reports our view is stale (e.g. 409). */
  staleSession = false;

  constructor(
    private readonly api: AnnotationApi,
    readonly sessionId: string,
    private readonly translator: string | null = null,
  ) {}

  applyServer(session: Session): void {
    this.session = session;
    this.staleSession = false;
    // drop resolved overlays once the server reflects their text
    for (const item of session.items) {
      const overlay = this.pending.get(item.item_id);
      if (overlay && overlay.status !== "saving" && overlay.draft === (item.translation ?? "")) {
        this.pending.delete(item.item_id);
      }
    }
  }

  get current(): Session | null {
    return this.session;
  }

  rows(): Row[] {
    if (!this.session) return [];
    return this.session.items.map((item) => {
      const overlay = this.pending.get(item.item_id);
      if (overlay) {
        return {
          item,
          display: overlay.draft,
          status: overlay.status,
          error: overlay.error,
        };
      }
      return { item, display: item.translation ?? "", status: "idle", error: null };
    });
  }

  /** (translated, total) according to the latest service response. */
  progress(): [number, number] {
    if (!this.session) return [0, 0];
    const done = this.session.items.filter((it) => it.translation).length;
    return [done, this.session.items.length];
  }

  /** The completion action mirrors the service precondition exactly. */
  canComplete(): boolean {
    if (!this.session || this.session.status !== "open") return false;
    const [done, total] = this.progress();
    return done === total && total > 0;
  }

  isComplete(): boolean {
    return this.session?.status === "complete";
  }

  async submit(itemId: string, text: string): Promise<void> {
    if (!this.session) throw new Error("no session loaded");
    this.pending.set(itemId, { draft: text, status: "saving", error: null });
    try {
      const item = await this.api.submitTranslation(
        this.sessionId,
        itemId,
        text,
        this.translator,
      );
      // fold the acknowledged item back into the server snapshot
      this.session = {
        ...this.session,
        items: this.session.items.map((it) =>
          it.item_id === itemId ? item : it,
        ),
      };
      this.pending.delete(itemId);
    } catch (err) {
      // roll back to the last server-confirmed text, surface the error inline
      const detail = err instanceof ApiError ? err.detail : String(err);
      this.pending.set(itemId, {
        draft: this.serverText(itemId),
        status: "error",
        error: detail,
      });
      if (err instanceof ApiError && err.status === 409) {
        this.staleSession = true;
      }
      throw err;
    }
  }

  clearError(itemId: string): void {
    const overlay = this.pending.get(itemId);
    if (overlay && overlay.status === "error") {
      this.pending.delete(itemId);
    }
  }

  async complete(): Promise<void> {
    if (!this.canComplete()) {
      throw new Error("completion requires every item to be translated");
    }
    try {
      await this.api.completeSession(this.sessionId);
      if (this.session) {
        this.session = { ...this.session, status: "complete" };
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.staleSession = true;
      }
      throw err;
    }
  }

  private serverText(itemId: string): string {
    const item = this.session?.items.find((it) => it.item_id === itemId);
    return item?.translation ?? "";
  }
}
