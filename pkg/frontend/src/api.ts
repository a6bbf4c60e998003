/**
 * Typed client for the annotation service HTTP API.
 *
 * Endpoints (JSON, bearer auth):
 *   POST /v1/sessions
 *   GET  /v1/sessions
 *   GET  /v1/sessions/{id}
 *   PUT  /v1/sessions/{id}/items/{item_id}
 *   POST /v1/sessions/{id}/complete
 */

export interface Item {
  item_id: string;
  source_text: string;
  lf_display: string;
  translation: string | null;
  translator: string | null;
  updated_at: number | null;
}

export interface Session {
  session_id: string;
  round: number;
  status: "open" | "complete";
  items: Item[];
}

export interface SessionSummary {
  session_id: string;
  round: number;
  status: "open" | "complete";
  n_items: number;
  n_translated: number;
}

export interface ServiceConfig {
  baseUrl: string;
  token: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly error: string,
    public readonly detail: string,
  ) {
    super(`${error}: ${detail}`);
  }
}

type Fetch = typeof fetch;

export class AnnotationApi {
  private readonly fetchImpl: Fetch;

  constructor(
    private readonly config: ServiceConfig,
    fetchImpl?: Fetch,
  ) {
    this.fetchImpl = fetchImpl ?? fetch.bind(globalThis);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.config.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.config.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let error = "http_error";
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { error?: string; detail?: string };
        error = payload.error ?? error;
        detail = payload.detail ?? detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, error, detail);
    }
    return (await response.json()) as T;
  }

  listSessions(): Promise<{ sessions: SessionSummary[] }> {
    return this.request("GET", "/v1/sessions");
  }

  getSession(sessionId: string): Promise<Session> {
    return this.request("GET", `/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  submitTranslation(
    sessionId: string,
    itemId: string,
    translation: string,
    translator: string | null,
  ): Promise<Item> {
    return this.request(
      "PUT",
      `/v1/sessions/${encodeURIComponent(sessionId)}/items/${encodeURIComponent(itemId)}`,
      { translation, translator },
    );
  }

  completeSession(sessionId: string): Promise<{ session_id: string; status: string }> {
    return this.request(
      "POST",
      `/v1/sessions/${encodeURIComponent(sessionId)}/complete`,
    );
  }
}
