/**
 * Typed client for the oracle-bridge JSON API.
 *
 * The console never mutates session state beyond posting answers; everything
 * else is read-only polling.
 */

export interface SessionSummary {
  id: string;
  episode_id: string;
  state: "idle" | "awaiting_answer" | "done";
}

export interface SessionState {
  id: string;
  episode_id: string;
  description: string;
  pending_question: string | null;
  state: "idle" | "awaiting_answer" | "done";
  transcript: [string, string][];
  progress: string | null;
}

export class HttpError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

/** An answer was posted while no question was pending (HTTP 409). */
export class ConflictError extends HttpError {
  constructor(message: string) {
    super(409, message);
  }
}

/** Trailing whitespace is stripped; everything else is sent verbatim. */
export function normalizeAnswer(text: string): string {
  return text.replace(/\s+$/, "");
}

export class BridgeClient {
  private readonly baseUrl: string;
  private readonly token?: string;

  constructor(baseUrl: string, token?: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = token;
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["X-Auth-Token"] = this.token;
    return headers;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      const detail = await response.text().catch(() => "");
      if (response.status === 409) throw new ConflictError(detail || "conflict");
      throw new HttpError(response.status, detail || response.statusText);
    }
    return response;
  }

  async listSessions(): Promise<SessionSummary[]> {
    const response = await this.request("/api/sessions", {
      headers: this.headers(false),
    });
    return (await response.json()) as SessionSummary[];
  }

  async getSession(id: string): Promise<SessionState> {
    const response = await this.request(`/api/sessions/${id}`, {
      headers: this.headers(false),
    });
    return (await response.json()) as SessionState;
  }

  async submitAnswer(id: string, answer: string): Promise<void> {
    const body = normalizeAnswer(answer);
    if (!body) throw new Error("empty answer");
    await this.request(`/api/sessions/${id}/answer`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ answer: body }),
    });
  }

  targetUrl(id: string): string {
    return `${this.baseUrl}/api/sessions/${id}/target.png`;
  }
}
