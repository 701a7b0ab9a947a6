import type { ActionOutcome, CreateSessionRequest, SessionState } from "./types";

export class ServiceError extends Error {
  constructor(readonly status: number, readonly code: string, detail: string) {
    super(detail);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client for the play service; the server is authoritative. */
export class PlayServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!res.ok) {
      let code = "error";
      let detail = `${res.status}`;
      try {
        const body = (await res.json()) as { error?: string; detail?: string };
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(res.status, code, detail);
    }
    return (await res.json()) as T;
  }

  async createSession(req: CreateSessionRequest): Promise<{ session_id: string; state: SessionState }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  async getState<S extends SessionState = SessionState>(sessionId: string): Promise<S> {
    return this.request(`/sessions/${sessionId}/state`);
  }

  async submitAction<S extends SessionState = SessionState>(
    sessionId: string,
    action: number,
  ): Promise<ActionOutcome<S>> {
    return this.request(`/sessions/${sessionId}/action`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action }),
    });
  }

  async getLog(sessionId: string): Promise<string> {
    const res = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/log`);
    if (!res.ok) throw new ServiceError(res.status, "error", `${res.status}`);
    return res.text();
  }
}
