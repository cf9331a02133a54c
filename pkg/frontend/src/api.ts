/** Thin typed client for the rating service HTTP API. */

import {
  CellResponse,
  GridPayload,
  SessionInfo,
  validateGridPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    // bind so the client works when the global fetch is the implementation
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }

  async createSession(studyId: string, raterId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>(
      "POST",
      `/studies/${encodeURIComponent(studyId)}/sessions`,
      { rater_id: raterId },
    );
  }

  async getSession(sessionId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>("GET", `/sessions/${sessionId}`);
  }

  async getGrid(sessionId: string, index: number): Promise<GridPayload> {
    const raw = await this.request<unknown>(
      "GET",
      `/sessions/${sessionId}/grids/${index}`,
    );
    return validateGridPayload(raw);
  }

  async submitResponses(
    sessionId: string,
    index: number,
    responses: CellResponse[],
  ): Promise<SessionInfo> {
    return this.request<SessionInfo>(
      "POST",
      `/sessions/${sessionId}/grids/${index}/responses`,
      { responses },
    );
  }

  async lockSession(sessionId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", `/sessions/${sessionId}/lock`);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "network", `service unreachable: ${err}`);
    }
    const text = await response.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      throw new ApiError(response.status, "bad_json", text.slice(0, 200));
    }
    if (!response.ok) {
      const err = (parsed ?? {}) as { error?: { code?: string; message?: string } };
      throw new ApiError(
        response.status,
        err.error?.code ?? "http_error",
        err.error?.message ?? `HTTP ${response.status}`,
      );
    }
    return parsed as T;
  }
}
