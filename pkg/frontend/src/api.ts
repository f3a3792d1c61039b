/**
 * Typed client for the ranking service JSON API.
 *
 * Mirrors the server payloads exactly; every method returns the parsed
 * body or throws ApiError carrying the server's error envelope
 * ({code, message, details}) plus the HTTP status.
 */

export type SessionStatus = "ready" | "awaiting_label" | "complete";

export interface CandidateIn {
  id?: number;
  features: number[];
  text?: string | null;
}

export interface ScoreIn {
  id: number;
  score: number;
}

export interface SessionConfigIn {
  learner?: "gppl" | "bt";
  strategy?: "random" | "unc" | "unpa" | "eig" | "imp" | "tp";
  warm_start?: "none" | "sum" | "prior";
  max_interactions?: number;
  batch_size?: number;
  seed?: number;
  inducing_count?: number | null;
}

export interface CreateSessionRequest {
  config?: SessionConfigIn;
  pool?: CandidateIn[];
  pool_id?: string;
  priors?: ScoreIn[];
}

export interface RankingEntry {
  id: number;
  utility: number;
  text: string | null;
}

export interface Progress {
  labels: number;
  budget: number;
}

export interface CreateSessionResponse {
  schema_version: number;
  session_id: string;
  status: SessionStatus;
  ranking: RankingEntry[];
}

export interface PairSide {
  id: number;
  text: string | null;
}

export interface Placement {
  left: number;
  right: number;
}

export interface QueryResponse {
  schema_version: number;
  a: PairSide;
  b: PairSide;
  remaining: number;
  placement: Placement;
}

export interface LabelRequest {
  a_id: number;
  b_id: number;
  label: 0 | 1;
}

export interface LabelResponse {
  schema_version: number;
  status: SessionStatus;
  progress: Progress;
  ranking: RankingEntry[];
}

export interface RankingResponse {
  schema_version: number;
  status: SessionStatus;
  ranking: RankingEntry[];
}

export interface SessionInfoResponse {
  schema_version: number;
  session_id: string;
  status: SessionStatus;
  progress: Progress;
  config: Record<string, unknown>;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly details: unknown;

  constructor(status: number, code: string, message: string, details: unknown = null) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
    this.details = details;
  }
}

export class RankingClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    // bind so a bare window/global fetch keeps its receiver
    this.fetchImpl = fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  }

  createSession(req: CreateSessionRequest): Promise<CreateSessionResponse> {
    return this.request<CreateSessionResponse>("POST", "/v1/sessions", req);
  }

  nextQuery(sessionId: string): Promise<QueryResponse> {
    return this.request<QueryResponse>("GET", `/v1/sessions/${encodeURIComponent(sessionId)}/query`);
  }

  submitLabel(sessionId: string, label: LabelRequest): Promise<LabelResponse> {
    return this.request<LabelResponse>(
      "POST",
      `/v1/sessions/${encodeURIComponent(sessionId)}/labels`,
      label,
    );
  }

  ranking(sessionId: string, topK?: number): Promise<RankingResponse> {
    const suffix = topK === undefined ? "" : `?top_k=${topK}`;
    return this.request<RankingResponse>(
      "GET",
      `/v1/sessions/${encodeURIComponent(sessionId)}/ranking${suffix}`,
    );
  }

  info(sessionId: string): Promise<SessionInfoResponse> {
    return this.request<SessionInfoResponse>("GET", `/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    let parsed: unknown = null;
    try {
      parsed = await response.json();
    } catch {
      if (response.ok) {
        throw new ApiError(response.status, "bad-response", "server returned non-JSON body");
      }
    }
    if (!response.ok) {
      const envelope = (parsed ?? {}) as { code?: string; message?: string; details?: unknown };
      throw new ApiError(
        response.status,
        envelope.code ?? "error",
        envelope.message ?? `request failed with status ${response.status}`,
        envelope.details ?? null,
      );
    }
    return parsed as T;
  }
}
