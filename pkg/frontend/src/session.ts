/**
 * Session controller: the state machine between the API client and the
 * DOM. One instance drives one labelling session.
 *
 * Guarantees the view layer relies on:
 * - label clicks are accepted only while a pair is displayed and no
 *   request is in flight, so rapid double clicks submit exactly once;
 * - the ranking shown always comes from the most recent server
 *   response, never from before the last acknowledged label;
 * - a stale-pair conflict (another writer got there first) refetches
 *   the current query silently instead of surfacing an error;
 * - start() validates the form before any request goes out.
 */

import {
  ApiError,
  CreateSessionRequest,
  Placement,
  Progress,
  QueryResponse,
  RankingClient,
  RankingEntry,
} from "./api.js";

export type UiStatus = "idle" | "loading" | "awaiting_label" | "complete" | "error";

export type Side = "left" | "right";

export interface PairPanel {
  id: number;
  text: string | null;
}

export interface UiSessionView {
  sessionId: string | null;
  status: UiStatus;
  /** Panels in display order; null unless a pair is awaiting a label. */
  pair: { left: PairPanel; right: PairPanel } | null;
  ranking: RankingEntry[];
  progress: Progress;
  remaining: number;
  canLabel: boolean;
  error: string | null;
}

export interface SessionControllerOptions {
  topK?: number;
  onChange?: (view: UiSessionView) => void;
}

const DEFAULT_TOP_K = 5;

export class SessionController {
  private readonly client: RankingClient;
  private readonly topK: number;
  private readonly onChange?: (view: UiSessionView) => void;

  private sessionId: string | null = null;
  private status: UiStatus = "idle";
  private query: QueryResponse | null = null;
  private ranking: RankingEntry[] = [];
  private progress: Progress = { labels: 0, budget: 0 };
  private remaining = 0;
  private error: string | null = null;
  private inFlight = false;

  constructor(client: RankingClient, options: SessionControllerOptions = {}) {
    this.client = client;
    this.topK = options.topK ?? DEFAULT_TOP_K;
    this.onChange = options.onChange;
  }

  get view(): UiSessionView {
    const pair = this.query
      ? {
          left: this.panelFor(this.query, this.query.placement.left),
          right: this.panelFor(this.query, this.query.placement.right),
        }
      : null;
    return {
      sessionId: this.sessionId,
      status: this.status,
      pair,
      // the loop shows the top-k board; the completion screen shows everything
      ranking: this.status === "complete" ? this.ranking.slice() : this.ranking.slice(0, this.topK),
      progress: { ...this.progress },
      remaining: this.remaining,
      canLabel: this.status === "awaiting_label" && pair !== null && !this.inFlight,
      error: this.error,
    };
  }

  /** Create a session and fetch the first query. Rejects a non-positive
   * budget locally, before anything reaches the network. */
  async start(request: CreateSessionRequest): Promise<void> {
    if (this.inFlight) {
      return;
    }
    const budget = request.config?.max_interactions ?? 10;
    if (!Number.isInteger(budget) || budget < 1) {
      this.error = "interaction budget must be a positive integer";
      this.emit();
      return;
    }
    this.inFlight = true;
    this.status = "loading";
    this.error = null;
    this.emit();
    try {
      const created = await this.client.createSession(request);
      this.sessionId = created.session_id;
      this.ranking = created.ranking;
      this.progress = { labels: 0, budget };
      await this.fetchQuery();
    } catch (err) {
      // leave no partial session behind so start() can simply be retried
      this.sessionId = null;
      this.query = null;
      this.ranking = [];
      this.progress = { labels: 0, budget: 0 };
      this.status = "idle";
      this.error = describe(err);
    } finally {
      this.inFlight = false;
      this.emit();
    }
  }

  /** Submit the label for the displayed pair. No-op unless labelling is
   * currently allowed, which is what absorbs double clicks. */
  async choose(side: Side): Promise<void> {
    if (this.inFlight || this.status !== "awaiting_label" || !this.query || !this.sessionId) {
      return;
    }
    this.inFlight = true;
    this.emit();
    const query = this.query;
    const preferred = side === "left" ? query.placement.left : query.placement.right;
    try {
      const outcome = await this.client.submitLabel(this.sessionId, {
        a_id: query.a.id,
        b_id: query.b.id,
        label: preferred === query.a.id ? 1 : 0,
      });
      this.ranking = outcome.ranking;
      this.progress = outcome.progress;
      this.query = null;
      if (outcome.status === "complete") {
        this.status = "complete";
        this.remaining = 0;
      } else {
        await this.fetchQuery();
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409 && err.code === "stale-pair") {
        this.query = null;
        await this.refetchQuietly();
      } else if (err instanceof ApiError && err.status === 409 && err.code === "session-complete") {
        await this.finalize();
      } else {
        this.status = "error";
        this.error = describe(err);
      }
    } finally {
      this.inFlight = false;
      this.emit();
    }
  }

  /** The finished ranking as a downloadable JSON document. */
  exportRanking(): string {
    return JSON.stringify(
      { session_id: this.sessionId, progress: this.progress, ranking: this.ranking },
      null,
      2,
    );
  }

  private panelFor(query: QueryResponse, id: number): PairPanel {
    const side = query.a.id === id ? query.a : query.b;
    return { id: side.id, text: side.text };
  }

  private async fetchQuery(): Promise<void> {
    if (!this.sessionId) {
      return;
    }
    try {
      this.query = await this.client.nextQuery(this.sessionId);
      this.remaining = this.query.remaining;
      this.status = "awaiting_label";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409 && err.code === "session-complete") {
        await this.finalize();
      } else {
        throw err;
      }
    }
  }

  private async refetchQuietly(): Promise<void> {
    try {
      await this.fetchQuery();
    } catch (err) {
      this.status = "error";
      this.error = describe(err);
    }
  }

  private async finalize(): Promise<void> {
    this.query = null;
    this.status = "complete";
    this.remaining = 0;
    if (this.sessionId) {
      // make sure the closing ranking is the server's latest word
      const final = await this.client.ranking(this.sessionId);
      this.ranking = final.ranking;
    }
  }

  private emit(): void {
    this.onChange?.(this.view);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.code}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}
