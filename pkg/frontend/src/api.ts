// API client with an offline-tolerant submission queue.
//
// Every judgment gets an idempotency key before the first send attempt, so
// a retry after a network failure (or a re-authenticated session) is
// exactly-once on the server. The fetch function is injectable, which the
// tests use both to fake the server and to record every payload that
// would cross the network.

import type {
  CampaignSummary,
  JudgmentBody,
  JudgmentReceipt,
  NextTaskResponse,
  ProgressResponse,
  SessionResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionExpiredError extends Error {
  constructor() {
    super("session expired; re-authenticate and retry");
  }
}

export class RejectedJudgmentError extends Error {
  constructor(public reason: string) {
    super(`judgment rejected: ${reason}`);
  }
}

interface QueuedJudgment {
  campaignId: string;
  body: JudgmentBody; // carries its idempotency_key
}

function makeKey(): string {
  if (typeof crypto !== "undefined" && crypto.randomUUID) return crypto.randomUUID();
  return `k${Date.now().toString(36)}${Math.random().toString(36).slice(2)}`;
}

export class ApiClient {
  private token: string | null = null;
  private annotatorId: string | null = null;
  readonly pending: QueuedJudgment[] = [];

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init: RequestInit = {}, auth = true): Promise<Response> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (auth && this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, { ...init, headers });
    if (resp.status === 401) throw new SessionExpiredError();
    return resp;
  }

  async openSession(annotatorId: string, campaignId: string): Promise<SessionResponse> {
    const resp = await this.request(
      "/auth/session",
      {
        method: "POST",
        body: JSON.stringify({ annotator_id: annotatorId, campaign_id: campaignId }),
      },
      false,
    );
    if (!resp.ok) throw new Error(`session refused (${resp.status})`);
    const session = (await resp.json()) as SessionResponse;
    this.token = session.token;
    this.annotatorId = annotatorId;
    return session;
  }

  async listCampaigns(): Promise<CampaignSummary[]> {
    const resp = await this.request("/campaigns", {}, false);
    return (await resp.json()) as CampaignSummary[];
  }

  async nextTask(campaignId: string): Promise<NextTaskResponse> {
    if (!this.annotatorId) throw new Error("no session");
    const resp = await this.request(
      `/campaigns/${campaignId}/next?annotator=${encodeURIComponent(this.annotatorId)}`,
    );
    return (await resp.json()) as NextTaskResponse;
  }

  async progress(campaignId: string): Promise<ProgressResponse> {
    const resp = await this.request(`/campaigns/${campaignId}/progress`, {}, false);
    return (await resp.json()) as ProgressResponse;
  }

  /** Submit a judgment; on network failure the judgment is queued locally
   *  (key already attached) and the error is rethrown for the UI. */
  async submitJudgment(campaignId: string, body: JudgmentBody): Promise<JudgmentReceipt> {
    const keyed: JudgmentBody = { ...body, idempotency_key: body.idempotency_key ?? makeKey() };
    try {
      return await this.post(campaignId, keyed);
    } catch (err) {
      if (err instanceof RejectedJudgmentError) throw err;
      this.pending.push({ campaignId, body: keyed });
      throw err;
    }
  }

  private async post(campaignId: string, body: JudgmentBody): Promise<JudgmentReceipt> {
    const resp = await this.request(`/campaigns/${campaignId}/judgments`, {
      method: "POST",
      body: JSON.stringify(body),
    });
    if (resp.status === 422) {
      const detail = (await resp.json()) as { detail?: { reason?: string } };
      throw new RejectedJudgmentError(detail.detail?.reason ?? "invalid judgment");
    }
    if (!resp.ok) throw new Error(`submit failed (${resp.status})`);
    return (await resp.json()) as JudgmentReceipt;
  }

  /** Retry queued judgments in order; keys make replays exactly-once.
   *  Stops at the first judgment that still cannot be delivered. */
  async flushPending(): Promise<JudgmentReceipt[]> {
    const delivered: JudgmentReceipt[] = [];
    while (this.pending.length > 0) {
      const next = this.pending[0]!;
      try {
        delivered.push(await this.post(next.campaignId, next.body));
        this.pending.shift();
      } catch (err) {
        if (err instanceof RejectedJudgmentError) {
          this.pending.shift(); // permanently invalid; drop with the reason
          throw err;
        }
        break;
      }
    }
    return delivered;
  }
}
