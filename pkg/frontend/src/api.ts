// Thin fetch wrapper around the three service endpoints. Server rejections
// carry an HTTP status; plain network failures carry status null, which is
// what the session layer uses to decide whether a submission is retryable.

import type {
  LabelsClient,
  LabelSubmission,
  ProgressStats,
  QueueResponse,
  SubmitAck,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get retryable(): boolean {
    return this.status === null;
  }
}

export interface ApiConfig {
  baseUrl: string;
  token?: string;
  fetchFn?: typeof fetch;
}

export class LabelsApi implements LabelsClient {
  private readonly baseUrl: string;
  private readonly token: string | undefined;
  private readonly fetchFn: typeof fetch;

  constructor(config: ApiConfig) {
    this.baseUrl = config.baseUrl.replace(/\/$/, "");
    this.token = config.token;
    this.fetchFn = config.fetchFn ?? fetch.bind(globalThis);
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token !== undefined) headers["X-Auth-Token"] = this.token;
    return headers;
  }

  private async request(path: string, init: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(err instanceof Error ? err.message : String(err), null);
    }
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(detail, response.status);
    }
    return response.json();
  }

  async fetchNext(labeler: string, split: string): Promise<QueueResponse> {
    const query = new URLSearchParams({ labeler, split });
    return (await this.request(`/queue?${query}`, {
      method: "GET",
      headers: this.headers(false),
    })) as QueueResponse;
  }

  async submit(sub: LabelSubmission): Promise<SubmitAck> {
    return (await this.request("/labels", {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(sub),
    })) as SubmitAck;
  }

  async progress(split: string): Promise<ProgressStats> {
    const query = new URLSearchParams({ split });
    return (await this.request(`/progress?${query}`, {
      method: "GET",
      headers: this.headers(false),
    })) as ProgressStats;
  }
}
