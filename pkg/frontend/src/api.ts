/** Typed client for the translation service plus run-status polling. */

import type {
  DatasetsResponse,
  ModesResponse,
  OutputsResponse,
  ProgramResponse,
  RunListResponse,
  RunSummary,
  SectionsResponse,
  SubmitRunResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export interface SubmitRunBody {
  input: string;
  input_form: string;
  mode?: string;
  datasets?: string[];
  baseline?: string;
}

export interface RepairBody {
  edited_fragment?: string;
  section?: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(private baseUrl: string = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, init);
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  datasets(): Promise<DatasetsResponse> {
    return this.request("/datasets");
  }

  modes(): Promise<ModesResponse> {
    return this.request("/modes");
  }

  listRuns(): Promise<RunListResponse> {
    return this.request("/runs");
  }

  submitRun(body: SubmitRunBody): Promise<SubmitRunResponse> {
    return this.post("/runs", body);
  }

  run(runId: string): Promise<RunSummary> {
    return this.request(`/runs/${runId}`);
  }

  sections(runId: string): Promise<SectionsResponse> {
    return this.request(`/runs/${runId}/sections`);
  }

  program(runId: string): Promise<ProgramResponse> {
    return this.request(`/runs/${runId}/program`);
  }

  outputs(runId: string): Promise<OutputsResponse> {
    return this.request(`/runs/${runId}/outputs`);
  }

  repair(runId: string, body: RepairBody): Promise<SubmitRunResponse> {
    return this.post(`/runs/${runId}/repair`, body);
  }
}

export interface PollOptions {
  intervalMs?: number;
  maxIntervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (summary: RunSummary) => void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/** Poll a run until it leaves the Running state; 1s interval with backoff. */
export async function pollRun(
  client: ApiClient,
  runId: string,
  options: PollOptions = {},
): Promise<RunSummary> {
  const timeoutMs = options.timeoutMs ?? 120_000;
  const maxIntervalMs = options.maxIntervalMs ?? 5_000;
  let interval = options.intervalMs ?? 1_000;
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const summary = await client.run(runId);
    options.onUpdate?.(summary);
    if (summary.status !== "Running") return summary;
    if (Date.now() > deadline) throw new Error(`run ${runId} still Running after timeout`);
    await sleep(interval);
    interval = Math.min(interval * 1.5, maxIntervalMs);
  }
}
