/** Typed client for the annotation service HTTP API. */

export interface DocPayload {
  doc_id: string;
  sentences: string[];
}

export interface CandidatePayload {
  target_idx: number;
  /** Present in the payload for analytics; the UI must never render it. */
  provenance?: string[];
}

export interface Progress {
  completed: number;
  total: number;
}

export interface Task {
  pair_id: string;
  source_idx: number;
  candidates: CandidatePayload[];
  source_doc: DocPayload;
  target_doc: DocPayload;
  progress: Progress;
}

export interface NextTaskResponse {
  done: boolean;
  task?: Task;
  progress?: Progress;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      const body = await resp.text().catch(() => "");
      throw new ApiError(`${path} failed (${resp.status}): ${body}`, resp.status);
    }
    return resp;
  }

  async nextTask(annotator: string): Promise<NextTaskResponse> {
    const resp = await this.request(
      `/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
    return (await resp.json()) as NextTaskResponse;
  }

  async submitDecision(
    annotator: string,
    pairId: string,
    sourceIdx: number,
    targetIdx: number,
    accepted: boolean,
  ): Promise<void> {
    await this.request("/decisions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        annotator,
        pair_id: pairId,
        source_idx: sourceIdx,
        target_idx: targetIdx,
        accepted,
      }),
    });
  }

  async fetchExport(): Promise<string> {
    const resp = await this.request("/export");
    return resp.text();
  }
}
