/** Typed client for the annotation HTTP API.
 *
 * Every request is appended to `log` before it goes out, so tests can assert
 * ordering properties such as "nothing reveal-capable happens before the
 * annotation POST".
 */

export interface Citation {
  doc_id: number;
  sentence_ids: number[];
}

export interface DocumentView {
  doc_id: number;
  title: string | null;
  sentences: string[];
}

export interface StatementView {
  text: string;
  citations: Citation[];
}

export interface PropositionView {
  label: string;
  text: string;
  citations: Citation[];
}

/** One search step: the node arrived at and the key that led there. */
export type TraceStep = [label: string, viaKey: string];

export interface ChainView {
  trace: TraceStep[];
  start_candidates: string[];
}

export interface TaskPayload {
  task_id: string;
  question: string;
  documents: DocumentView[];
  statements: StatementView[];
  propositions: PropositionView[];
  horn_expression: string[];
  chain: ChainView;
}

export interface AnnotationSubmission {
  annotator_id: string;
  necessity: Record<string, boolean>;
  connectivity: boolean;
  annotator_answer: string;
  transform_accuracy: boolean;
  equivalence_confirmed?: boolean | null;
  client_token?: string | null;
}

export interface NextTaskResponse {
  task: TaskPayload | null;
  remaining: number;
}

export interface RevealResponse {
  model_short_answer: string;
  annotator_answer: string;
}

export interface ProgressResponse {
  total: number;
  annotators: Record<string, { completed: number; confirmed: number }>;
}

export interface LoggedRequest {
  method: string;
  url: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** fetch rejects with a TypeError when the network itself fails. */
export function isNetworkError(error: unknown): boolean {
  return error instanceof TypeError;
}

async function readDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    const detail = (body as { detail?: unknown }).detail;
    if (typeof detail === "string") return detail;
    if (detail !== undefined) return JSON.stringify(detail);
    return JSON.stringify(body);
  } catch {
    return response.statusText || "request failed";
  }
}

export class ApiClient {
  readonly log: LoggedRequest[] = [];

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.raw(method, path, body);
    return (await response.json()) as T;
  }

  private async raw(method: string, path: string, body?: unknown): Promise<Response> {
    this.log.push({ method, url: path });
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return response;
  }

  nextTask(annotatorId: string): Promise<NextTaskResponse> {
    return this.request("GET", `/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`);
  }

  getTask(
    taskId: string,
    phase: "blind" | "reveal" = "blind",
    annotatorId?: string,
  ): Promise<{ task: TaskPayload; model_short_answer?: string }> {
    let path = `/api/tasks/${encodeURIComponent(taskId)}?phase=${phase}`;
    if (annotatorId !== undefined) path += `&annotator=${encodeURIComponent(annotatorId)}`;
    return this.request("GET", path);
  }

  submitAnnotation(
    taskId: string,
    submission: AnnotationSubmission,
  ): Promise<{ record_id: number }> {
    return this.request("POST", `/api/tasks/${encodeURIComponent(taskId)}/annotation`, submission);
  }

  reveal(taskId: string, annotatorId: string): Promise<RevealResponse> {
    return this.request("POST", `/api/tasks/${encodeURIComponent(taskId)}/reveal`, {
      annotator_id: annotatorId,
    });
  }

  progress(): Promise<ProgressResponse> {
    return this.request("GET", "/api/progress");
  }

  async exportJsonl(): Promise<string> {
    const response = await this.raw("GET", "/api/export.jsonl");
    return response.text();
  }
}
