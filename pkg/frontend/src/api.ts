// Typed client for the scmem HTTP API. Views render exclusively from these
// payloads; there is no client-side memory logic.

export interface ControllerDecision {
  question: string;
  raw_model_output: string;
  parsed: boolean;
  fallback_used: boolean;
}

export interface RankedMemory {
  item_index: number;
  recency_score: number;
  relevance_score: number;
  rank_score: number;
}

export interface RenderedMemory {
  item_index: number;
  rendering: string; // "full" | "summary"
  text: string;
  token_count: number;
}

export interface BackendCall {
  purpose: string;
  raw_output: string;
  retries: number;
}

export interface TurnTrace {
  turn: number;
  activation_decision: ControllerDecision | null;
  retrieved: RankedMemory[];
  rendered: RenderedMemory[];
  summary_decisions: ControllerDecision[];
  flash_used: boolean;
  fused_prompt: string;
  response: string;
  turn_summaries: [string, string];
  backend_calls: BackendCall[];
  notes: string[];
}

export interface MemoryView {
  index: number;
  observation: string;
  response: string;
  observation_summary: string;
  response_summary: string;
  created_turn: number;
  last_accessed_turn: number;
  token_count_full: number;
  token_count_summary: number;
  embedding_norm: number;
}

export interface MemoryPage {
  items: MemoryView[];
  page: number;
  page_size: number;
  total: number;
}

export interface MessageReply {
  response: string;
  turn: number;
  trace_id: string;
}

export interface SessionInfo {
  session_id: string;
  created_at: string;
  backend: string;
  [key: string]: unknown;
}

export interface JobStatus {
  job_id: string;
  status: "pending" | "running" | "done" | "failed";
  final_summary?: string;
  tree?: unknown[];
  error?: string;
}

export interface CreateSessionOptions {
  k?: number;
  recency_decay?: number;
  ablation?: string;
  backend?: { type: string; rules?: { pattern: string; response: string }[]; default?: string };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public retryable: boolean,
  ) {
    super(message);
  }
}

export class ScmClient {
  constructor(public baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const reply = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await reply.json().catch(() => ({}));
    if (!reply.ok) {
      throw new ApiError(
        reply.status,
        payload.code ?? "unknown",
        payload.message ?? `request failed with ${reply.status}`,
        payload.retryable ?? false,
      );
    }
    return payload as T;
  }

  health(): Promise<{ ok: boolean }> {
    return this.request("GET", "/healthz");
  }

  createSession(options: CreateSessionOptions = {}): Promise<SessionInfo> {
    return this.request("POST", "/sessions", options);
  }

  postMessage(sessionId: string, observation: string): Promise<MessageReply> {
    return this.request("POST", `/sessions/${sessionId}/messages`, { observation });
  }

  listMemories(sessionId: string, page = 1, pageSize = 20): Promise<MemoryPage> {
    return this.request(
      "GET",
      `/sessions/${sessionId}/memories?page=${page}&page_size=${pageSize}`,
    );
  }

  getTrace(sessionId: string, turn: number): Promise<TurnTrace> {
    return this.request("GET", `/sessions/${sessionId}/traces/${turn}`);
  }

  summarize(text: string, options: Record<string, number> = {}): Promise<{ job_id: string }> {
    return this.request("POST", "/summarize", { text, ...options });
  }

  getJob(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/jobs/${jobId}`);
  }
}
