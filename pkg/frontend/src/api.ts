// Thin typed client over the documented JSON API. The bearer token lives in
// memory (and session storage via session.ts); it is never put in a URL.

import type {
  ConversationSnapshot,
  DashboardSummary,
  EscalationDetail,
  EscalationSummary,
  QueryResult,
  QuotaStatus,
  ReflectionResult,
  Role,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public reasons: string[] = [],
    public remainingQuota?: number,
  ) {
    super(`${status} ${code}`);
  }
}

export interface QueryBody {
  approach?: string;
  attempts?: string;
  concept?: string;
  code_excerpt?: string;
}

export class ApiClient {
  token: string | null = null;

  constructor(private baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "error";
      let reasons: string[] = [];
      let remaining: number | undefined;
      try {
        const payload = await response.json();
        code = payload.code ?? code;
        reasons = payload.reasons ?? [];
        remaining = payload.remaining_quota;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(response.status, code, reasons, remaining);
    }
    return (await response.json()) as T;
  }

  register(handle: string, password: string, role: Role = "student") {
    return this.request<{ id: string; handle: string; role: Role }>(
      "POST",
      "/api/auth/register",
      { handle, password, role },
    );
  }

  async login(handle: string, password: string): Promise<void> {
    const result = await this.request<{ token: string }>("POST", "/api/auth/login", {
      handle,
      password,
    });
    this.token = result.token;
  }

  quota() {
    return this.request<QuotaStatus>("GET", "/api/quota");
  }

  startConversation() {
    return this.request<ConversationSnapshot>("POST", "/api/conversations");
  }

  getConversation(id: string) {
    return this.request<ConversationSnapshot>("GET", `/api/conversations/${id}`);
  }

  submitIntake(id: string, text: string) {
    return this.request<{ conversation_id: string; stage: string }>(
      "POST",
      `/api/conversations/${id}/intake`,
      { text },
    );
  }

  query(id: string, body: QueryBody = {}) {
    return this.request<QueryResult>("POST", `/api/conversations/${id}/query`, body);
  }

  reflectionPrompts(id: string) {
    return this.request<{ prompts: string[]; stage: string }>(
      "POST",
      `/api/conversations/${id}/reflection-prompts`,
    );
  }

  submitReflection(id: string, learned: string, unclear: string, nextSteps: string) {
    return this.request<ReflectionResult>("POST", `/api/conversations/${id}/reflection`, {
      learned,
      unclear,
      next_steps: nextSteps,
    });
  }

  escalate(id: string, note: string) {
    return this.request<EscalationSummary>("POST", `/api/conversations/${id}/escalate`, {
      note,
    });
  }

  escalations(status?: string) {
    const suffix = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.request<{ escalations: EscalationSummary[] }>(
      "GET",
      `/api/instructor/escalations${suffix}`,
    );
  }

  escalationDetail(id: string) {
    return this.request<EscalationDetail>("GET", `/api/instructor/escalations/${id}`);
  }

  claim(id: string) {
    return this.request<EscalationSummary>(
      "POST",
      `/api/instructor/escalations/${id}/claim`,
    );
  }

  resolve(id: string) {
    return this.request<EscalationSummary>(
      "POST",
      `/api/instructor/escalations/${id}/resolve`,
    );
  }

  dashboard() {
    return this.request<DashboardSummary>("GET", "/api/instructor/dashboard");
  }

  applyTag(conversationId: string, tag: string) {
    return this.request<{ id: string; tag: string }>(
      "POST",
      `/api/conversations/${conversationId}/tags`,
      { tag },
    );
  }

  ingestDocuments(documents: { title: string; kind: string; body: string }[]) {
    return this.request<{ documents: unknown[] }>(
      "POST",
      "/api/admin/corpus/documents",
      { documents },
    );
  }
}
