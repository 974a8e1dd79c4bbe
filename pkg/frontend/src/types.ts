// Shapes mirrored from the JSON API.

export type Role = "student" | "instructor" | "admin";

export type Stage =
  | "intake_approach"
  | "intake_attempts"
  | "intake_concept"
  | "feedback"
  | "reflection"
  | "closed"
  | "escalated";

export interface Turn {
  id: string;
  author: "student" | "tutor" | "system";
  text: string;
  at: number;
  stage?: string;
}

export interface Citation {
  chunk_id: string;
  doc_title: string;
  score: number;
}

export interface ConversationSnapshot {
  id: string;
  student_id: string;
  stage: Stage;
  created_at: number;
  turns: Turn[];
  citations: Citation[];
  reflection?: ReflectionRecord;
  escalation_id?: string;
  reflection_prompts?: string[];
}

export interface QueryResult {
  conversation_id: string;
  stage: Stage;
  tutor_text: string;
  citations: Citation[];
  remaining_quota: number;
  gate: { outcome: string; reasons: string[]; relevance_score: number };
}

export interface QuotaStatus {
  remaining: number;
  limit: number;
  day: string;
}

export interface ReflectionRecord {
  id: string;
  conversation_id: string;
  learned: string;
  unclear: string;
  next_steps: string;
  score: number;
  substantive: boolean;
}

export interface ReflectionResult {
  reflection_id: string;
  score: number;
  substantive: boolean;
  stage: Stage;
}

export interface EscalationSummary {
  id: string;
  conversation_id: string;
  student_handle: string;
  student_note: string;
  status: "open" | "claimed" | "resolved";
  opened_at: number;
  claimed_by?: string;
  resolved_by?: string;
}

export interface EscalationDetail extends EscalationSummary {
  package: {
    turns: Turn[];
    reflection: ReflectionRecord;
    citations: Citation[];
    gate_flags: { outcome: string; reasons: string[]; at: number }[];
  };
}

export interface DashboardSummary {
  window: { from_ms: number | null; to_ms: number | null };
  queries_by_outcome: Record<string, number>;
  quota_utilization: Record<string, number>;
  substantive_reflection_rate: number;
  reflections_total: number;
  escalations_by_status: Record<string, number>;
  top_tags: { tag: string; count: number }[];
}
