// Payload types for the annotation service API. Task payloads are blind:
// candidates carry an id and a title, never the producing system.

export type CampaignKind = "BestWorst" | "Ranking" | "Pairwise";

export interface CampaignSummary {
  id: string;
  kind: CampaignKind;
  n_instances: number;
  min_annotators_per_instance: number;
  max_annotators_per_instance: number;
}

export interface TaskCandidate {
  candidate_id: string;
  title: string;
}

export interface TaskView {
  instance_id: string;
  abstract_id: string;
  abstract_text: string;
  kind: CampaignKind;
  candidates: TaskCandidate[];
  /** Ranking tasks: criteria still missing for this annotator. */
  criteria: string[];
}

export interface NextTaskResponse {
  task: TaskView | null;
  done: number;
  total: number;
}

export type PairChoiceValue = "First" | "Second" | "Equal";

export interface JudgmentBody {
  kind: CampaignKind;
  instance_id: string;
  annotator_id: string;
  best?: string[];
  worst?: string[];
  rank_of?: Record<string, number>;
  criterion?: string;
  choice?: PairChoiceValue;
  idempotency_key?: string;
}

export interface JudgmentReceipt {
  seq: number;
  instance_id: string;
  annotator_id: string;
  replayed: boolean;
}

export interface ProgressResponse {
  annotators: Record<string, { done: number; assigned: number }>;
  done: number;
  assigned: number;
}

export interface SessionResponse {
  token: string;
  expires_at: number;
}
