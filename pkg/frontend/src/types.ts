/** JSON shapes served by the workbench API. */

export type RelevanceDecision = 'relevant' | 'irrelevant';

export interface CandidateView {
  chunk_id: string;
  rendered_text: string;
}

export interface RelevanceTask {
  task_id: string;
  type: 'relevance';
  query_id: string;
  query: string;
  depth: number;
  state: 'open' | 'in_progress' | 'complete';
  labels: Record<string, RelevanceDecision>;
  candidates: CandidateView[];
}

export interface PreferenceTask {
  task_id: string;
  type: 'preference';
  question_id: string;
  question: string;
  context: string;
  answer_a: string;
  answer_b: string;
  state: 'open' | 'complete' | 'failed';
  choices: Record<string, 'A' | 'B'>;
}

export interface TaskSummary {
  task_id: string;
  type: 'relevance' | 'preference';
  state: string;
}

export interface RelevancePayload {
  labels: Record<string, RelevanceDecision>;
}

export interface PreferencePayload {
  choice: 'A' | 'B';
  placement?: {
    left: 'A' | 'B';
    right: 'A' | 'B';
    randomized: boolean;
  };
}

export interface LabelSubmission {
  task_id: string;
  payload: RelevancePayload | PreferencePayload;
  annotator_id: string;
  client_token?: string;
}

export interface LabelRecord {
  seq: number;
  task_id: string;
  payload: unknown;
  annotator_id: string;
  timestamp: string;
}
