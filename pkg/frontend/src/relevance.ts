/** Relevance-screen logic: candidate decisions to label payloads.
 *
 * Pure functions only; the DOM layer calls these and posts the result. A
 * payload carries exactly one entry per decided candidate and never an id
 * that is not a candidate of the task.
 */

import type { RelevanceDecision, RelevancePayload, RelevanceTask } from './types';
import { hashString } from './placement';

export type DecisionMap = Map<string, RelevanceDecision>;

/** Server truth is the starting point after any (re)load. */
export function initialDecisions(task: RelevanceTask): DecisionMap {
  return new Map(Object.entries(task.labels));
}

function assertCandidates(task: RelevanceTask, decisions: DecisionMap): void {
  const candidateIds = new Set(task.candidates.map((c) => c.chunk_id));
  for (const chunkId of decisions.keys()) {
    if (!candidateIds.has(chunkId)) {
      throw new Error(`decision for non-candidate chunk: ${chunkId}`);
    }
  }
}

/** Only explicitly decided candidates; used to persist partial progress. */
export function buildPartialPayload(
  task: RelevanceTask,
  decisions: DecisionMap,
): RelevancePayload {
  assertCandidates(task, decisions);
  if (decisions.size === 0) {
    throw new Error('no decisions to submit');
  }
  const labels: Record<string, RelevanceDecision> = {};
  for (const candidate of task.candidates) {
    const decision = decisions.get(candidate.chunk_id);
    if (decision) {
      labels[candidate.chunk_id] = decision;
    }
  }
  return { labels };
}

/** One entry per candidate: marked ones as decided, the rest irrelevant. */
export function buildCompletePayload(
  task: RelevanceTask,
  decisions: DecisionMap,
): RelevancePayload {
  assertCandidates(task, decisions);
  const labels: Record<string, RelevanceDecision> = {};
  for (const candidate of task.candidates) {
    labels[candidate.chunk_id] = decisions.get(candidate.chunk_id) ?? 'irrelevant';
  }
  return { labels };
}

export interface Page<T> {
  items: T[];
  page: number;
  pageCount: number;
}

/** Deep task lists (depth 50) render in pages. */
export function paginate<T>(items: T[], page: number, pageSize = 10): Page<T> {
  const pageCount = Math.max(1, Math.ceil(items.length / pageSize));
  const clamped = Math.min(Math.max(page, 0), pageCount - 1);
  return {
    items: items.slice(clamped * pageSize, (clamped + 1) * pageSize),
    page: clamped,
    pageCount,
  };
}

/** Idempotency token: resubmitting identical content cannot duplicate state. */
export function clientToken(
  taskId: string,
  annotatorId: string,
  payload: RelevancePayload | { choice: string },
): string {
  return `${taskId}:${annotatorId}:${hashString(JSON.stringify(payload)).toString(16)}`;
}
