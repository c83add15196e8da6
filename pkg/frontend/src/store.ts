/** Read-side task state, rebuilt entirely from GET endpoints.
 *
 * The store never invents tasks or labels: a refresh throws away whatever
 * was held locally and replaces it with the server's view, which is what
 * makes a mid-task reload lossless (submitted labels come back on the task,
 * unsubmitted toggles were never truth in the first place).
 */

import type { ApiClient } from './api';
import type { PreferenceTask, RelevanceTask, TaskSummary } from './types';
import { initialDecisions, type DecisionMap } from './relevance';

export class TaskStore {
  relevance: RelevanceTask[] = [];
  preference: PreferenceTask[] = [];

  constructor(private readonly api: ApiClient) {}

  async refresh(): Promise<void> {
    const [relevance, preference] = await Promise.all([
      this.api.listRelevanceTasks(),
      this.api.listPreferenceTasks(),
    ]);
    this.relevance = relevance;
    this.preference = preference;
  }

  summaries(): TaskSummary[] {
    const rows: TaskSummary[] = [];
    for (const task of this.relevance) {
      rows.push({ task_id: task.task_id, type: 'relevance', state: task.state });
    }
    for (const task of this.preference) {
      rows.push({ task_id: task.task_id, type: 'preference', state: task.state });
    }
    return rows.sort((a, b) => a.task_id.localeCompare(b.task_id));
  }

  relevanceTask(taskId: string): RelevanceTask | undefined {
    return this.relevance.find((t) => t.task_id === taskId);
  }

  preferenceTask(taskId: string): PreferenceTask | undefined {
    return this.preference.find((t) => t.task_id === taskId);
  }

  /** Screen state for a relevance task, straight from server labels. */
  decisionsFor(taskId: string): DecisionMap {
    const task = this.relevanceTask(taskId);
    if (!task) {
      throw new Error(`unknown relevance task: ${taskId}`);
    }
    return initialDecisions(task);
  }
}
