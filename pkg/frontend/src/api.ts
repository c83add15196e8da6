/** Thin client over the workbench HTTP API.
 *
 * The UI holds no label state of its own: everything it renders comes from
 * these GET endpoints, and every decision goes straight back through POST
 * /labels. The fetch function is injectable so tests can run headless.
 */

import type {
  LabelRecord,
  LabelSubmission,
  PreferenceTask,
  RelevanceTask,
} from './types';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status?: number,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`);
    } catch (error) {
      throw new ApiError(`network failure: ${String(error)}`);
    }
    if (!response.ok) {
      throw new ApiError(`GET ${path} failed with ${response.status}`, response.status);
    }
    return (await response.json()) as T;
  }

  async listRelevanceTasks(state?: string): Promise<RelevanceTask[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : '';
    const body = await this.getJson<{ tasks: RelevanceTask[] }>(`/tasks/relevance${query}`);
    return body.tasks;
  }

  async listPreferenceTasks(state?: string): Promise<PreferenceTask[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : '';
    const body = await this.getJson<{ tasks: PreferenceTask[] }>(`/tasks/preference${query}`);
    return body.tasks;
  }

  async postLabel(submission: LabelSubmission): Promise<LabelRecord> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/labels`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(submission),
      });
    } catch (error) {
      throw new ApiError(`network failure: ${String(error)}`);
    }
    if (!response.ok) {
      const detail = await response.text().catch(() => '');
      throw new ApiError(`POST /labels failed with ${response.status}: ${detail}`, response.status);
    }
    return (await response.json()) as LabelRecord;
  }

  async health(): Promise<boolean> {
    try {
      const body = await this.getJson<{ status: string }>('/healthz');
      return body.status === 'ok';
    } catch {
      return false;
    }
  }
}
