import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api';

describe('ApiClient', () => {
  it('posts one request per label submission with the documented body', async () => {
    const posts: { url: string; body: unknown }[] = [];
    const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
      if (init?.method === 'POST') {
        posts.push({ url, body: JSON.parse(String(init.body)) });
        return new Response(
          JSON.stringify({ seq: 1, task_id: 't', payload: {}, annotator_id: 'a', timestamp: 'now' }),
          { status: 200 },
        );
      }
      return new Response('{}', { status: 404 });
    };
    const api = new ApiClient('http://api', fetchFn);
    await api.postLabel({
      task_id: 'rel20-q1',
      payload: { labels: { c1: 'relevant' } },
      annotator_id: 'ann-1',
      client_token: 'tok',
    });
    expect(posts).toHaveLength(1);
    expect(posts[0].url).toBe('http://api/labels');
    expect(posts[0].body).toEqual({
      task_id: 'rel20-q1',
      payload: { labels: { c1: 'relevant' } },
      annotator_id: 'ann-1',
      client_token: 'tok',
    });
  });

  it('surfaces HTTP errors with status for the retry affordance', async () => {
    const fetchFn = async (): Promise<Response> => new Response('bad payload', { status: 400 });
    const api = new ApiClient('http://api', fetchFn);
    await expect(
      api.postLabel({ task_id: 't', payload: { choice: 'A' }, annotator_id: 'a' }),
    ).rejects.toMatchObject({ name: 'ApiError', status: 400 });
  });

  it('wraps network failures distinctly', async () => {
    const fetchFn = async (): Promise<Response> => {
      throw new Error('connection refused');
    };
    const api = new ApiClient('http://api', fetchFn);
    await expect(api.listRelevanceTasks()).rejects.toBeInstanceOf(ApiError);
  });

  it('passes the state filter through as a query parameter', async () => {
    const urls: string[] = [];
    const fetchFn = async (url: string): Promise<Response> => {
      urls.push(url);
      return new Response(JSON.stringify({ tasks: [] }), { status: 200 });
    };
    const api = new ApiClient('http://api', fetchFn);
    await api.listRelevanceTasks('open');
    await api.listPreferenceTasks();
    expect(urls).toEqual(['http://api/tasks/relevance?state=open', 'http://api/tasks/preference']);
  });

  it('health check never throws', async () => {
    const api = new ApiClient('http://api', async () => {
      throw new Error('down');
    });
    expect(await api.health()).toBe(false);
  });
});
