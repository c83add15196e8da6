import { describe, expect, it } from 'vitest';

import {
  buildCompletePayload,
  buildPartialPayload,
  clientToken,
  initialDecisions,
  paginate,
  type DecisionMap,
} from '../src/relevance';
import type { RelevanceTask } from '../src/types';

function makeTask(candidateCount: number, labels: Record<string, 'relevant' | 'irrelevant'> = {}): RelevanceTask {
  return {
    task_id: 'rel20-q1',
    type: 'relevance',
    query_id: 'q1',
    query: 'transparency obligations',
    depth: 20,
    state: Object.keys(labels).length ? 'in_progress' : 'open',
    labels,
    candidates: Array.from({ length: candidateCount }, (_, i) => ({
      chunk_id: `segment_0_${i}`,
      rendered_text: `document: Doc\n\nchunk body ${i}`,
    })),
  };
}

describe('buildCompletePayload', () => {
  it('marks 3 relevant on a 20-candidate task as 3 relevant + 17 irrelevant', () => {
    const task = makeTask(20);
    const decisions: DecisionMap = new Map([
      ['segment_0_2', 'relevant'],
      ['segment_0_7', 'relevant'],
      ['segment_0_11', 'relevant'],
    ]);
    const payload = buildCompletePayload(task, decisions);
    const values = Object.values(payload.labels);
    expect(values.filter((v) => v === 'relevant')).toHaveLength(3);
    expect(values.filter((v) => v === 'irrelevant')).toHaveLength(17);
  });

  it('posts exactly one label per candidate', () => {
    const task = makeTask(20);
    const payload = buildCompletePayload(task, new Map([['segment_0_0', 'relevant']]));
    expect(Object.keys(payload.labels).sort()).toEqual(
      task.candidates.map((c) => c.chunk_id).sort(),
    );
  });

  it('rejects decisions for chunks outside the candidate set', () => {
    const task = makeTask(3);
    expect(() =>
      buildCompletePayload(task, new Map([['fabricated', 'relevant']])),
    ).toThrow(/non-candidate/);
  });
});

describe('buildPartialPayload', () => {
  it('contains only explicitly decided candidates', () => {
    const task = makeTask(20);
    const decisions: DecisionMap = new Map([
      ['segment_0_1', 'relevant'],
      ['segment_0_5', 'irrelevant'],
    ]);
    const payload = buildPartialPayload(task, decisions);
    expect(Object.keys(payload.labels)).toHaveLength(2);
    expect(payload.labels['segment_0_1']).toBe('relevant');
    expect(payload.labels['segment_0_5']).toBe('irrelevant');
  });

  it('refuses an empty submission', () => {
    expect(() => buildPartialPayload(makeTask(5), new Map())).toThrow(/no decisions/);
  });
});

describe('initialDecisions', () => {
  it('starts from the labels already recorded on the server', () => {
    const task = makeTask(5, { segment_0_0: 'relevant', segment_0_3: 'irrelevant' });
    const decisions = initialDecisions(task);
    expect(decisions.get('segment_0_0')).toBe('relevant');
    expect(decisions.get('segment_0_3')).toBe('irrelevant');
    expect(decisions.size).toBe(2);
  });
});

describe('paginate', () => {
  it('splits a depth-50 task into pages', () => {
    const task = makeTask(50);
    const first = paginate(task.candidates, 0, 10);
    expect(first.pageCount).toBe(5);
    expect(first.items).toHaveLength(10);
    expect(first.items[0].chunk_id).toBe('segment_0_0');
    const last = paginate(task.candidates, 4, 10);
    expect(last.items[9].chunk_id).toBe('segment_0_49');
  });

  it('clamps out-of-range pages', () => {
    const task = makeTask(7);
    expect(paginate(task.candidates, 99, 10).page).toBe(0);
    expect(paginate([], 0, 10).pageCount).toBe(1);
  });
});

describe('clientToken', () => {
  it('is stable for identical submissions and differs otherwise', () => {
    const payload = { labels: { a: 'relevant' as const } };
    expect(clientToken('t1', 'ann', payload)).toBe(clientToken('t1', 'ann', payload));
    expect(clientToken('t1', 'ann', payload)).not.toBe(
      clientToken('t1', 'ann', { labels: { a: 'irrelevant' as const } }),
    );
  });
});
