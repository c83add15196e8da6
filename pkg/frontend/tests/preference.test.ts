import { describe, expect, it } from 'vitest';

import { placementFor } from '../src/placement';
import { openCount, sideTexts, submissionForSideClick } from '../src/preference';
import type { PreferenceTask } from '../src/types';

function makeTask(taskId: string): PreferenceTask {
  return {
    task_id: taskId,
    type: 'preference',
    question_id: taskId.replace('pref-', ''),
    question: 'What does the act require?',
    context: 'Providers must publish audit summaries.',
    answer_a: 'DETAILED answer text',
    answer_b: 'CONCISE answer text',
    state: 'open',
    choices: {},
  };
}

function taskIdWithLeft(side: 'A' | 'B'): string {
  for (let i = 0; i < 200; i++) {
    const candidate = `pref-q${i}`;
    if (placementFor(candidate).left === side) {
      return candidate;
    }
  }
  throw new Error(`no task id found with left=${side}`);
}

describe('submissionForSideClick', () => {
  it('maps a left click to B when the seeded placement puts B on the left', () => {
    const taskId = taskIdWithLeft('B');
    const submission = submissionForSideClick(makeTask(taskId), 'left', 'ann-1');
    expect(submission.payload).toMatchObject({ choice: 'B' });
  });

  it('maps a left click to A when the seeded placement puts A on the left', () => {
    const taskId = taskIdWithLeft('A');
    const submission = submissionForSideClick(makeTask(taskId), 'left', 'ann-1');
    expect(submission.payload).toMatchObject({ choice: 'A' });
  });

  it('right side is always the other answer', () => {
    for (const left of ['A', 'B'] as const) {
      const taskId = taskIdWithLeft(left);
      const submission = submissionForSideClick(makeTask(taskId), 'right', 'ann-1');
      expect(submission.payload).toMatchObject({ choice: left === 'A' ? 'B' : 'A' });
    }
  });

  it('discloses the placement in the payload', () => {
    const taskId = taskIdWithLeft('B');
    const submission = submissionForSideClick(makeTask(taskId), 'left', 'ann-1');
    expect(submission.payload).toMatchObject({
      placement: { left: 'B', right: 'A', randomized: true },
    });
  });

  it('fixed placement always maps left to A', () => {
    const taskId = taskIdWithLeft('B'); // would swap if randomized
    const submission = submissionForSideClick(makeTask(taskId), 'left', 'ann-1', false);
    expect(submission.payload).toMatchObject({
      choice: 'A',
      placement: { left: 'A', right: 'B', randomized: false },
    });
  });

  it('carries an idempotency token tied to the choice', () => {
    const taskId = taskIdWithLeft('A');
    const first = submissionForSideClick(makeTask(taskId), 'left', 'ann-1');
    const second = submissionForSideClick(makeTask(taskId), 'left', 'ann-1');
    expect(first.client_token).toBe(second.client_token);
  });
});

describe('sideTexts', () => {
  it('renders each answer on its placed side', () => {
    const taskId = taskIdWithLeft('B');
    const texts = sideTexts(makeTask(taskId));
    expect(texts.left).toBe('CONCISE answer text');
    expect(texts.right).toBe('DETAILED answer text');
  });

  it('same task always renders the same placement', () => {
    const task = makeTask('pref-stable');
    expect(sideTexts(task)).toEqual(sideTexts(task));
  });
});

describe('openCount', () => {
  it('counts only open tasks', () => {
    expect(
      openCount([{ state: 'open' }, { state: 'complete' }, { state: 'open' }]),
    ).toBe(2);
  });
});
