import { describe, expect, it } from 'vitest';

import { choiceForSide, hashString, placementFor } from '../src/placement';

describe('placementFor', () => {
  it('is deterministic per task id', () => {
    for (const taskId of ['pref-q1', 'pref-q2', 'pref-anything']) {
      expect(placementFor(taskId)).toEqual(placementFor(taskId));
    }
  });

  it('produces both orientations across task ids', () => {
    const orientations = new Set<string>();
    for (let i = 0; i < 50; i++) {
      orientations.add(placementFor(`pref-task-${i}`).left);
    }
    expect(orientations).toEqual(new Set(['A', 'B']));
  });

  it('left and right always cover both answers', () => {
    for (let i = 0; i < 20; i++) {
      const placement = placementFor(`pref-${i}`);
      expect(new Set([placement.left, placement.right])).toEqual(new Set(['A', 'B']));
    }
  });

  it('disables randomization on request', () => {
    const placement = placementFor('pref-whatever', false);
    expect(placement).toEqual({ left: 'A', right: 'B', randomized: false });
  });

  it('maps sides to the placed answers', () => {
    const placement = placementFor('pref-x');
    expect(choiceForSide(placement, 'left')).toBe(placement.left);
    expect(choiceForSide(placement, 'right')).toBe(placement.right);
  });
});

describe('hashString', () => {
  it('is stable and 32-bit', () => {
    expect(hashString('abc')).toBe(hashString('abc'));
    expect(hashString('abc')).not.toBe(hashString('abd'));
    expect(hashString('abc')).toBeGreaterThanOrEqual(0);
    expect(hashString('abc')).toBeLessThan(2 ** 32);
  });
});
