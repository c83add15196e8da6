/** Deterministic left/right answer placement for preference tasks.
 *
 * Placement is seeded by the task id alone, so the same task always renders
 * the same way for every annotator and across reloads, and the orientation
 * is disclosed in the submission payload. Randomization can be switched off
 * to always show answer A on the left.
 */

export interface Placement {
  left: 'A' | 'B';
  right: 'A' | 'B';
  randomized: boolean;
}

/** FNV-1a 32-bit hash; stable across platforms for the same string. */
export function hashString(value: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < value.length; i++) {
    hash ^= value.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

export function placementFor(taskId: string, randomize = true): Placement {
  if (!randomize) {
    return { left: 'A', right: 'B', randomized: false };
  }
  const swapped = (hashString(taskId) & 1) === 1;
  return swapped
    ? { left: 'B', right: 'A', randomized: true }
    : { left: 'A', right: 'B', randomized: true };
}

export function choiceForSide(placement: Placement, side: 'left' | 'right'): 'A' | 'B' {
  return side === 'left' ? placement.left : placement.right;
}
