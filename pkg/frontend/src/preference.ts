/** Preference-screen logic: side clicks to choice submissions. */

import { choiceForSide, placementFor } from './placement';
import type { LabelSubmission, PreferenceTask } from './types';
import { clientToken } from './relevance';

/** Map a click on the left or right answer to the underlying A/B choice. */
export function submissionForSideClick(
  task: PreferenceTask,
  side: 'left' | 'right',
  annotatorId: string,
  randomize = true,
): LabelSubmission {
  const placement = placementFor(task.task_id, randomize);
  const choice = choiceForSide(placement, side);
  const payload = { choice, placement };
  return {
    task_id: task.task_id,
    payload,
    annotator_id: annotatorId,
    client_token: clientToken(task.task_id, annotatorId, { choice }),
  };
}

/** Text shown on each side under the task's placement. */
export function sideTexts(
  task: PreferenceTask,
  randomize = true,
): { left: string; right: string } {
  const placement = placementFor(task.task_id, randomize);
  return {
    left: placement.left === 'A' ? task.answer_a : task.answer_b,
    right: placement.right === 'A' ? task.answer_a : task.answer_b,
  };
}

export function openCount(tasks: { state: string }[]): number {
  return tasks.filter((t) => t.state === 'open').length;
}
