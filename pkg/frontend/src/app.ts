/** DOM wiring for the annotation screens.
 *
 * All state shown here is fetched from the workbench API; local memory only
 * holds in-flight toggles that have not been submitted yet. Submitting posts
 * through the API and then refetches, so a reload at any point reconstructs
 * the same screen.
 */

import { ApiClient, ApiError } from './api';
import { openCount, sideTexts, submissionForSideClick } from './preference';
import {
  buildCompletePayload,
  buildPartialPayload,
  clientToken,
  initialDecisions,
  paginate,
  type DecisionMap,
} from './relevance';
import { TaskStore } from './store';
import type { PreferenceTask, RelevanceTask } from './types';

const PAGE_SIZE = 10;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  private readonly api: ApiClient;
  private readonly store: TaskStore;
  private readonly root: HTMLElement;
  private annotatorId: string;
  private randomizePlacement: boolean;
  private decisions: DecisionMap = new Map();
  private page = 0;
  private submitting = false;

  constructor(root: HTMLElement) {
    this.root = root;
    const params = new URLSearchParams(window.location.search);
    const endpoint = params.get('api') ?? '';
    this.randomizePlacement = params.get('fixed_placement') !== '1';
    this.annotatorId = window.localStorage.getItem('annotator_id') ?? '';
    this.api = new ApiClient(endpoint);
    this.store = new TaskStore(this.api);
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  private async refresh(): Promise<void> {
    try {
      await this.store.refresh();
      this.renderTaskList();
    } catch (error) {
      this.renderError(`Cannot reach the workbench API: ${String(error)}`, () => this.refresh());
    }
  }

  private renderError(message: string, retry: () => void): void {
    this.root.replaceChildren();
    const box = el('div', 'error-box');
    box.append(el('p', undefined, message));
    const button = el('button', 'retry', 'Retry');
    button.addEventListener('click', retry);
    box.append(button);
    this.root.append(box);
  }

  private renderHeader(): HTMLElement {
    const header = el('header');
    header.append(el('h1', undefined, 'Annotation workbench'));
    const field = el('label', 'annotator-field', 'Annotator id: ');
    const input = el('input');
    input.value = this.annotatorId;
    input.placeholder = 'your-name';
    input.addEventListener('change', () => {
      this.annotatorId = input.value.trim();
      window.localStorage.setItem('annotator_id', this.annotatorId);
    });
    field.append(input);
    header.append(field);
    return header;
  }

  private renderTaskList(): void {
    this.root.replaceChildren(this.renderHeader());

    const counts = el('p', 'queue-counts');
    counts.textContent =
      `Open: ${openCount(this.store.relevance)} relevance, ` +
      `${openCount(this.store.preference)} preference`;
    this.root.append(counts);

    const table = el('table', 'task-table');
    const head = el('tr');
    for (const column of ['task', 'type', 'state', '']) {
      head.append(el('th', undefined, column));
    }
    table.append(head);
    for (const summary of this.store.summaries()) {
      const row = el('tr', summary.state === 'open' ? 'open-task' : undefined);
      row.append(el('td', undefined, summary.task_id));
      row.append(el('td', undefined, summary.type));
      row.append(el('td', undefined, summary.state));
      const cell = el('td');
      const open = el('button', undefined, 'Open');
      open.addEventListener('click', () => {
        if (summary.type === 'relevance') {
          this.openRelevance(summary.task_id);
        } else {
          this.openPreference(summary.task_id);
        }
      });
      cell.append(open);
      row.append(cell);
      table.append(row);
    }
    this.root.append(table);

    const reload = el('button', 'refresh', 'Refresh');
    reload.addEventListener('click', () => this.refresh());
    this.root.append(reload);
  }

  // -- relevance ------------------------------------------------------------

  private openRelevance(taskId: string): void {
    const task = this.store.relevanceTask(taskId);
    if (!task) return;
    this.decisions = initialDecisions(task);
    this.page = 0;
    this.renderRelevance(task);
  }

  private renderRelevance(task: RelevanceTask, error?: string): void {
    this.root.replaceChildren(this.renderHeader());
    this.root.append(el('h2', undefined, `Relevance: ${task.query}`));
    this.root.append(
      el('p', 'task-meta', `task ${task.task_id}, depth ${task.depth}, state ${task.state}`),
    );
    if (error) {
      const notice = el('p', 'error-box', error);
      this.root.append(notice);
    }

    const { items, page, pageCount } = paginate(task.candidates, this.page, PAGE_SIZE);
    for (const candidate of items) {
      const card = el('div', 'candidate');
      card.append(el('h3', undefined, candidate.chunk_id));
      const pre = el('pre', 'rendered');
      pre.textContent = candidate.rendered_text;
      card.append(pre);
      const controls = el('div', 'controls');
      for (const value of ['relevant', 'irrelevant'] as const) {
        const button = el(
          'button',
          this.decisions.get(candidate.chunk_id) === value ? `chosen ${value}` : value,
          value,
        );
        button.addEventListener('click', () => {
          this.decisions.set(candidate.chunk_id, value);
          this.renderRelevance(task);
        });
        controls.append(button);
      }
      card.append(controls);
      this.root.append(card);
    }

    if (pageCount > 1) {
      const pager = el('div', 'pager');
      const back = el('button', undefined, 'Prev');
      back.disabled = page === 0;
      back.addEventListener('click', () => {
        this.page = page - 1;
        this.renderRelevance(task);
      });
      const label = el('span', undefined, ` page ${page + 1} / ${pageCount} `);
      const next = el('button', undefined, 'Next');
      next.disabled = page === pageCount - 1;
      next.addEventListener('click', () => {
        this.page = page + 1;
        this.renderRelevance(task);
      });
      pager.append(back, label, next);
      this.root.append(pager);
    }

    const actions = el('div', 'actions');
    const save = el('button', undefined, 'Save progress');
    save.addEventListener('click', () => this.submitRelevance(task, 'partial'));
    const submit = el('button', 'primary', 'Submit all (undecided = irrelevant)');
    submit.addEventListener('click', () => this.submitRelevance(task, 'complete'));
    const back = el('button', undefined, 'Back');
    back.addEventListener('click', () => this.refresh());
    actions.append(save, submit, back);
    this.root.append(actions);
  }

  private async submitRelevance(task: RelevanceTask, mode: 'partial' | 'complete'): Promise<void> {
    if (this.submitting || !this.annotatorId) {
      if (!this.annotatorId) this.renderRelevance(task, 'Set an annotator id first.');
      return;
    }
    let payload;
    try {
      payload =
        mode === 'partial'
          ? buildPartialPayload(task, this.decisions)
          : buildCompletePayload(task, this.decisions);
    } catch (error) {
      this.renderRelevance(task, String(error));
      return;
    }
    this.submitting = true;
    try {
      await this.api.postLabel({
        task_id: task.task_id,
        payload,
        annotator_id: this.annotatorId,
        client_token: clientToken(task.task_id, this.annotatorId, payload),
      });
      await this.refresh();
    } catch (error) {
      // decisions stay in memory; the server state is untouched, so retry is safe
      const message = error instanceof ApiError ? error.message : String(error);
      this.renderRelevance(task, `Submit failed: ${message}. Your toggles are kept; retry.`);
    } finally {
      this.submitting = false;
    }
  }

  // -- preference -----------------------------------------------------------

  private openPreference(taskId: string): void {
    const task = this.store.preferenceTask(taskId);
    if (!task) return;
    this.renderPreference(task);
  }

  private renderPreference(task: PreferenceTask, error?: string): void {
    this.root.replaceChildren(this.renderHeader());
    this.root.append(el('h2', undefined, task.question));
    this.root.append(el('p', 'task-meta', `task ${task.task_id}, state ${task.state}`));
    if (error) {
      this.root.append(el('p', 'error-box', error));
    }

    const context = el('pre', 'context');
    context.textContent = task.context;
    this.root.append(el('h3', undefined, 'Document context'));
    this.root.append(context);

    const texts = sideTexts(task, this.randomizePlacement);
    const pair = el('div', 'answer-pair');
    for (const side of ['left', 'right'] as const) {
      const column = el('div', 'answer');
      column.append(el('h3', undefined, side === 'left' ? 'Answer 1' : 'Answer 2'));
      const body = el('pre');
      body.textContent = texts[side];
      column.append(body);
      const pick = el('button', 'primary', 'Prefer this answer');
      pick.disabled = this.submitting || task.state !== 'open';
      pick.addEventListener('click', () => this.submitPreference(task, side));
      column.append(pick);
      pair.append(column);
    }
    this.root.append(pair);

    const back = el('button', undefined, 'Back');
    back.addEventListener('click', () => this.refresh());
    this.root.append(back);
  }

  private async submitPreference(task: PreferenceTask, side: 'left' | 'right'): Promise<void> {
    if (this.submitting) return;
    if (!this.annotatorId) {
      this.renderPreference(task, 'Set an annotator id first.');
      return;
    }
    this.submitting = true;
    this.renderPreference(task); // re-render with buttons disabled
    try {
      await this.api.postLabel(
        submissionForSideClick(task, side, this.annotatorId, this.randomizePlacement),
      );
      await this.refresh();
    } catch (error) {
      const message = error instanceof ApiError ? error.message : String(error);
      this.renderPreference(task, `Submit failed: ${message}. Retry when ready.`);
    } finally {
      this.submitting = false;
    }
  }
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  const app = new App(document.getElementById('app') as HTMLElement);
  void app.start();
}
