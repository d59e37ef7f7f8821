// Browser wiring: render the current pair as two sample cards, submit
// left / equal / right judgments (buttons or arrow keys), and show round
// progress while the loop trains.

import { AnnotationApi } from './api.js';
import { AnnotationSession } from './session.js';
import { sparklineSvg } from './sparkline.js';
import { Choice, PairPayload, SampleCard, Status } from './types.js';

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
};

const runId = new URLSearchParams(window.location.search).get('run') ?? defaultRunId();

function defaultRunId(): string {
  // the service serves a single run; its id is the run directory name,
  // surfaced here via a data attribute when the page is templated, with
  // "run" as the conventional fallback
  return document.body.dataset.runId ?? 'run';
}

const api = new AnnotationApi(runId);
let lastStatus: Status | null = null;

const session = new AnnotationSession(api, {
  onPair: showPair,
  onTraining: showTraining,
  onDone: showDone,
  onError: showError,
});

function card(sample: SampleCard): string {
  return (
    `<div class="card-sketch">${sparklineSvg(sample.features)}</div>` +
    `<dl class="card-meta"><dt>id</dt><dd>${sample.id}</dd>` +
    `<dt>group</dt><dd>${sample.group}</dd></dl>`
  );
}

function showPair(pair: PairPayload, status: Status): void {
  lastStatus = status;
  $('screen-pair').hidden = false;
  $('screen-wait').hidden = true;
  $('screen-done').hidden = true;
  $('card-left').innerHTML = card(pair.left);
  $('card-right').innerHTML = card(pair.right);
  const doneInRound = pair.queued - pair.remaining;
  $('round-label').textContent = `round ${pair.round} of ${status.total_rounds}`;
  $('round-progress').textContent = `${doneInRound} / ${pair.queued} pairs this round`;
  ($('round-bar') as HTMLProgressElement).value = pair.queued ? doneInRound / pair.queued : 0;
  $('ratio-label').textContent =
    `${status.labeled_count} pairs labeled (${(100 * status.labeling_ratio).toFixed(1)}% ratio)`;
  setButtonsEnabled(true);
}

function showTraining(status: Status): void {
  lastStatus = status;
  $('screen-pair').hidden = true;
  $('screen-done').hidden = true;
  $('screen-wait').hidden = false;
  $('wait-title').textContent = status.error ? 'run failed' : 'training…';
  $('wait-detail').textContent = status.error ?? metricsLine(status);
  setButtonsEnabled(false);
  window.setTimeout(() => void session.refresh(), 600);
}

function showDone(status: Status): void {
  lastStatus = status;
  $('screen-pair').hidden = true;
  $('screen-wait').hidden = true;
  $('screen-done').hidden = false;
  $('done-summary').textContent =
    `${status.labeled_count} pairs labeled over ${status.total_rounds} selection rounds ` +
    `(${(100 * status.labeling_ratio).toFixed(1)}% labeling ratio). ${metricsLine(status)}`;
  setButtonsEnabled(false);
}

function showError(message: string): void {
  const banner = $('error-banner');
  banner.hidden = false;
  banner.textContent = `${message} — retrying`;
  window.setTimeout(() => {
    banner.hidden = true;
    void session.refresh();
  }, 1500);
}

function metricsLine(status: Status): string {
  const m = status.last_metrics;
  if (!m) return 'first training round in progress';
  return `last round: validation pair accuracy ${(m.best_val_accuracy as number).toFixed(3)}`;
}

function setButtonsEnabled(enabled: boolean): void {
  for (const choice of ['left', 'equal', 'right'] as const) {
    ($(`btn-${choice}`) as HTMLButtonElement).disabled = !enabled;
  }
}

async function submit(choice: Choice): Promise<void> {
  if (session.busy) return; // double-click guard; server enforces first-write-wins anyway
  setButtonsEnabled(false);
  await session.choose(choice);
}

for (const choice of ['left', 'equal', 'right'] as const) {
  $(`btn-${choice}`).addEventListener('click', () => void submit(choice));
}

const KEY_CHOICES: Record<string, Choice> = {
  ArrowLeft: 'left',
  ArrowDown: 'equal',
  ArrowRight: 'right',
};

document.addEventListener('keydown', (event) => {
  const choice = KEY_CHOICES[event.key];
  if (choice && !$('screen-pair').hidden) {
    event.preventDefault();
    void submit(choice);
  }
});

void session.refresh();
export { session, lastStatus };
