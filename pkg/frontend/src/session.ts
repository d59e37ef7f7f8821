// DOM-free session driver: fetch the current pair, map a choice to its
// relative label, submit, advance. One request in flight at a time; while
// the loop trains, polls status until the next batch arrives.

import { AnnotationApi, ApiError } from './api.js';
import { CHOICE_LABELS, Choice, PairPayload, Status } from './types.js';

export interface SessionHooks {
  onPair?(pair: PairPayload, status: Status): void;
  onTraining?(status: Status): void;
  onDone?(status: Status): void;
  onError?(message: string): void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class AnnotationSession {
  private current: PairPayload | null = null;
  private inFlight = false;

  constructor(
    private api: AnnotationApi,
    private hooks: SessionHooks = {},
    private pollMs = 400,
  ) {}

  get currentPair(): PairPayload | null {
    return this.current;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  /** Fetch the pair to display (idempotent server-side until labeled). */
  async refresh(): Promise<'pair' | 'training' | 'done' | 'empty'> {
    const status = await this.api.status();
    if (status.phase === 'done') {
      this.current = null;
      this.hooks.onDone?.(status);
      return 'done';
    }
    const next = await this.api.nextPair();
    if (next.kind === 'pair') {
      this.current = next.pair;
      this.hooks.onPair?.(next.pair, status);
      return 'pair';
    }
    this.current = null;
    this.hooks.onTraining?.(status);
    return next.kind === 'training' ? 'training' : 'empty';
  }

  /**
   * Submit the judgment for the displayed pair, then fetch the next one.
   * Returns false when ignored (no pair shown or a submission in flight).
   */
  async choose(choice: Choice): Promise<boolean> {
    if (this.inFlight || this.current === null) return false;
    const pair = this.current;
    this.inFlight = true;
    try {
      await this.api.postLabel(pair.pair_id, CHOICE_LABELS[choice]);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // already labeled (first write wins) or training started; fall through
      } else {
        this.hooks.onError?.(err instanceof Error ? err.message : String(err));
        this.inFlight = false;
        return false;
      }
    }
    this.current = null;
    this.inFlight = false;
    await this.refresh();
    return true;
  }

  /**
   * Scripted session: keep labeling with `decide` until the loop is done.
   * Used by tests to replay an oracle's answers through the real API.
   */
  async autoRun(decide: (pair: PairPayload) => Choice, maxMs = 300_000): Promise<Status> {
    const deadline = Date.now() + maxMs;
    while (Date.now() < deadline) {
      const state = await this.refresh();
      if (state === 'done') return this.api.status();
      if (state === 'pair' && this.current) {
        await this.api.postLabel(this.current.pair_id, CHOICE_LABELS[decide(this.current)]);
        this.current = null;
        continue;
      }
      await sleep(this.pollMs);
    }
    throw new Error('annotation session did not finish before the deadline');
  }
}
