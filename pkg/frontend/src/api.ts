// Thin typed client over the service's HTTP+JSON endpoints.

import { NextPair, PairPayload, Status } from './types.js';

export type FetchLike = typeof fetch;

export class ApiError extends Error {
  constructor(
    public status: number,
    detail: string,
  ) {
    super(detail);
  }
}

export class AnnotationApi {
  constructor(
    private runId: string,
    private baseUrl: string = '',
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private url(tail: string): string {
    return `${this.baseUrl}/runs/${this.runId}/${tail}`;
  }

  async nextPair(): Promise<NextPair> {
    const resp = await this.fetchFn(this.url('next-pair'));
    if (resp.status === 204) return { kind: 'empty' };
    if (resp.status === 409) return { kind: 'training' };
    if (!resp.ok) throw new ApiError(resp.status, await detail(resp));
    return { kind: 'pair', pair: (await resp.json()) as PairPayload };
  }

  async postLabel(pairId: string, label: number): Promise<{ remaining: number }> {
    const resp = await this.fetchFn(this.url('labels'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ pair_id: pairId, label }),
    });
    if (!resp.ok) throw new ApiError(resp.status, await detail(resp));
    return (await resp.json()) as { remaining: number };
  }

  async status(): Promise<Status> {
    const resp = await this.fetchFn(this.url('status'));
    if (!resp.ok) throw new ApiError(resp.status, await detail(resp));
    return (await resp.json()) as Status;
  }
}

async function detail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? `HTTP ${resp.status}`;
  } catch {
    return `HTTP ${resp.status}`;
  }
}
