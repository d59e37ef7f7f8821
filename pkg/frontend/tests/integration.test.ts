// End-to-end round trip against the real service: a scripted session
// (the same driver the browser uses) labels every served pair with the
// simulated oracle's answer, and the resulting run artifacts must match a
// pure simulated run byte for byte, apart from the source column.

import { spawn, spawnSync, ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { AnnotationApi } from '../src/api.js';
import { AnnotationSession } from '../src/session.js';
import { PairPayload, Choice } from '../src/types.js';

const REPO_ROOT = fileURLToPath(new URL('../..', import.meta.url));
const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

const CONFIG = {
  synth: {
    n: 240,
    proportions: [0.65, 0.19, 0.14, 0.02],
    feature_dim: 8,
    noise_scale: 0.3,
    seed: 23,
  },
  split: { fractions: [0.6, 0.2, 0.2], seed: 4 },
  network: { hidden: [8], dropout_rate: 0.2, weight_decay: 1e-4, init_seed: 2 },
  loop: { r_percent: 20, s_percent: 5, rounds: 2, draws: 6, sampler: 'ubs', seed: 19 },
  train: { batch_size: 16, epochs_per_round: 2, learning_rate: 0.01, seed: 6 },
  port: PORT,
};

let workDir: string;
let server: ChildProcess | undefined;

function python(args: string[], extra: Record<string, unknown> = {}) {
  return spawnSync('python3', ['-m', 'activerank.cli', ...args], {
    cwd: REPO_ROOT,
    encoding: 'utf-8',
    ...extra,
  });
}

function writeConfig(outDir: string): string {
  const path = join(workDir, `config-${outDir.split('/').pop()}.json`);
  writeFileSync(path, JSON.stringify({ ...CONFIG, out_dir: outDir }));
  return path;
}

function groundTruth(runDir: string): Map<string, number> {
  const labels = new Map<string, number>();
  for (const line of readFileSync(join(runDir, 'dataset.jsonl'), 'utf-8').split('\n')) {
    if (!line.trim()) continue;
    const rec = JSON.parse(line) as { id: string; label: number };
    labels.set(rec.id, rec.label);
  }
  return labels;
}

async function waitForServer(api: AnnotationApi, ms: number): Promise<void> {
  const deadline = Date.now() + ms;
  while (Date.now() < deadline) {
    try {
      await api.status();
      return;
    } catch {
      await new Promise((r) => setTimeout(r, 200));
    }
  }
  throw new Error('service did not come up');
}

beforeAll(() => {
  workDir = mkdtempSync(join(tmpdir(), 'annotator-e2e-'));
});

afterAll(() => {
  server?.kill('SIGTERM');
});

describe('ui round trip', () => {
  it('reproduces the simulated run, with equal judged as 0.5', { timeout: 180_000 }, async () => {
    const simDir = join(workDir, 'sim');
    const run = python(['run', '--config', writeConfig(simDir)]);
    expect(run.status, run.stderr).toBe(0);

    const humanDir = join(workDir, 'human');
    server = spawn(
      'python3',
      ['-m', 'activerank.cli', 'serve', '--config', writeConfig(humanDir)],
      { cwd: REPO_ROOT, stdio: 'ignore' },
    );

    const api = new AnnotationApi('human', BASE);
    await waitForServer(api, 60_000);

    const truth = groundTruth(simDir); // same synth seed, same dataset
    let sawEqual = 0;
    const decide = (pair: PairPayload): Choice => {
      const left = truth.get(pair.left.id)!;
      const right = truth.get(pair.right.id)!;
      if (left > right) return 'left';
      if (left < right) return 'right';
      sawEqual += 1;
      return 'equal';
    };

    const session = new AnnotationSession(api, {}, 100);
    const status = await session.autoRun(decide, 150_000);
    expect(status.phase).toBe('done');
    expect(status.error).toBeNull();
    expect(sawEqual).toBeGreaterThan(0);

    // pairs.csv matches modulo the source column
    const strip = (dir: string) =>
      readFileSync(join(dir, 'pairs.csv'), 'utf-8')
        .trim()
        .split('\n')
        .slice(1)
        .map((line) => line.split(',').slice(0, 4).join(','));
    expect(strip(humanDir)).toEqual(strip(simDir));
    const humanSources = readFileSync(join(humanDir, 'pairs.csv'), 'utf-8')
      .trim()
      .split('\n')
      .slice(1)
      .map((line) => line.split(',')[4]);
    expect(new Set(humanSources)).toEqual(new Set(['human']));

    // the equal judgments were logged as 0.5
    const loggedLabels = readFileSync(join(humanDir, 'pairs.csv'), 'utf-8');
    expect(loggedLabels).toContain(',0.5,');

    // selection and metrics artifacts are byte-identical
    for (const name of ['selections.csv', 'rounds.jsonl']) {
      expect(readFileSync(join(humanDir, name), 'utf-8')).toEqual(
        readFileSync(join(simDir, name), 'utf-8'),
      );
    }
  });
});
