// Wire types for the annotation service API.

export interface SampleCard {
  id: string;
  features: number[];
  group: string;
}

export interface PairPayload {
  pair_id: string;
  round: number;
  left: SampleCard;
  right: SampleCard;
  remaining: number;
  queued: number;
}

export type Phase = 'collecting' | 'training' | 'done';

export interface RoundMetrics {
  round: number;
  labeled_pairs: number;
  labeling_ratio: number;
  best_epoch: number;
  best_val_accuracy: number;
  final_train_loss: number;
  [key: string]: unknown;
}

export interface Status {
  run_id: string;
  round: number;
  phase: Phase;
  labeled_count: number;
  labeling_ratio: number;
  total_rounds: number;
  last_metrics: RoundMetrics | null;
  error: string | null;
}

export type Choice = 'left' | 'equal' | 'right';

/** Relative-label convention: which side is more severe. */
export const CHOICE_LABELS: Record<Choice, number> = {
  left: 1.0,
  equal: 0.5,
  right: 0.0,
};

export type NextPair =
  | { kind: 'pair'; pair: PairPayload }
  | { kind: 'training' }
  | { kind: 'empty' };
