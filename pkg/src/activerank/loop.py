"""Active learning loop: seed with random pairs, then alternate training
with uncertainty-guided selection and annotation.

One cycle: train the scorer on all labeled pairs, score every training
sample's Monte Carlo dropout variance, pick the top slice, pair each pick
with another pick, have the oracle label the new pairs, and repeat. Random
and greedy k-center (core-set) samplers are provided as baselines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import network, runlog, uncertainty
from .data import Dataset, DatasetSplit, relative_label
from .errors import ConfigurationError, PairingError, ValidationError
from .network import NetworkParams
from .ranking import (
    LabeledPairSet,
    RelativePair,
    TrainConfig,
    train_round,
    unordered_key,
)

log = logging.getLogger(__name__)

SAMPLERS = ("ubs", "random", "coreset")


@dataclass
class LoopConfig:
    r_percent: float = 20.0
    s_percent: float = 5.0
    rounds: int = 6
    draws: int = 30
    sampler: str = "ubs"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.r_percent <= 100.0:
            raise ConfigurationError(f"r_percent must be in (0, 100], got {self.r_percent}")
        if not 0.0 <= self.s_percent <= 100.0:
            raise ConfigurationError(f"s_percent must be in [0, 100], got {self.s_percent}")
        if self.rounds < 0:
            raise ConfigurationError(f"rounds must be nonnegative, got {self.rounds}")
        if self.r_percent + self.s_percent * self.rounds > 100.0 + 1e-9:
            raise ConfigurationError(
                "selection budget exceeds the pool: "
                f"r + s*K = {self.r_percent + self.s_percent * self.rounds}"
            )
        if self.draws < 1:
            raise ConfigurationError(f"draws must be positive, got {self.draws}")
        if self.sampler not in SAMPLERS:
            raise ConfigurationError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")


@dataclass
class LoopState:
    """Everything a finished (or aborted) loop produced."""

    labeled: LabeledPairSet
    selected_ids_by_round: list[list[str]] = field(default_factory=list)
    params: NetworkParams | None = None
    metrics_by_round: list[dict] = field(default_factory=list)
    selection_variances: list[dict[str, float] | None] = field(default_factory=list)
    skips_by_round: list[int] = field(default_factory=list)
    n_train: int = 0

    @property
    def labeling_ratio(self) -> float:
        return len(self.labeled) / self.n_train if self.n_train else 0.0


def quota(percent: float, n: int) -> int:
    """Number of items for a percentage of the pool, rounding half up."""
    return int(np.floor(percent * n / 100.0 + 0.5))


def initial_selection(dataset: Dataset, r_percent: float, rng: np.random.Generator) -> list[str]:
    """Uniform sample without replacement of r% of the training ids."""
    n = len(dataset)
    r = quota(r_percent, n)
    if r < 2:
        raise ConfigurationError(
            f"initial selection needs at least 2 samples, got {r} from r={r_percent}%, N={n}"
        )
    ids = sorted(dataset.ids)
    picked = rng.choice(len(ids), size=min(r, n), replace=False)
    return [ids[k] for k in picked]


def make_pairs(
    selected_ids,
    existing_pairs,
    rng: np.random.Generator,
    fallback_ids=(),
) -> list[RelativePair]:
    """One new unlabeled pair per selected id, partner drawn from the others.

    Partners are resampled (without replacement) until the unordered pair is
    new; when a selected id exhausts its in-round partners, one is drawn from
    ``fallback_ids`` (previously selected samples). Ids whose every candidate
    pair already exists are skipped with a warning. Raises PairingError when
    not a single pair can be formed.
    """
    selected = list(selected_ids)
    fallback = list(fallback_ids)
    if len(selected) < 2 and not fallback:
        raise PairingError(f"cannot pair {len(selected)} selected id(s) without a fallback pool")

    taken: set[tuple[str, str]] = _existing_keys(existing_pairs)
    made: list[RelativePair] = []
    skipped = 0
    for sid in selected:
        partner = _draw_partner(sid, selected, taken, rng)
        if partner is None and fallback:
            partner = _draw_partner(sid, fallback, taken, rng)
        if partner is None:
            skipped += 1
            log.warning("no unused partner for %s; pair slot skipped", sid)
            continue
        pair = RelativePair(sid, partner)
        taken.add(pair.key)
        made.append(pair)
    if not made:
        raise PairingError("every candidate pair already exists; no pair formed")
    if skipped:
        log.warning("skipped %d of %d pair slots (duplicates exhausted)", skipped, len(selected))
    return made


def _existing_keys(existing_pairs) -> set[tuple[str, str]]:
    if isinstance(existing_pairs, LabeledPairSet):
        return existing_pairs.keys
    keys = set()
    for item in existing_pairs:
        if isinstance(item, RelativePair):
            keys.add(item.key)
        else:
            a, b = item
            keys.add(unordered_key(a, b))
    return keys


def _draw_partner(sid, pool, taken, rng) -> str | None:
    candidates = [x for x in pool if x != sid]
    for k in rng.permutation(len(candidates)):
        partner = candidates[k]
        if unordered_key(sid, partner) not in taken:
            return partner
    return None


def select_uncertain(posteriors, s_percent: float, n: int) -> list[str]:
    """Ids of the s% most uncertain samples (N is the full training size)."""
    s = quota(s_percent, n)
    if s < 1:
        raise ConfigurationError(f"selection quota is {s} from s={s_percent}%, N={n}")
    ranked = uncertainty.acquisition_rank(posteriors)
    return ranked[:s]


def random_select(pool_ids, s_percent: float, n: int, rng: np.random.Generator) -> list[str]:
    """Uniform counterpart of :func:`select_uncertain`."""
    s = quota(s_percent, n)
    if s < 1:
        raise ConfigurationError(f"selection quota is {s} from s={s_percent}%, N={n}")
    ids = sorted(pool_ids)
    picked = rng.choice(len(ids), size=min(s, len(ids)), replace=False)
    return [ids[k] for k in picked]


def coreset_select(
    features_by_id,
    s_percent: float,
    n: int,
    already_selected=(),
) -> list[str]:
    """Greedy k-center selection seeded by the already chosen centers.

    Repeatedly adds the candidate farthest (Euclidean) from its nearest
    center; ties go to the lower id. With no centers yet, every distance is
    infinite and the tie rule picks the lowest id first.
    """
    s = quota(s_percent, n)
    if s < 1:
        raise ConfigurationError(f"selection quota is {s} from s={s_percent}%, N={n}")
    centers = set(already_selected)
    candidate_ids = sorted(set(features_by_id) - centers)
    if not candidate_ids:
        raise ConfigurationError("empty candidate pool for core-set selection")

    feats = np.stack([np.asarray(features_by_id[i], dtype=np.float64) for i in candidate_ids])
    min_dist = np.full(len(candidate_ids), np.inf)
    for cid in sorted(centers):
        d = np.linalg.norm(feats - np.asarray(features_by_id[cid], dtype=np.float64), axis=1)
        min_dist = np.minimum(min_dist, d)

    chosen: list[str] = []
    active = np.ones(len(candidate_ids), dtype=bool)
    for _ in range(min(s, len(candidate_ids))):
        masked = np.where(active, min_dist, -np.inf)
        k = int(np.argmax(masked))  # first max on sorted ids = lower id on ties
        chosen.append(candidate_ids[k])
        active[k] = False
        d = np.linalg.norm(feats - feats[k], axis=1)
        min_dist = np.minimum(min_dist, d)
    return chosen


def derive_seed(base: int, round_index: int) -> int:
    """Stable per-round seed for the Monte Carlo draw streams."""
    return int(
        np.random.SeedSequence((int(base) % (2**63), round_index)).generate_state(1)[0]
    )


def build_validation_pairs(val: Dataset, rng: np.random.Generator) -> list[RelativePair]:
    """Ground-truth labeled pairs over the validation split (one per sample)."""
    pairs = make_pairs(sorted(val.ids), set(), rng)
    return [
        p.with_label(relative_label(val[p.id_i].ordinal_label, val[p.id_j].ordinal_label))
        for p in pairs
    ]


def run_loop(
    split: DatasetSplit,
    oracle,
    loop_config: LoopConfig,
    train_config: TrainConfig,
    params: NetworkParams,
    out_dir=None,
    observer=None,
) -> LoopState:
    """Run the full annotate/train/select loop and return its state.

    Writes ``config.json``, ``pairs.csv``, ``selections.csv``,
    ``rounds.jsonl``, ``summary.json`` and per-round parameter snapshots
    into ``out_dir`` when given, flushing as it goes so an aborted run
    leaves its progress on disk. ``observer`` (if given) is called as
    ``observer(round_index, record)`` after each training round.
    """
    train = split.train
    n = len(train)
    k_rounds = loop_config.rounds

    ss = np.random.SeedSequence(int(loop_config.seed) % (2**63))
    children = ss.spawn(3 + 2 * max(k_rounds, 0))
    rng_init = np.random.default_rng(children[0])
    rng_init_pairs = np.random.default_rng(children[1])
    rng_val = np.random.default_rng(children[2])

    writer = runlog.RunWriter(out_dir) if out_dir is not None else None
    state = LoopState(labeled=LabeledPairSet(), n_train=n)
    try:
        val_pairs = build_validation_pairs(split.val, rng_val)

        selected = initial_selection(train, loop_config.r_percent, rng_init)
        pairs = make_pairs(selected, state.labeled, rng_init_pairs)
        labels = oracle.annotate_pairs(pairs, 0)
        labeled_pairs = [p.with_label(c) for p, c in zip(pairs, labels)]
        state.labeled.add_all(labeled_pairs, 0)
        state.selected_ids_by_round.append(list(selected))
        state.selection_variances.append(None)
        state.skips_by_round.append(len(selected) - len(pairs))
        if writer:
            for p in labeled_pairs:
                writer.append_pair(p.id_i, p.id_j, p.label, 0, oracle.source)
            for sid in selected:
                writer.append_selection(0, sid, None)

        cur = params
        for k in range(k_rounds + 1):
            if k > 0 and train_config.retrain_mode == "scratch":
                cur = network.init_network(
                    cur.layer_sizes,
                    derive_seed(train_config.seed + 1, k),
                    cur.dropout_rate,
                    cur.weight_decay,
                )
            cfg_k = replace(train_config, seed=derive_seed(train_config.seed, k))
            absolute = None
            if cfg_k.multitask:
                # absolute annotation of every unique pair member; the oracle
                # caches repeats so each image is only charged once
                member_ids = sorted({i for p in state.labeled for i in (p.id_i, p.id_j)})
                absolute = {sid: oracle.absolute(sid) for sid in member_ids}
            cur, report = train_round(
                cur, train, state.labeled.pairs, val_pairs, cfg_k, absolute,
                val_dataset=split.val,
            )
            record = {
                "round": k,
                "labeled_pairs": len(state.labeled),
                "labeling_ratio": len(state.labeled) / n,
                "pairs_added": len(state.selected_ids_by_round[k]) - state.skips_by_round[k],
                "skipped_pair_slots": state.skips_by_round[k],
                "best_epoch": report.best_epoch,
                "final_train_loss": report.train_loss[-1],
                "best_val_accuracy": max(report.val_accuracy),
                "val_accuracy": report.val_accuracy,
                "train_loss": report.train_loss,
            }
            state.metrics_by_round.append(record)
            if writer:
                writer.append_round(record)
                writer.write_params(cur, k)
            if observer is not None:
                observer(k, record)
            if k == k_rounds:
                break

            selected, variances = _select_next(
                cur, train, state, loop_config, np.random.default_rng(children[3 + 2 * k])
            )
            pair_rng = np.random.default_rng(children[4 + 2 * k])
            previously = sorted({i for sel in state.selected_ids_by_round for i in sel})
            pairs = make_pairs(selected, state.labeled, pair_rng, fallback_ids=previously)
            labels = oracle.annotate_pairs(pairs, k + 1)
            labeled_pairs = [p.with_label(c) for p, c in zip(pairs, labels)]
            state.labeled.add_all(labeled_pairs, k + 1)
            state.selected_ids_by_round.append(list(selected))
            state.selection_variances.append(variances)
            state.skips_by_round.append(len(selected) - len(pairs))
            if writer:
                for p in labeled_pairs:
                    writer.append_pair(p.id_i, p.id_j, p.label, k + 1, oracle.source)
                for sid in selected:
                    var = None if variances is None else variances.get(sid)
                    writer.append_selection(k + 1, sid, var)

        state.params = cur
        if writer:
            writer.write_summary(_summary(state, oracle, loop_config))
        return state
    finally:
        if writer:
            writer.close()


def _select_next(params, train, state, loop_config, rng):
    """Pick the next round's ids with the configured sampler."""
    if loop_config.sampler == "ubs":
        base = derive_seed(loop_config.seed, len(state.selected_ids_by_round))
        posteriors = uncertainty.posterior_for_pool(
            params, train.samples, loop_config.draws, base
        )
        selected = select_uncertain(posteriors, loop_config.s_percent, len(train))
        variances = {p.sample_id: p.variance for p in posteriors if p.sample_id in set(selected)}
        return selected, variances
    if loop_config.sampler == "random":
        return random_select(train.ids, loop_config.s_percent, len(train), rng), None
    features = {s.id: s.features for s in train}
    already = {i for sel in state.selected_ids_by_round for i in sel}
    return (
        coreset_select(features, loop_config.s_percent, len(train), already),
        None,
    )


def _summary(state: LoopState, oracle, loop_config: LoopConfig) -> dict:
    from .metrics import annotation_cost

    n_rel = len(state.labeled)
    n_abs = getattr(oracle, "n_absolute_unique", 0)
    return {
        "sampler": loop_config.sampler,
        "rounds": loop_config.rounds,
        "labeled_pairs": n_rel,
        "labeling_ratio": state.labeling_ratio,
        "n_train": state.n_train,
        "relative_annotations": getattr(oracle, "relative_queries", n_rel),
        "unique_absolute_annotations": n_abs,
        "cost_seconds": annotation_cost(getattr(oracle, "relative_queries", n_rel), n_abs),
        "skipped_pair_slots": sum(state.skips_by_round),
    }
