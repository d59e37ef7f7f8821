"""Siamese pairwise ranking objective and the per-round training procedure.

Training follows the RankNet recipe: the scorer is applied to both members
of each labeled pair, the sigmoid of the score difference is matched
against the relative label with a cross-entropy loss, and an L2 penalty on
the weights regularizes the fit. An optional squared-error term calibrates
scores to absolute ordinal labels (multi-task mode).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import network
from .data import Dataset
from .errors import NumericalError, ValidationError
from .network import LossSpec, NetworkParams, PairBatch

log = logging.getLogger(__name__)

LEGAL_LABELS = (0.0, 0.5, 1.0)


def unordered_key(id_i: str, id_j: str) -> tuple[str, str]:
    """Canonical key of a pair regardless of member order."""
    return (id_i, id_j) if id_i <= id_j else (id_j, id_i)


@dataclass(frozen=True)
class RelativePair:
    """Ordered pair of sample ids with a relative label.

    ``label`` is 1 if the first member is more severe, 0.5 for equal
    severity, 0 otherwise; None marks a pair awaiting annotation.
    """

    id_i: str
    id_j: str
    label: float | None = None

    def __post_init__(self) -> None:
        if self.id_i == self.id_j:
            raise ValidationError(f"pair members must differ, got {self.id_i!r} twice")
        if self.label is not None and self.label not in LEGAL_LABELS:
            raise ValidationError(f"label must be one of {LEGAL_LABELS}, got {self.label}")

    @property
    def key(self) -> tuple[str, str]:
        return unordered_key(self.id_i, self.id_j)

    def with_label(self, label: float) -> "RelativePair":
        return RelativePair(self.id_i, self.id_j, label)


class LabeledPairSet:
    """Labeled pairs with round provenance; unordered duplicates rejected."""

    def __init__(self) -> None:
        self._pairs: list[RelativePair] = []
        self._rounds: list[int] = []
        self._keys: set[tuple[str, str]] = set()

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self):
        return iter(self._pairs)

    @property
    def pairs(self) -> list[RelativePair]:
        return list(self._pairs)

    def rows(self) -> list[tuple[RelativePair, int]]:
        return list(zip(self._pairs, self._rounds))

    def contains(self, id_i: str, id_j: str) -> bool:
        return unordered_key(id_i, id_j) in self._keys

    @property
    def keys(self) -> set[tuple[str, str]]:
        return set(self._keys)

    def add(self, pair: RelativePair, round_index: int) -> None:
        if pair.label is None:
            raise ValidationError(f"pair {pair.key} is unlabeled")
        if pair.key in self._keys:
            raise ValidationError(f"duplicate unordered pair {pair.key}")
        self._pairs.append(pair)
        self._rounds.append(round_index)
        self._keys.add(pair.key)

    def add_all(self, pairs, round_index: int) -> None:
        for pair in pairs:
            self.add(pair, round_index)


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs_per_round: int = 20
    learning_rate: float = 1e-2
    multitask: bool = False
    seed: int = 0
    retrain_mode: str = "warm"  # warm: continue parameters across rounds; scratch: re-init

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs_per_round < 1:
            raise ValidationError(
                f"epochs_per_round must be positive, got {self.epochs_per_round}"
            )
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.retrain_mode not in ("warm", "scratch"):
            raise ValidationError(f"retrain_mode must be warm or scratch, got {self.retrain_mode}")


@dataclass
class RoundReport:
    """Per-epoch training record for one call to :func:`train_round`."""

    train_loss: list[float]
    val_accuracy: list[float]
    best_epoch: int
    n_pairs: int

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "best_epoch": self.best_epoch,
            "n_pairs": self.n_pairs,
        }


def pair_probability(score_i: float, score_j: float) -> float:
    """P(i ranks above j) = sigmoid(score_i - score_j)."""
    if not (math.isfinite(score_i) and math.isfinite(score_j)):
        raise NumericalError(f"non-finite scores ({score_i}, {score_j})")
    return float(expit(score_i - score_j))


def rank_loss(score_pairs, labels, params: NetworkParams) -> float:
    """Ranking cross-entropy over a batch plus the weight-decay penalty.

    ``score_pairs`` is an (n, 2) array of member scores. The penalty term
    weight_decay * sum ||W||_F^2 is included even for an empty batch.
    """
    scores = np.asarray(score_pairs, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape[0] != labels.shape[0]:
        raise ValidationError("need one label per score pair")
    if labels.size and not np.all(np.isin(labels, LEGAL_LABELS)):
        raise ValidationError(f"labels must be in {LEGAL_LABELS}")
    term = float(np.sum(network.rank_term(scores[:, 0] - scores[:, 1], labels)))
    return term + params.weight_decay * network.squared_weight_norm(params)


def regression_loss(scores, absolute_labels) -> float:
    """Squared error of rank scores against absolute labels, summed."""
    scores = np.asarray(scores, dtype=np.float64)
    if any(a is None for a in np.atleast_1d(absolute_labels).tolist()):
        raise ValidationError("regression loss needs an absolute label per score")
    labels = np.asarray(absolute_labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ValidationError("scores and absolute labels must align")
    if labels.size and not np.all(np.isfinite(labels)):
        raise ValidationError("absolute labels must be finite")
    return float(np.sum((scores - labels) ** 2))


def multitask_loss(batch: PairBatch, params: NetworkParams, config: TrainConfig) -> float:
    """Rank loss plus regression loss, as an unweighted sum.

    Scores are evaluated without dropout (expected-value forward pass).
    Refuses to run when the config has multitask disabled.
    """
    if not config.multitask:
        raise ValidationError("multitask mode is disabled in this config")
    if batch.abs_i is None or batch.abs_j is None:
        raise ValidationError("multitask loss needs absolute labels for both members")
    s_i = network.forward_batch(params, batch.feats_i)
    s_j = network.forward_batch(params, batch.feats_j)
    rank = rank_loss(np.stack([s_i, s_j], axis=1), batch.rel_labels, params)
    reg = regression_loss(np.concatenate([s_i, s_j]), np.concatenate([batch.abs_i, batch.abs_j]))
    return rank + reg


def materialize_batch(
    dataset: Dataset,
    pairs,
    absolute_labels: dict[str, int] | None = None,
) -> PairBatch:
    """Resolve pair ids into feature arrays (and absolute labels if given)."""
    pairs = list(pairs)
    feats_i = np.stack([dataset[p.id_i].features for p in pairs]) if pairs else np.zeros((0, dataset.feature_dim))
    feats_j = np.stack([dataset[p.id_j].features for p in pairs]) if pairs else np.zeros((0, dataset.feature_dim))
    labels = np.array([p.label for p in pairs], dtype=np.float64)
    abs_i = abs_j = None
    if absolute_labels is not None:
        try:
            abs_i = np.array([absolute_labels[p.id_i] for p in pairs], dtype=np.float64)
            abs_j = np.array([absolute_labels[p.id_j] for p in pairs], dtype=np.float64)
        except KeyError as exc:
            raise ValidationError(f"missing absolute label for sample {exc.args[0]!r}") from exc
    return PairBatch(feats_i=feats_i, feats_j=feats_j, rel_labels=labels, abs_i=abs_i, abs_j=abs_j)


def validation_pair_accuracy(params: NetworkParams, dataset: Dataset, pairs) -> float:
    """Share of non-tie pairs whose score ordering matches the label.

    Scores come from the deterministic forward pass (no dropout). Pairs
    labeled 0.5 are excluded; exact score ties count as incorrect. Returns
    0.0 when every pair is a tie pair.
    """
    pairs = [p for p in pairs if p.label != 0.5]
    if not pairs:
        return 0.0
    ids = sorted({i for p in pairs for i in (p.id_i, p.id_j)})
    scores = network.forward_batch(params, dataset.feature_matrix(ids))
    by_id = dict(zip(ids, scores))
    correct = sum(
        1
        for p in pairs
        if (p.label == 1.0 and by_id[p.id_i] > by_id[p.id_j])
        or (p.label == 0.0 and by_id[p.id_i] < by_id[p.id_j])
    )
    return correct / len(pairs)


def train_round(
    params: NetworkParams,
    dataset: Dataset,
    labeled_pairs,
    validation_pairs,
    config: TrainConfig,
    absolute_labels: dict[str, int] | None = None,
    val_dataset: Dataset | None = None,
) -> tuple[NetworkParams, RoundReport]:
    """Train on the labeled pairs for one round of epochs.

    Pairs are reshuffled every epoch with a seeded generator and fresh
    dropout masks are drawn per pair per forward pass. After each epoch the
    validation pair accuracy is measured without dropout, and the
    parameters from the best epoch (earliest on ties) are returned.
    ``validation_pairs`` are resolved against ``val_dataset`` (defaults to
    the training dataset).
    """
    pairs = list(labeled_pairs)
    if not pairs:
        raise ValidationError("cannot train on an empty pair set")
    if config.multitask and absolute_labels is None:
        raise ValidationError("multitask training needs absolute labels")
    if val_dataset is None:
        val_dataset = dataset
    loss_spec = LossSpec(multitask=config.multitask)
    full = materialize_batch(dataset, pairs, absolute_labels if config.multitask else None)

    rng = np.random.default_rng(config.seed)
    state = network.init_optimizer(params, config.learning_rate)
    cur = params
    best = params.copy()
    best_acc = -1.0
    best_epoch = -1
    train_losses: list[float] = []
    val_accs: list[float] = []

    n = len(pairs)
    for epoch in range(config.epochs_per_round):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = PairBatch(
                feats_i=full.feats_i[idx],
                feats_j=full.feats_j[idx],
                rel_labels=full.rel_labels[idx],
                abs_i=None if full.abs_i is None else full.abs_i[idx],
                abs_j=None if full.abs_j is None else full.abs_j[idx],
            )
            mask_rows = network.sample_mask_batch(cur, rng, len(idx))
            loss = network.batch_loss(cur, batch, mask_rows, loss_spec)
            if not math.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch}")
            epoch_loss += loss
            grads = network.gradients(cur, batch, mask_rows, loss_spec)
            cur, state = network.optimizer_step(cur, grads, state)
        train_losses.append(epoch_loss / n)
        acc = validation_pair_accuracy(cur, val_dataset, validation_pairs)
        val_accs.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best = cur.copy()

    report = RoundReport(
        train_loss=train_losses,
        val_accuracy=val_accs,
        best_epoch=best_epoch,
        n_pairs=n,
    )
    return best, report


def reinit_like(params: NetworkParams, seed: int) -> NetworkParams:
    """Fresh random parameters with the same architecture and settings."""
    fresh = network.init_network(
        params.layer_sizes, seed, params.dropout_rate, params.weight_decay
    )
    return fresh


__all__ = [
    "LEGAL_LABELS",
    "LabeledPairSet",
    "RelativePair",
    "RoundReport",
    "TrainConfig",
    "materialize_batch",
    "multitask_loss",
    "pair_probability",
    "rank_loss",
    "regression_loss",
    "train_round",
    "unordered_key",
    "validation_pair_accuracy",
]
