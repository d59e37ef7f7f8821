"""Feedforward scoring network with dropout, weight decay, and Adam.

The network maps a feature vector to a single scalar rank score through
fully connected layers with rectifier activations. Dropout masks are
sampled explicitly so that stochastic forward passes are reproducible,
and gradients are computed by hand-written reverse accumulation over the
fixed architecture (no general autodiff).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigurationError, NumericalError, ShapeError, ValidationError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Lower clamp for log arguments in the ranking cross-entropy.
LOG_FLOOR = 1e-15
_LOG_FLOOR_LOG = math.log(LOG_FLOOR)


@dataclass
class NetworkParams:
    """Weights and biases of the scorer plus its regularization settings.

    ``layer_sizes`` runs input dim -> hidden dims -> 1. ``weights[l]`` has
    shape ``(layer_sizes[l], layer_sizes[l+1])`` and ``biases[l]`` has shape
    ``(layer_sizes[l+1],)``.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ConfigurationError(
                f"need at least an input and an output layer, got {self.layer_sizes}"
            )
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigurationError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ConfigurationError(
                f"output layer must have exactly one unit, got {self.layer_sizes[-1]}"
            )
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("weights/biases do not chain with layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != want:
                raise ShapeError(f"weight {l} has shape {w.shape}, expected {want}")
            if b.shape != (self.layer_sizes[l + 1],):
                raise ShapeError(f"bias {l} has shape {b.shape}, expected ({want[1]},)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.weight_decay < 0.0:
            raise ConfigurationError(f"weight_decay must be nonnegative, got {self.weight_decay}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            dropout_rate=self.dropout_rate,
            weight_decay=self.weight_decay,
        )


@dataclass
class DropoutMasks:
    """One binary keep/drop vector per hidden layer."""

    layers: list[np.ndarray]

    def __post_init__(self) -> None:
        for m in self.layers:
            vals = np.unique(m)
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise ValidationError("mask entries must be 0 or 1")


@dataclass
class Gradients:
    """d(loss)/d(parameter), shaped like the parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class PairBatch:
    """Materialized mini-batch of feature pairs with relative labels.

    ``abs_i``/``abs_j`` carry per-member absolute labels and are only
    required when the regression term is active.
    """

    feats_i: np.ndarray
    feats_j: np.ndarray
    rel_labels: np.ndarray
    abs_i: np.ndarray | None = None
    abs_j: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.feats_i = np.asarray(self.feats_i, dtype=np.float64)
        self.feats_j = np.asarray(self.feats_j, dtype=np.float64)
        self.rel_labels = np.asarray(self.rel_labels, dtype=np.float64)
        n = len(self.rel_labels)
        if self.feats_i.shape[0] != n or self.feats_j.shape[0] != n:
            raise ShapeError("feature rows do not match the number of labels")
        bad = ~np.isin(self.rel_labels, (0.0, 0.5, 1.0))
        if bad.any():
            raise ValidationError(f"relative labels must be 0, 0.5, or 1; got {self.rel_labels[bad][:5]}")
        for name in ("abs_i", "abs_j"):
            a = getattr(self, name)
            if a is not None:
                a = np.asarray(a, dtype=np.float64)
                if a.shape != (n,):
                    raise ShapeError(f"{name} must have one entry per pair")
                setattr(self, name, a)

    def __len__(self) -> int:
        return len(self.rel_labels)


@dataclass
class LossSpec:
    """Which terms enter the training objective."""

    multitask: bool = False


@dataclass
class OptimizerState:
    """Adam accumulators mirroring the parameter shapes."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int
    learning_rate: float

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            m_weights=[a.copy() for a in self.m_weights],
            m_biases=[a.copy() for a in self.m_biases],
            v_weights=[a.copy() for a in self.v_weights],
            v_biases=[a.copy() for a in self.v_biases],
            step=self.step,
            learning_rate=self.learning_rate,
        )


def init_network(
    layer_sizes,
    seed: int,
    dropout_rate: float = 0.0,
    weight_decay: float = 0.0,
) -> NetworkParams:
    """Create a network with zero biases and scaled-normal weights.

    Weights are drawn from N(0, 1/fan_in) so activations keep a stable
    scale across depths. Identical (layer_sizes, seed) give bit-identical
    parameters.
    """
    layer_sizes = tuple(int(n) for n in layer_sizes)
    if len(layer_sizes) < 2:
        raise ConfigurationError(f"need at least 2 layers, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        scale = 1.0 / math.sqrt(fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(
        layer_sizes=layer_sizes,
        weights=weights,
        biases=biases,
        dropout_rate=dropout_rate,
        weight_decay=weight_decay,
    )


def sample_masks(params: NetworkParams, rng: np.random.Generator) -> DropoutMasks:
    """Draw one keep/drop mask per hidden layer.

    Each unit is kept independently with probability 1 - dropout_rate.
    The output unit is never masked.
    """
    keep = 1.0 - params.dropout_rate
    layers = [
        (rng.random(size) < keep).astype(np.float64) for size in params.hidden_sizes
    ]
    return DropoutMasks(layers=layers)


def sample_mask_batch(
    params: NetworkParams, rng: np.random.Generator, count: int
) -> list[np.ndarray]:
    """Stacked masks for ``count`` independent forward passes, one row each."""
    keep = 1.0 - params.dropout_rate
    return [
        (rng.random((count, size)) < keep).astype(np.float64)
        for size in params.hidden_sizes
    ]


def stack_masks(masks: list[DropoutMasks]) -> list[np.ndarray]:
    """Row-stack per-pass masks into per-layer (count, units) arrays."""
    if not masks:
        return []
    n_hidden = len(masks[0].layers)
    return [np.stack([m.layers[l] for m in masks]) for l in range(n_hidden)]


def _forward_cached(
    params: NetworkParams, x: np.ndarray, mask_rows: list[np.ndarray] | None
):
    """Batched forward pass keeping the per-layer caches backprop needs.

    Without masks, hidden activations are scaled by the keep probability so
    the expected value matches the stochastic passes.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(
            f"expected features of shape (n, {params.input_dim}), got {x.shape}"
        )
    keep = 1.0 - params.dropout_rate
    n_layers = len(params.weights)
    pre = []
    post = [x]
    a = x
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        if l == n_layers - 1:
            return z[:, 0], pre, post
        a = np.maximum(z, 0.0)
        if mask_rows is not None:
            m = mask_rows[l]
            if m.shape != a.shape:
                raise ShapeError(f"mask {l} has shape {m.shape}, expected {a.shape}")
            a = a * m
        else:
            a = a * keep
        post.append(a)
    raise AssertionError("unreachable")


def forward_batch(
    params: NetworkParams,
    features: np.ndarray,
    mask_rows: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Rank scores for a batch of feature rows. See :func:`forward`."""
    scores, _, _ = _forward_cached(params, features, mask_rows)
    return scores


def forward(
    params: NetworkParams,
    features,
    masks: DropoutMasks | None = None,
) -> float:
    """Scalar rank score for one feature vector.

    With ``masks`` given, each dropped hidden unit contributes zero. With
    no masks, hidden activations are scaled by (1 - dropout_rate), the
    expected-value convention for prediction.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D feature vector, got shape {x.shape}")
    rows = None if masks is None else [m[None, :] for m in masks.layers]
    return float(forward_batch(params, x[None, :], rows)[0])


def squared_weight_norm(params: NetworkParams) -> float:
    """Sum of squared entries over all weight matrices (biases excluded)."""
    return float(sum(np.sum(w * w) for w in params.weights))


def rank_term(score_diffs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-pair ranking cross-entropy with the log arguments clamped.

    For score difference d and target C this is
    -[C log P + (1 - C) log(1 - P)] with P = sigmoid(d), evaluated in log
    space so large |d| cannot overflow, and each log clamped below at
    LOG_FLOOR.
    """
    d = np.asarray(score_diffs, dtype=np.float64)
    c = np.asarray(labels, dtype=np.float64)
    log_p = np.maximum(log_expit(d), _LOG_FLOOR_LOG)
    log_1mp = np.maximum(log_expit(-d), _LOG_FLOOR_LOG)
    return -(c * log_p + (1.0 - c) * log_1mp)


def _rank_term_diff_grad(score_diffs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(rank_term)/d(score difference), honoring the log clamps."""
    d = np.asarray(score_diffs, dtype=np.float64)
    c = np.asarray(labels, dtype=np.float64)
    p = expit(d)
    active_p = log_expit(d) > _LOG_FLOOR_LOG
    active_1mp = log_expit(-d) > _LOG_FLOOR_LOG
    return -c * (1.0 - p) * active_p + (1.0 - c) * p * active_1mp


def batch_loss(
    params: NetworkParams,
    batch: PairBatch,
    mask_rows: list[np.ndarray] | None,
    loss_spec: LossSpec,
) -> float:
    """Training objective on one mini-batch under fixed masks.

    Sum of the per-pair ranking cross-entropy, the weight-decay penalty
    weight_decay * sum ||W||^2, and (in multitask mode) the squared error
    of both members against their absolute labels.
    """
    s_i, _, _ = _forward_cached(params, batch.feats_i, mask_rows)
    s_j, _, _ = _forward_cached(params, batch.feats_j, mask_rows)
    total = float(np.sum(rank_term(s_i - s_j, batch.rel_labels)))
    total += params.weight_decay * squared_weight_norm(params)
    if loss_spec.multitask:
        if batch.abs_i is None or batch.abs_j is None:
            raise ValidationError("multitask loss needs absolute labels for both members")
        total += float(np.sum((s_i - batch.abs_i) ** 2 + (s_j - batch.abs_j) ** 2))
    return total


def _backprop_member(
    params: NetworkParams,
    pre: list[np.ndarray],
    post: list[np.ndarray],
    mask_rows: list[np.ndarray] | None,
    dscore: np.ndarray,
    grads: Gradients,
) -> None:
    """Accumulate d(loss)/d(params) for one Siamese member into ``grads``."""
    keep = 1.0 - params.dropout_rate
    n_layers = len(params.weights)
    delta = dscore[:, None]
    for l in range(n_layers - 1, -1, -1):
        grads.weights[l] += post[l].T @ delta
        grads.biases[l] += delta.sum(axis=0)
        if l == 0:
            break
        dpost = delta @ params.weights[l].T
        if mask_rows is not None:
            dpost = dpost * mask_rows[l - 1]
        else:
            dpost = dpost * keep
        delta = dpost * (pre[l - 1] > 0.0)


def gradients(
    params: NetworkParams,
    batch: PairBatch,
    masks_per_pair: list[DropoutMasks] | list[np.ndarray] | None,
    loss_spec: LossSpec,
) -> Gradients:
    """Reverse-mode gradient of :func:`batch_loss` w.r.t. all parameters.

    Both members of each pair share that pair's dropout masks, and the
    weight-decay contribution 2 * weight_decay * W is included even for an
    empty ranking batch. Raises NumericalError naming the first layer whose
    gradient contains NaN or Inf.
    """
    if masks_per_pair is None:
        mask_rows = None
    elif masks_per_pair and isinstance(masks_per_pair[0], DropoutMasks):
        mask_rows = stack_masks(masks_per_pair)  # type: ignore[arg-type]
    else:
        mask_rows = masks_per_pair  # already stacked per layer

    grads = Gradients(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )
    if len(batch) > 0:
        if masks_per_pair is not None and mask_rows and mask_rows[0].shape[0] != len(batch):
            raise ShapeError("need one mask row per pair")
        s_i, pre_i, post_i = _forward_cached(params, batch.feats_i, mask_rows)
        s_j, pre_j, post_j = _forward_cached(params, batch.feats_j, mask_rows)
        g_d = _rank_term_diff_grad(s_i - s_j, batch.rel_labels)
        ds_i = g_d.copy()
        ds_j = -g_d
        if loss_spec.multitask:
            if batch.abs_i is None or batch.abs_j is None:
                raise ValidationError("multitask loss needs absolute labels for both members")
            ds_i += 2.0 * (s_i - batch.abs_i)
            ds_j += 2.0 * (s_j - batch.abs_j)
        _backprop_member(params, pre_i, post_i, mask_rows, ds_i, grads)
        _backprop_member(params, pre_j, post_j, mask_rows, ds_j, grads)

    if params.weight_decay != 0.0:
        for l, w in enumerate(params.weights):
            grads.weights[l] += 2.0 * params.weight_decay * w

    for l in range(len(grads.weights)):
        if not (np.all(np.isfinite(grads.weights[l])) and np.all(np.isfinite(grads.biases[l]))):
            raise NumericalError(f"non-finite gradient in layer {l}")
    return grads


def init_optimizer(params: NetworkParams, learning_rate: float) -> OptimizerState:
    if learning_rate <= 0.0:
        raise ConfigurationError(f"learning_rate must be positive, got {learning_rate}")
    return OptimizerState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
        step=0,
        learning_rate=learning_rate,
    )


def optimizer_step(
    params: NetworkParams, grads: Gradients, state: OptimizerState
) -> tuple[NetworkParams, OptimizerState]:
    """One Adam update with bias correction; returns fresh snapshots."""
    new_params = params.copy()
    new_state = state.copy()
    new_state.step = state.step + 1
    t = new_state.step
    corr1 = 1.0 - ADAM_BETA1**t
    corr2 = 1.0 - ADAM_BETA2**t
    lr = state.learning_rate

    def update(val, g, m, v):
        m[:] = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v[:] = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        val -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)

    for l in range(len(params.weights)):
        update(new_params.weights[l], grads.weights[l], new_state.m_weights[l], new_state.v_weights[l])
        update(new_params.biases[l], grads.biases[l], new_state.m_biases[l], new_state.v_biases[l])
    return new_params, new_state
