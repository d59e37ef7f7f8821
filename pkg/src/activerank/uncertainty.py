"""Monte Carlo dropout posterior over rank scores.

Keeping dropout active at prediction time and averaging T stochastic
forward passes gives the rank score; the population variance of the draws
is the per-sample uncertainty used for acquisition. Each draw's masks come
from an RNG stream keyed by (base seed, sample id, draw index), so results
do not depend on evaluation order and samples can be scored in parallel.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import network
from .errors import ValidationError
from .network import NetworkParams

DEFAULT_DRAWS = 30


@dataclass
class ScorePosterior:
    """T Monte Carlo score draws with their mean (rank score) and variance."""

    sample_id: str
    draws: np.ndarray
    mean: float
    variance: float

    @classmethod
    def from_draws(cls, sample_id: str, draws) -> "ScorePosterior":
        draws = np.asarray(draws, dtype=np.float64)
        if draws.ndim != 1 or draws.size < 1:
            raise ValidationError("need a non-empty 1-D sequence of draws")
        mean = float(draws.mean())
        variance = float(np.mean((draws - mean) ** 2))
        return cls(sample_id=sample_id, draws=draws, mean=mean, variance=variance)


class StreamingMoments:
    """Welford accumulator for mean and population variance.

    Alternate route to the two-pass statistics in
    :meth:`ScorePosterior.from_draws`; both must agree to float precision.
    """

    def __init__(self) -> None:
        self.count = 0
        self._mean = 0.0
        self._m2 = 0.0

    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (value - self._mean)

    @property
    def mean(self) -> float:
        if self.count == 0:
            raise ValidationError("no values accumulated")
        return self._mean

    @property
    def variance(self) -> float:
        """Population (biased) variance of the values pushed so far."""
        if self.count == 0:
            raise ValidationError("no values accumulated")
        return self._m2 / self.count


def draw_rng(base_seed: int, sample_id: str, draw_index: int) -> np.random.Generator:
    """Generator for one (sample, draw) cell, independent of visit order."""
    entropy = (
        int(base_seed) % (2**63),
        zlib.crc32(sample_id.encode("utf-8")),
        int(draw_index),
    )
    return np.random.default_rng(np.random.SeedSequence(entropy))


def predict_posterior(
    params: NetworkParams,
    features,
    sample_id: str,
    t_draws: int = DEFAULT_DRAWS,
    base_seed: int = 0,
) -> ScorePosterior:
    """Score posterior from ``t_draws`` stochastic forward passes.

    Every draw samples fresh dropout masks from its keyed stream; draws are
    recorded in draw-index order.
    """
    if t_draws < 1:
        raise ValidationError(f"t_draws must be at least 1, got {t_draws}")
    feats = np.asarray(features, dtype=np.float64)
    mask_rows = None
    if params.hidden_sizes:
        per_draw = [
            network.sample_masks(params, draw_rng(base_seed, sample_id, t))
            for t in range(t_draws)
        ]
        mask_rows = network.stack_masks(per_draw)
    tiled = np.broadcast_to(feats, (t_draws, feats.shape[0]))
    draws = network.forward_batch(params, tiled, mask_rows)
    return ScorePosterior.from_draws(sample_id, draws)


def posterior_for_pool(
    params: NetworkParams,
    samples,
    t_draws: int = DEFAULT_DRAWS,
    base_seed: int = 0,
) -> list[ScorePosterior]:
    """Posteriors for many samples; order-independent by construction."""
    return [
        predict_posterior(params, s.features, s.id, t_draws, base_seed) for s in samples
    ]


def acquisition_rank(posteriors) -> list[str]:
    """Sample ids by variance, highest first; ties broken by ascending id."""
    return [
        p.sample_id
        for p in sorted(posteriors, key=lambda p: (-p.variance, p.sample_id))
    ]
