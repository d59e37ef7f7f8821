"""Datasets, synthetic ordinal data, group-wise splits, and annotation oracles."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, OracleError, ParseError, SchemaError


@dataclass(frozen=True)
class Sample:
    """One item: feature vector, optional ordinal class, and a group token."""

    id: str
    features: np.ndarray
    ordinal_label: int | None
    group: str


class Dataset:
    """Immutable collection of samples with uniform feature dimension."""

    def __init__(self, samples: list[Sample]):
        if not samples:
            raise SchemaError("dataset is empty")
        dims = {s.features.shape for s in samples}
        if len(dims) != 1 or samples[0].features.ndim != 1:
            raise SchemaError(f"inconsistent feature shapes: {sorted(dims)}")
        self.samples = list(samples)
        self.by_id = {}
        for s in samples:
            if s.id in self.by_id:
                raise SchemaError(f"duplicate sample id {s.id!r}")
            self.by_id[s.id] = s
        self.feature_dim = samples[0].features.shape[0]

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, sample_id: str) -> Sample:
        return self.by_id[sample_id]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def groups(self) -> list[str]:
        seen = dict.fromkeys(s.group for s in self.samples)
        return list(seen)

    @property
    def num_classes(self) -> int:
        """Inferred class count; labels must be present on every sample."""
        labels = [s.ordinal_label for s in self.samples]
        if any(lab is None for lab in labels):
            raise SchemaError("dataset has unlabeled samples; class count undefined")
        return int(max(labels)) + 1

    def feature_matrix(self, ids=None) -> np.ndarray:
        chosen = self.samples if ids is None else [self.by_id[i] for i in ids]
        return np.stack([s.features for s in chosen])

    def subset(self, ids) -> "Dataset":
        return Dataset([self.by_id[i] for i in ids])


@dataclass(frozen=True)
class DatasetSplit:
    train: Dataset
    val: Dataset
    test: Dataset


def load_dataset(path) -> Dataset:
    """Read a JSON-lines dataset of {id, features, label?, group?} records.

    A missing group defaults to the sample's own id (each sample its own
    group). Parse failures report the 1-based line number.
    """
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "id" not in rec or "features" not in rec:
                raise ParseError(f"{path}:{lineno}: record needs 'id' and 'features'")
            label = rec.get("label")
            samples.append(
                Sample(
                    id=str(rec["id"]),
                    features=np.asarray(rec["features"], dtype=np.float64),
                    ordinal_label=None if label is None else int(label),
                    group=str(rec.get("group", rec["id"])),
                )
            )
    return Dataset(samples)


def save_dataset(dataset: Dataset, path) -> None:
    """Write the JSON-lines form read by :func:`load_dataset`."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset:
            rec = {
                "id": s.id,
                "features": [float(v) for v in s.features],
                "label": s.ordinal_label,
                "group": s.group,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class SynthConfig:
    """Recipe for imbalanced synthetic ordinal data."""

    num_classes: int = 4
    class_proportions: tuple[float, ...] = (0.65, 0.19, 0.14, 0.02)
    n: int = 5000
    feature_dim: int = 16
    noise_scale: float = 0.25
    seed: int = 0
    group_block: int = 20

    def __post_init__(self) -> None:
        self.class_proportions = tuple(float(p) for p in self.class_proportions)
        if self.num_classes < 2:
            raise ConfigurationError("need at least 2 classes")
        if len(self.class_proportions) != self.num_classes:
            raise ConfigurationError(
                f"{len(self.class_proportions)} proportions for {self.num_classes} classes"
            )
        if abs(sum(self.class_proportions) - 1.0) > 1e-9:
            raise ConfigurationError(
                f"class proportions must sum to 1, got {sum(self.class_proportions)!r}"
            )
        if any(p < 0 for p in self.class_proportions):
            raise ConfigurationError("class proportions must be nonnegative")
        if self.n < self.num_classes:
            raise ConfigurationError("n must be at least the number of classes")
        if self.noise_scale < 0:
            raise ConfigurationError("noise_scale must be nonnegative")
        if self.feature_dim < 1 or self.group_block < 1:
            raise ConfigurationError("feature_dim and group_block must be positive")


def severity_bend(num_classes: int) -> float:
    """Latent severity where the primary feature direction saturates."""
    return float(max(1, num_classes - 2))


def synth_generate(config: SynthConfig) -> Dataset:
    """Generate samples whose features encode a latent severity scalar.

    Each sample draws a class c from the configured proportions and a latent
    severity z uniform in [c, c+1). Features embed z along two fixed seeded
    orthogonal unit directions plus isotropic Gaussian noise: the primary
    direction carries min(z, bend) and saturates at the rare-class boundary,
    and a secondary direction carries max(z - bend, 0). Ordering within the
    upper severity range is therefore only learnable from upper-range
    samples, which is what makes uncertainty-guided annotation pay off on
    imbalanced data. The two components sum back to z exactly, so a linear
    scorer on the informative plane recovers the full ordering. Groups are
    assigned in contiguous blocks to stand in for per-patient correlation.
    """
    ss = np.random.SeedSequence(config.seed)
    proj_rng, class_rng, latent_rng, noise_rng = (
        np.random.default_rng(child) for child in ss.spawn(4)
    )
    w = proj_rng.normal(size=config.feature_dim)
    w = w / np.linalg.norm(w)
    v = proj_rng.normal(size=config.feature_dim)
    v = v - (v @ w) * w
    v = v / np.linalg.norm(v)
    classes = class_rng.choice(
        config.num_classes, size=config.n, p=config.class_proportions
    )
    z = classes + latent_rng.random(config.n)
    bend = severity_bend(config.num_classes)
    low = np.minimum(z, bend)
    high = np.maximum(z - bend, 0.0)
    feats = low[:, None] * w[None, :] + high[:, None] * v[None, :]
    if config.noise_scale > 0:
        feats = feats + config.noise_scale * noise_rng.standard_normal(
            (config.n, config.feature_dim)
        )
    width = max(5, len(str(config.n)))
    samples = [
        Sample(
            id=f"s{i:0{width}d}",
            features=feats[i],
            ordinal_label=int(classes[i]),
            group=f"g{i // config.group_block:05d}",
        )
        for i in range(config.n)
    ]
    return Dataset(samples)


def split_groupwise(
    dataset: Dataset,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> DatasetSplit:
    """Partition whole groups into train/val/test near the given fractions.

    No group ever straddles two splits. Fractions off by rounding (for
    example summing to 0.999) are renormalized; anything further off is
    rejected.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigurationError(f"need three positive fractions, got {fractions}")
    total = float(sum(fractions))
    if abs(total - 1.0) > 5e-3:
        raise ConfigurationError(f"fractions must sum to 1, got {total}")
    fractions = tuple(f / total for f in fractions)

    members: dict[str, list[Sample]] = {}
    for s in dataset:
        members.setdefault(s.group, []).append(s)
    if len(members) < 3:
        raise ConfigurationError(f"need at least 3 groups, got {len(members)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(sorted(members))
    targets = [f * len(dataset) for f in fractions]
    assigned: list[list[Sample]] = [[], [], []]
    counts = [0, 0, 0]
    for group in order:
        deficits = [targets[k] - counts[k] for k in range(3)]
        k = int(np.argmax(deficits))
        assigned[k].extend(members[group])
        counts[k] += len(members[group])
    return DatasetSplit(
        train=Dataset(assigned[0]), val=Dataset(assigned[1]), test=Dataset(assigned[2])
    )


def relative_label(label_i: int, label_j: int) -> float:
    """Three-way comparison: 1 if i is more severe, 0.5 if equal, else 0."""
    if label_i > label_j:
        return 1.0
    if label_i == label_j:
        return 0.5
    return 0.0


def oracle_relative(pair, dataset: Dataset) -> float:
    """Ground-truth relative label for a pair of sample ids."""
    s_i = dataset.by_id.get(pair.id_i)
    s_j = dataset.by_id.get(pair.id_j)
    if s_i is None or s_j is None:
        raise OracleError(f"unknown sample in pair ({pair.id_i}, {pair.id_j})")
    if s_i.ordinal_label is None or s_j.ordinal_label is None:
        raise OracleError(f"pair ({pair.id_i}, {pair.id_j}) has unlabeled members")
    return relative_label(s_i.ordinal_label, s_j.ordinal_label)


def oracle_absolute(sample_id: str, dataset: Dataset) -> int:
    """Ground-truth ordinal class for one sample id."""
    s = dataset.by_id.get(sample_id)
    if s is None:
        raise OracleError(f"unknown sample id {sample_id!r}")
    if s.ordinal_label is None:
        raise OracleError(f"sample {sample_id!r} has no ordinal label")
    return s.ordinal_label


class SimulatedOracle:
    """Answers annotation queries from ground-truth labels and counts cost.

    Relative queries are counted per pair. Absolute queries are cached so
    each unique image is only charged once; repeat lookups are cache hits.
    An optional flip probability corrupts relative answers to model
    annotator disagreement (default 0: deterministic).
    """

    source = "sim"

    def __init__(self, dataset: Dataset, flip_probability: float = 0.0, seed: int = 0):
        if not 0.0 <= flip_probability <= 1.0:
            raise ConfigurationError("flip_probability must be in [0, 1]")
        self.dataset = dataset
        self.flip_probability = flip_probability
        self._rng = np.random.default_rng(seed)
        self.relative_queries = 0
        self.absolute_seen: set[str] = set()
        self.absolute_cache_hits = 0

    def annotate_pairs(self, pairs, round_index: int) -> list[float]:
        labels = []
        for pair in pairs:
            c = oracle_relative(pair, self.dataset)
            if self.flip_probability > 0.0 and self._rng.random() < self.flip_probability:
                c = self._flip(c)
            self.relative_queries += 1
            labels.append(c)
        return labels

    def _flip(self, c: float) -> float:
        if c == 0.5:
            return float(self._rng.choice((0.0, 1.0)))
        return 1.0 - c

    def absolute(self, sample_id: str) -> int:
        label = oracle_absolute(sample_id, self.dataset)
        if sample_id in self.absolute_seen:
            self.absolute_cache_hits += 1
        else:
            self.absolute_seen.add(sample_id)
        return label

    @property
    def n_absolute_unique(self) -> int:
        return len(self.absolute_seen)
