"""ReliefF feature weighting and per-group feature subsets.

Weights follow the multi-class ReliefF update: for each sampled instance the
k nearest same-class hits pull a feature's weight down by the mean scaled
difference, and the k nearest misses of every other class push it up,
weighted by that class's prior over 1 - P(own class). Feature values are
min-max scaled over the dataset internally, so a constant feature always
weighs exactly zero and weights stay within [-1, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientClassSize, KTooLarge, SingleClass
from .features import FEATURE_NAMES


@dataclass
class LabeledDataset:
    """Feature rows with class labels plus speaker and group bookkeeping."""

    features: np.ndarray                 # (n_rows, dim)
    labels: list                         # class label per row
    speaker_ids: list = field(default_factory=list)
    group_keys: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.labels) != len(self.features):
            raise ValueError("labels and features disagree on row count")
        if not self.speaker_ids:
            self.speaker_ids = [""] * len(self.labels)
        if not self.group_keys:
            self.group_keys = [""] * len(self.labels)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_set(self) -> list:
        seen = []
        for lab in self.labels:
            if lab not in seen:
                seen.append(lab)
        return seen


@dataclass(frozen=True)
class FeatureSubset:
    """Selected feature indices with their weights, best first."""

    indices: tuple
    weights: tuple
    name: str = ""

    def __post_init__(self):
        if len(self.indices) != len(set(self.indices)):
            raise ValueError("duplicate feature indices")
        if any(self.weights[i] < self.weights[i + 1] - 1e-12 for i in range(len(self.weights) - 1)):
            raise ValueError("weights must be non-increasing")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        return x[..., list(self.indices)]


def relieff_weights(data: LabeledDataset, k_neighbors: int = 10,
                    n_iters: int | None = None, seed: int = 0) -> np.ndarray:
    """Per-feature ReliefF weights in [-1, 1].

    n_iters=None (the default) walks every row once in dataset order; smaller
    values sample rows without replacement using the seed. Distances are
    Manhattan on the min-max scaled features; neighbour ties break toward the
    lower row index.
    """
    labels = np.asarray(data.labels)
    classes = data.class_set
    if len(classes) < 2:
        raise SingleClass("ReliefF needs at least two classes")
    n, dim = data.features.shape
    for c in classes:
        size = int(np.sum(labels == c))
        if size < k_neighbors + 1:
            raise InsufficientClassSize(
                f"class {c!r} has {size} rows, need >= {k_neighbors + 1}")

    lo = data.features.min(axis=0)
    rng_span = data.features.max(axis=0) - lo
    keep = rng_span > 0.0
    scaled = np.zeros_like(data.features)
    scaled[:, keep] = (data.features[:, keep] - lo[keep]) / rng_span[keep]

    priors = {c: float(np.sum(labels == c)) / n for c in classes}
    row_idx = {c: np.flatnonzero(labels == c) for c in classes}

    if n_iters is None or n_iters >= n:
        sampled = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        sampled = np.sort(rng.choice(n, size=n_iters, replace=False))
    m = len(sampled)

    weights = np.zeros(dim)
    for i in sampled:
        dists = np.sum(np.abs(scaled - scaled[i]), axis=1)
        own = labels[i]
        hits = row_idx[own][row_idx[own] != i]
        hit_order = hits[np.argsort(dists[hits], kind="stable")][:k_neighbors]
        weights -= np.mean(np.abs(scaled[hit_order] - scaled[i]), axis=0) / m
        for c in classes:
            if c == own:
                continue
            rows = row_idx[c]
            miss_order = rows[np.argsort(dists[rows], kind="stable")][:k_neighbors]
            factor = priors[c] / (1.0 - priors[own])
            weights += factor * np.mean(np.abs(scaled[miss_order] - scaled[i]), axis=0) / m
    return weights


def select_top_k(weights: np.ndarray, k: int, name: str = "") -> FeatureSubset:
    """The k highest-weight features; equal weights break toward the lower index."""
    weights = np.asarray(weights, dtype=np.float64)
    if k > len(weights):
        raise KTooLarge(f"k={k} exceeds dimension {len(weights)}")
    order = sorted(range(len(weights)), key=lambda i: (-weights[i], i))[:k]
    return FeatureSubset(indices=tuple(order), weights=tuple(float(weights[i]) for i in order),
                         name=name)


def partition_by_group(data: LabeledDataset) -> dict:
    """Split rows by group key, preserving row order inside each group."""
    groups: dict = {}
    for i, key in enumerate(data.group_keys):
        groups.setdefault(key, []).append(i)
    return {
        key: LabeledDataset(
            features=data.features[rows],
            labels=[data.labels[i] for i in rows],
            speaker_ids=[data.speaker_ids[i] for i in rows],
            group_keys=[data.group_keys[i] for i in rows],
        )
        for key, rows in groups.items()
    }


def _subset_from_names(names, subset_name: str) -> FeatureSubset:
    idx = tuple(FEATURE_NAMES.index(n) for n in names)
    ranks = tuple(float(len(names) - i) for i in range(len(names)))  # rank placeholders
    return FeatureSubset(indices=idx, weights=ranks, name=subset_name)


# Published top-7 arousal subsets, per gender, mapped onto the frozen feature
# order. Two entries have no exact slot here (F2 range; silent/non-silent
# frame ratio) and use the nearest available feature (F2 mean; non-silent
# frame ratio). Weights are rank placeholders, not ReliefF outputs.
MALE_AROUSAL_TOP7 = _subset_from_names(
    ("formant_f2", "pitch_range", "pitch_max", "energy_band_2k_up",
     "voiced_run_max_frames", "energy_delta_std", "energy_max"),
    "male_arousal_top7",
)

FEMALE_AROUSAL_TOP7 = _subset_from_names(
    ("pitch_mean", "pitch_delta_range", "voiced_run_mean_frames",
     "energy_band_0_200", "nonsilent_frame_ratio", "pitch_max", "energy_max"),
    "female_arousal_top7",
)

NAMED_SUBSETS = {s.name: s for s in (MALE_AROUSAL_TOP7, FEMALE_AROUSAL_TOP7)}


def subset_to_json_dict(subset: FeatureSubset, feature_names=FEATURE_NAMES) -> dict:
    return {
        "name": subset.name,
        "indices": list(subset.indices),
        "weights": list(subset.weights),
        "feature_names": [feature_names[i] if i < len(feature_names) else f"f{i}"
                          for i in subset.indices],
    }


def subset_from_json_dict(doc: dict) -> FeatureSubset:
    return FeatureSubset(indices=tuple(doc["indices"]), weights=tuple(doc["weights"]),
                         name=doc.get("name", ""))


def save_weights_json(path, weights: np.ndarray, feature_names=None):
    names = list(feature_names) if feature_names else [f"f{i}" for i in range(len(weights))]
    doc = {"weights": dict(zip(names, (float(w) for w in weights)))}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
