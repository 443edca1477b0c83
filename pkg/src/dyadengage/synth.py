"""Synthetic dyad corpora drawn from a ground-truth coupled model.

Joint engagement paths are sampled by normalizing the coupled transition
potential at each step (the four-factor product factorizes per chain given
both previous states), observation symbols come from the emission rows, and
feature vectors from per-symbol Gaussian clusters. Everything is driven by
one seeded generator, so a seed pins the corpus bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chmm import (MISSING, ChmmModel, DyadTimeline, TimelineStep,
                   chmm_from_json_dict, chmm_to_json_dict,
                   read_timelines_jsonl, timeline_to_json_dict)
from .errors import InvalidGeneratorConfig

SPEAKING_MODES = ("alternate", "both", "random")


def banded_stochastic(n: int, concentration: float) -> np.ndarray:
    """Row-stochastic matrix with weight exp(-concentration * |i - j|)."""
    idx = np.arange(n)
    m = np.exp(-concentration * np.abs(idx[:, None] - idx[None, :]))
    return m / m.sum(axis=1, keepdims=True)


def ring_stochastic(n: int, concentration: float, shift: int = 0) -> np.ndarray:
    """Row-stochastic circulant matrix peaked `shift` states above the row.

    Ring distance wraps level n back to level 1, which keeps the stationary
    distribution exactly uniform; a nonzero shift yields pursuit dynamics
    (each row pulls toward a level offset from its own).
    """
    idx = np.arange(n)
    d = np.abs((idx[None, :] - idx[:, None] - shift) % n)
    d = np.minimum(d, n - d)
    m = np.exp(-concentration * d)
    return m / m.sum(axis=1, keepdims=True)


def one_hot_centers(n_symbols: int, dim: int, spacing: float) -> np.ndarray:
    centers = np.zeros((n_symbols, dim))
    for k in range(n_symbols):
        centers[k, k % dim] = spacing
        centers[k, (k + 1) % dim] = 0.5 * spacing if n_symbols > dim else 0.0
    return centers


@dataclass
class GeneratorConfig:
    """Ground truth and sampling knobs for one synthetic corpus."""

    chmm: ChmmModel
    cluster_centers: np.ndarray          # (n_symbols, feat_dim)
    noise_scale: float = 0.45
    n_dialogues: int = 8
    n_steps: int = 100
    speaking: str = "random"
    obs_prob: float = 0.65               # per-chain speak probability in "random" mode
    step_seconds: float = 2.0

    def __post_init__(self):
        self.cluster_centers = np.asarray(self.cluster_centers, dtype=np.float64)
        validate_generator(self)

    @property
    def feature_dim(self) -> int:
        return self.cluster_centers.shape[1]


def validate_generator(cfg: GeneratorConfig):
    m = cfg.chmm
    if cfg.cluster_centers.ndim != 2 or cfg.cluster_centers.shape[0] != m.n_symbols:
        raise InvalidGeneratorConfig("cluster_centers must be (n_symbols, feat_dim)")
    if cfg.noise_scale < 0:
        raise InvalidGeneratorConfig("noise_scale must be non-negative")
    if cfg.n_dialogues < 0:
        raise InvalidGeneratorConfig("n_dialogues must be non-negative")
    if cfg.n_steps < 1:
        raise InvalidGeneratorConfig("n_steps must be positive")
    if cfg.speaking not in SPEAKING_MODES:
        raise InvalidGeneratorConfig(f"speaking must be one of {SPEAKING_MODES}")
    if not (0.0 < cfg.obs_prob <= 1.0):
        raise InvalidGeneratorConfig("obs_prob must be in (0, 1]")
    for name, mat in (("initial", m.initial), ("trans", m.trans),
                      ("cross", m.cross), ("emit", m.emit)):
        arr = np.asarray(mat)
        if np.any(arr < 0) or not np.allclose(arr.sum(axis=-1), 1.0, atol=1e-9):
            raise InvalidGeneratorConfig(f"chmm {name} rows must be stochastic")


def default_generator_config(n_states: int = 5, n_symbols: int = 5,
                             feat_dim: int = 8, n_dialogues: int = 8,
                             n_steps: int = 100, speaking: str = "random",
                             obs_prob: float = 0.7,
                             trans_concentration: float = 1.9,
                             cross_concentration: float = 3.5,
                             cross_shift: int = 1,
                             emit_concentration: float = 1.0,
                             center_spacing: float = 1.8,
                             noise_scale: float = 0.45) -> GeneratorConfig:
    """A responsive dyad: sticky within-chain dynamics plus a strong pull
    toward one level above the partner's previous level (pursuit coupling on
    the level ring), with noisy level emissions whose feature clusters are
    well separated. The pursuit keeps both chains moving and covering all
    levels while making the partner's history genuinely informative."""
    trans = ring_stochastic(n_states, trans_concentration)
    cross = ring_stochastic(n_states, cross_concentration, shift=cross_shift)
    emit = ring_stochastic(max(n_states, n_symbols), emit_concentration)[:n_states, :n_symbols]
    emit = emit / emit.sum(axis=1, keepdims=True)
    chmm = ChmmModel(
        n_states=n_states, n_symbols=n_symbols,
        initial=np.full((2, n_states), 1.0 / n_states),
        trans=np.stack([trans, trans]),
        cross=np.stack([cross, cross]),
        emit=np.stack([emit, emit]),
    )
    return GeneratorConfig(
        chmm=chmm,
        cluster_centers=one_hot_centers(n_symbols, feat_dim, center_spacing),
        noise_scale=noise_scale, n_dialogues=n_dialogues, n_steps=n_steps,
        speaking=speaking, obs_prob=obs_prob,
    )


@dataclass
class DyadRecord:
    """One dyad: gold-rich timeline plus per-step, per-chain features.

    Real corpora materialize into the same shape after feature extraction,
    so the pipeline treats synthetic and extracted data identically.
    """

    timeline: DyadTimeline
    features: np.ndarray     # (T, 2, feat_dim); NaN rows where that chain is silent


@dataclass
class DialogueCorpus:
    dialogues: list
    feature_dim: int
    generator_seed: int = 0
    split: dict = field(default_factory=dict)    # dialogue_id -> "train"/"test"


def _sample_row(rng: np.random.Generator, probs: np.ndarray) -> int:
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def synth_corpus(gen: GeneratorConfig, seed: int = 0) -> DialogueCorpus:
    """Sample dialogues from the generator; deterministic given the seed."""
    validate_generator(gen)
    rng = np.random.default_rng(seed)
    m = gen.chmm
    dialogues = []
    for d in range(gen.n_dialogues):
        states = np.zeros((gen.n_steps, 2), dtype=int)   # 0-based internally
        states[0, 0] = _sample_row(rng, m.initial[0])
        states[0, 1] = _sample_row(rng, m.initial[1])
        for t in range(1, gen.n_steps):
            i1, i2 = states[t - 1]
            # coupled potential factorizes per chain given both previous states
            states[t, 0] = _sample_row(rng, m.trans[0, i1] * m.cross[0, i2])
            states[t, 1] = _sample_row(rng, m.trans[1, i2] * m.cross[1, i1])

        steps = []
        features = np.full((gen.n_steps, 2, gen.feature_dim), np.nan)
        for t in range(gen.n_steps):
            if gen.speaking == "both":
                speakers = (0, 1)
            elif gen.speaking == "alternate":
                speakers = (t % 2,)
            else:
                speakers = tuple(c for c in (0, 1) if rng.random() < gen.obs_prob)
                if not speakers:
                    speakers = (t % 2,)  # a step always has at least one speaker
            obs = [MISSING, MISSING]
            for c in speakers:
                sym = _sample_row(rng, m.emit[c, states[t, c]])
                obs[c] = sym + 1
                features[t, c] = (gen.cluster_centers[sym]
                                  + gen.noise_scale * rng.standard_normal(gen.feature_dim))
            steps.append(TimelineStep(
                obs1=obs[0], obs2=obs[1],
                gold1=int(states[t, 0]) + 1, gold2=int(states[t, 1]) + 1,
                timestamp=t * gen.step_seconds,
            ))
        dialogues.append(DyadRecord(
            timeline=DyadTimeline(steps=steps, dialogue_id=f"synth-{d:03d}",
                                  speakers=("p1", "p2")),
            features=features,
        ))

    split = {dlg.timeline.dialogue_id: ("train" if i < (len(dialogues) + 1) // 2 else "test")
             for i, dlg in enumerate(dialogues)}
    return DialogueCorpus(dialogues=dialogues, feature_dim=gen.feature_dim,
                           generator_seed=seed, split=split)


# -- persistence --------------------------------------------------------------

def corpus_to_dir(corpus: DialogueCorpus, out_dir):
    """Write timelines as JSON-lines and features as one JSON file per corpus."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timelines.jsonl", "w") as fh:
        for dlg in corpus.dialogues:
            fh.write(json.dumps(timeline_to_json_dict(dlg.timeline), sort_keys=True) + "\n")
    features_doc = {
        "feature_dim": corpus.feature_dim,
        "generator_seed": corpus.generator_seed,
        "split": corpus.split,
        "features": {
            dlg.timeline.dialogue_id: [
                [None if np.isnan(dlg.features[t, c, 0]) else dlg.features[t, c].tolist()
                 for c in range(2)]
                for t in range(len(dlg.features))
            ]
            for dlg in corpus.dialogues
        },
    }
    with open(out / "features.json", "w") as fh:
        json.dump(features_doc, fh, sort_keys=True)
        fh.write("\n")


def corpus_from_dir(in_dir) -> DialogueCorpus:
    src = Path(in_dir)
    timelines = read_timelines_jsonl(src / "timelines.jsonl")
    with open(src / "features.json") as fh:
        doc = json.load(fh)
    dim = doc["feature_dim"]
    dialogues = []
    for tl in timelines:
        raw = doc["features"][tl.dialogue_id]
        feats = np.full((len(tl), 2, dim), np.nan)
        for t, pair in enumerate(raw):
            for c in range(2):
                if pair[c] is not None:
                    feats[t, c] = np.asarray(pair[c])
        dialogues.append(DyadRecord(timeline=tl, features=feats))
    return DialogueCorpus(dialogues=dialogues, feature_dim=dim,
                           generator_seed=doc.get("generator_seed", 0),
                           split=doc.get("split", {}))


def generator_to_json_dict(gen: GeneratorConfig) -> dict:
    return {
        "chmm": chmm_to_json_dict(gen.chmm),
        "cluster_centers": gen.cluster_centers.tolist(),
        "noise_scale": gen.noise_scale,
        "n_dialogues": gen.n_dialogues,
        "n_steps": gen.n_steps,
        "speaking": gen.speaking,
        "obs_prob": gen.obs_prob,
        "step_seconds": gen.step_seconds,
    }


def generator_from_json_dict(doc: dict) -> GeneratorConfig:
    return GeneratorConfig(
        chmm=chmm_from_json_dict(doc["chmm"]),
        cluster_centers=np.asarray(doc["cluster_centers"], dtype=np.float64),
        noise_scale=doc.get("noise_scale", 0.45),
        n_dialogues=doc.get("n_dialogues", 8),
        n_steps=doc.get("n_steps", 100),
        speaking=doc.get("speaking", "random"),
        obs_prob=doc.get("obs_prob", 0.65),
        step_seconds=doc.get("step_seconds", 2.0),
    )
