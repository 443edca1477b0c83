"""Utterance label records, labeler consensus, and level merging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import NoVotes

EMOTION_TYPES = ("hot_anger", "panic", "sadness", "happy", "interest",
                 "boredom", "no_emotion")

EXCLUDED = "EXCLUDED"

# 1-5 labels folded to 3 levels: low {1,2}, mid {3}, high {4,5}
DEFAULT_LEVEL_MERGE = {1: 1, 2: 1, 3: 2, 4: 3, 5: 3}


@dataclass
class UtteranceLabels:
    """Consensus (or single-labeler) labels for one utterance."""

    emotion: str | None = None           # one of EMOTION_TYPES or EXCLUDED
    arousal: int | None = None           # 1..5
    valence: int | None = None           # 1..5
    engagement: int | None = None        # 1..5
    votes: list = field(default_factory=list)   # optional per-labeler UtteranceLabels

    def __post_init__(self):
        for name in ("arousal", "valence", "engagement"):
            v = getattr(self, name)
            if v is not None and not (1 <= v <= 5):
                raise ValueError(f"{name} must be in 1..5, got {v}")
        if self.emotion is not None and self.emotion != EXCLUDED \
                and self.emotion not in EMOTION_TYPES:
            raise ValueError(f"unknown emotion type {self.emotion!r}")


def _median_low(values: list) -> int:
    """Median; for even counts the lower of the two central values."""
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def _mode_or_excluded(values: list):
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    winners = [v for v, c in counts.items() if c == best]
    return winners[0] if len(winners) == 1 else EXCLUDED


def consensus_labels(votes: list) -> UtteranceLabels:
    """Fold per-labeler votes into one record.

    Numeric labels take the median (lower value on even-count ties); the
    discrete type takes the mode, or EXCLUDED when the mode is tied.
    """
    votes = list(votes)
    if not votes:
        raise NoVotes("at least one labeler vote is required")

    def numeric(name):
        vals = [getattr(v, name) for v in votes if getattr(v, name) is not None]
        return _median_low(vals) if vals else None

    emotions = [v.emotion for v in votes if v.emotion is not None]
    return UtteranceLabels(
        emotion=_mode_or_excluded(emotions) if emotions else None,
        arousal=numeric("arousal"),
        valence=numeric("valence"),
        engagement=numeric("engagement"),
        votes=votes,
    )


def level_merge(label: int, scheme: dict | None = None) -> int:
    """Map a 1-5 level onto the coarser scheme (default 5 -> 3 levels)."""
    scheme = scheme or DEFAULT_LEVEL_MERGE
    if label not in scheme:
        raise ValueError(f"label {label} missing from merge scheme")
    return scheme[label]


# -- label files (JSON-lines, one utterance per record) ----------------------

@dataclass
class LabeledUtterance:
    """One utterance's identity, span, and labels inside a dialogue."""

    dialogue_id: str
    speaker: str
    utterance_id: int
    start_sample: int
    end_sample: int
    labels: UtteranceLabels


def _labels_to_dict(lab: UtteranceLabels) -> dict:
    doc = {"emotion": lab.emotion, "arousal": lab.arousal,
           "valence": lab.valence, "engagement": lab.engagement}
    if lab.votes:
        doc["votes"] = [_labels_to_dict(v) for v in lab.votes]
    return doc


def _labels_from_dict(doc: dict) -> UtteranceLabels:
    return UtteranceLabels(
        emotion=doc.get("emotion"), arousal=doc.get("arousal"),
        valence=doc.get("valence"), engagement=doc.get("engagement"),
        votes=[_labels_from_dict(v) for v in doc.get("votes", [])],
    )


def write_labels_jsonl(path, utterances: list):
    with open(path, "w") as fh:
        for u in utterances:
            doc = {"dialogue_id": u.dialogue_id, "speaker": u.speaker,
                   "utterance_id": u.utterance_id, "start_sample": u.start_sample,
                   "end_sample": u.end_sample}
            doc.update(_labels_to_dict(u.labels))
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_labels_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            labels = _labels_from_dict(doc)
            if labels.votes and labels.arousal is None and labels.emotion is None:
                labels = consensus_labels(labels.votes)
            out.append(LabeledUtterance(
                dialogue_id=doc.get("dialogue_id", ""),
                speaker=doc.get("speaker", ""),
                utterance_id=doc.get("utterance_id", 0),
                start_sample=doc.get("start_sample", 0),
                end_sample=doc.get("end_sample", 0),
                labels=labels,
            ))
    return out
