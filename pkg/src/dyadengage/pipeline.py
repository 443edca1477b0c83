"""End-to-end orchestration: manifests, timelines, decoding, evaluation.

A corpus - synthetic or extracted from audio - materializes into a
DialogueCorpus (per-dialogue timeline plus per-step features). From there the
three engagement estimators share one code path: a per-utterance classifier
("isolated SVM"), a per-chain HMM over its own utterance sequence, and the
coupled HMM over the full dyad timeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import VadConfig, load_audio, segment_utterances, UtteranceSpan
from .chmm import (MISSING, UNKNOWN, ChmmModel, DyadTimeline, HmmModel,
                   TimelineStep, train_chmm_supervised, train_hmm_supervised,
                   viterbi_coupled, viterbi_hmm)
from .errors import (AlphabetMismatch, DyadEngageError, LengthMismatch,
                     NotTwoSpeakers)
from .features import FeatureConfig, extract_features, read_features_csv
from .labels import read_labels_jsonl
from .selection import LabeledDataset
from .svm import SvmConfig, SvmModel, decision_matrix, train_multiclass
from .synth import DialogueCorpus, DyadRecord


# -- evaluation ---------------------------------------------------------------

@dataclass
class EvalReport:
    """Accuracy and confusion over steps whose gold state is known."""

    accuracy: float
    confusion: np.ndarray      # (L, L), rows gold, columns predicted, 1-based labels
    precision: list
    recall: list
    n: int
    labels: list = field(default_factory=list)

    @property
    def no_data(self) -> bool:
        return self.n == 0

    def to_json_dict(self) -> dict:
        return {
            "accuracy": None if self.no_data else self.accuracy,
            "n": self.n,
            "no_data": self.no_data,
            "labels": self.labels,
            "confusion": self.confusion.astype(int).tolist(),
            "precision": [None if np.isnan(p) else p for p in self.precision],
            "recall": [None if np.isnan(r) else r for r in self.recall],
        }


def _report_from_confusion(confusion: np.ndarray) -> EvalReport:
    n = int(confusion.sum())
    L = confusion.shape[0]
    diag = np.diag(confusion).astype(float)
    col = confusion.sum(axis=0).astype(float)
    row = confusion.sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), np.nan)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), np.nan)
    accuracy = float(diag.sum() / n) if n else float("nan")
    return EvalReport(accuracy=accuracy, confusion=confusion,
                      precision=[float(p) for p in precision],
                      recall=[float(r) for r in recall],
                      n=n, labels=list(range(1, L + 1)))


def evaluate(pred, gold, n_classes: int | None = None) -> EvalReport:
    """Compare a predicted state sequence against gold with UNKNOWN gaps.

    Steps whose gold is UNKNOWN are skipped; an all-UNKNOWN gold yields the
    no-data report (n = 0, accuracy NaN).
    """
    pred, gold = list(pred), list(gold)
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gold)} gold steps")
    known = [(p, g) for p, g in zip(pred, gold) if g is not UNKNOWN]
    L = n_classes or max([v for pair in known for v in pair], default=1)
    confusion = np.zeros((L, L), dtype=int)
    for p, g in known:
        confusion[g - 1, p - 1] += 1
    return _report_from_confusion(confusion)


def merge_reports(reports: list, n_classes: int | None = None) -> EvalReport:
    if not reports:
        L = n_classes or 1
        return _report_from_confusion(np.zeros((L, L), dtype=int))
    L = n_classes or max(r.confusion.shape[0] for r in reports)
    confusion = np.zeros((L, L), dtype=int)
    for r in reports:
        k = r.confusion.shape[0]
        confusion[:k, :k] += r.confusion
    return _report_from_confusion(confusion)


# -- timeline construction ----------------------------------------------------

@dataclass(frozen=True)
class UtteranceEvent:
    """One utterance in dialogue order, as consumed by build_timeline."""

    speaker: str
    start_time: float
    obs_level: int | None = None         # arousal level (predicted or gold)
    gold_engagement: int | None = None


def build_timeline(events: list, dialogue_id: str = "") -> DyadTimeline:
    """Merge two speakers' utterances into one dyad timeline.

    Events sort by start time, simultaneous starts resolving toward the lower
    speaker id; the lower speaker id becomes chain 1. Each step carries the
    speaking side's observation and gold while the silent side gets MISSING /
    UNKNOWN.
    """
    events = list(events)
    speakers = sorted({e.speaker for e in events})
    if len(speakers) != 2:
        raise NotTwoSpeakers(f"dialogue {dialogue_id!r} has speakers {speakers}")
    ordered = sorted(events, key=lambda e: (e.start_time, e.speaker))
    steps = []
    for e in ordered:
        chain = speakers.index(e.speaker)
        steps.append(TimelineStep(
            obs1=e.obs_level if chain == 0 else MISSING,
            obs2=e.obs_level if chain == 1 else MISSING,
            gold1=e.gold_engagement if chain == 0 else UNKNOWN,
            gold2=e.gold_engagement if chain == 1 else UNKNOWN,
            timestamp=e.start_time,
        ))
    return DyadTimeline(steps=steps, dialogue_id=dialogue_id,
                        speakers=(speakers[0], speakers[1]))


def fill_gold(timeline: DyadTimeline) -> DyadTimeline:
    """Hold each chain's last known gold state across silent steps.

    Steps before a chain's first labeled utterance take that first label.
    Used to densify real-data timelines for supervised coupled training.
    """
    g1 = [s.gold1 for s in timeline.steps]
    g2 = [s.gold2 for s in timeline.steps]

    def densify(g):
        first = next((v for v in g if v is not UNKNOWN), None)
        out, last = [], first
        for v in g:
            last = v if v is not UNKNOWN else last
            out.append(last)
        return out

    g1, g2 = densify(g1), densify(g2)
    steps = [TimelineStep(obs1=s.obs1, obs2=s.obs2, gold1=a, gold2=b,
                          timestamp=s.timestamp)
             for s, a, b in zip(timeline.steps, g1, g2)]
    return DyadTimeline(steps=steps, dialogue_id=timeline.dialogue_id,
                        speakers=timeline.speakers)


# -- manifest -----------------------------------------------------------------

@dataclass
class ManifestEntry:
    """One speaker-channel of one dialogue: audio (or features) plus metadata."""

    path: str
    speaker: str
    dialogue: str
    kind: str = "audio"              # "audio" | "features"
    group: str = ""
    span_path: str | None = None     # manual utterance spans (JSON-lines)
    split: str | None = None         # "train" | "test"


@dataclass
class CorpusManifest:
    entries: list
    labels_path: str | None = None
    split_policy: str = "by-dialogue"    # "by-dialogue" | "by-speaker" | "by-utterance"

    def __post_init__(self):
        by_dialogue: dict = {}
        for e in self.entries:
            by_dialogue.setdefault(e.dialogue, set()).add(e.speaker)
        for d, spk in by_dialogue.items():
            if len(spk) > 2:
                raise NotTwoSpeakers(f"dialogue {d!r} lists {len(spk)} speakers")

    def dialogues(self) -> list:
        seen = []
        for e in self.entries:
            if e.dialogue not in seen:
                seen.append(e.dialogue)
        return seen


def manifest_from_json_dict(doc: dict, base_dir=None) -> CorpusManifest:
    base = Path(base_dir) if base_dir else None

    def resolve(p):
        if p is None:
            return None
        return str((base / p) if base and not Path(p).is_absolute() else p)

    entries = [ManifestEntry(
        path=resolve(e["path"]), speaker=e["speaker"], dialogue=e["dialogue"],
        kind=e.get("kind", "audio"), group=e.get("group", ""),
        span_path=resolve(e.get("spans")), split=e.get("split"))
        for e in doc["entries"]]
    return CorpusManifest(entries=entries, labels_path=resolve(doc.get("labels")),
                          split_policy=doc.get("split_policy", "by-dialogue"))


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    manifest = manifest_from_json_dict(doc, base_dir=path.parent)
    for e in manifest.entries:
        if not Path(e.path).exists():
            raise DyadEngageError(f"manifest entry path not found: {e.path}")
    return manifest


def assign_splits(manifest: CorpusManifest, seed: int = 0,
                  train_fraction: float = 0.5) -> CorpusManifest:
    """Fill in missing train/test assignments according to the split policy.

    by-dialogue keeps conversations whole (speaker-independent for engagement
    decoding), by-speaker keeps each speaker's entries on one side, and
    by-utterance marks entries "both" so utterances split inside each file
    (speaker-dependent).
    """
    rng = np.random.default_rng(seed)
    if manifest.split_policy == "by-utterance":
        for e in manifest.entries:
            if e.split is None:
                e.split = "both"
        return manifest

    if manifest.split_policy == "by-speaker":
        keys = sorted({e.speaker for e in manifest.entries})
    else:
        keys = manifest.dialogues()
    keys = list(keys)
    order = rng.permutation(len(keys))
    n_train = int(round(train_fraction * len(keys)))
    side = {keys[order[i]]: ("train" if i < n_train else "test") for i in range(len(keys))}
    for e in manifest.entries:
        if e.split is None:
            e.split = side[e.speaker if manifest.split_policy == "by-speaker" else e.dialogue]
    return manifest


# -- materializing a manifest into a DialogueCorpus ---------------------------

def read_spans_jsonl(path) -> list:
    spans = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            spans.append(UtteranceSpan(
                start_sample=doc["start_sample"], end_sample=doc["end_sample"],
                speaker=doc.get("speaker", ""), utterance_id=doc.get("utterance_id", 0)))
    return spans


def materialize_corpus(manifest: CorpusManifest, feature_cfg: FeatureConfig | None = None,
                       vad: VadConfig | None = None) -> DialogueCorpus:
    """Extract (or load) per-utterance features and build dyad timelines.

    Each utterance becomes one timeline step: its gold arousal level is the
    step observation and its gold engagement the step's gold state. Gold
    states of the silent chain stay UNKNOWN here; training densifies them
    with fill_gold.
    """
    labels = read_labels_jsonl(manifest.labels_path) if manifest.labels_path else []
    label_key = {(u.dialogue_id, u.speaker, u.utterance_id): u.labels for u in labels}

    per_dialogue: dict = {}
    split_votes: dict = {}
    for entry in manifest.entries:
        rows = []
        if entry.kind == "features":
            for row in read_features_csv(entry.path):
                rows.append((row["utterance_id"], row["start_sample"], row["features"]))
            sr = 1.0
        else:
            clip = load_audio(entry.path, channel_id=entry.speaker)
            sr = float(clip.sample_rate_hz)
            if entry.span_path:
                spans = read_spans_jsonl(entry.span_path)
            else:
                spans = segment_utterances(clip, vad)
            for span in spans:
                rows.append((span.utterance_id, span.start_sample,
                             extract_features(clip, span, feature_cfg)))
        for utt_id, start, vec in rows:
            lab = label_key.get((entry.dialogue, entry.speaker, utt_id))
            per_dialogue.setdefault(entry.dialogue, []).append({
                "speaker": entry.speaker,
                "time": start / sr,
                "features": np.asarray(vec, dtype=np.float64),
                "arousal": lab.arousal if lab else None,
                "engagement": lab.engagement if lab else None,
            })
        side = entry.split or "test"
        if split_votes.setdefault(entry.dialogue, side) != side:
            raise DyadEngageError(
                f"dialogue {entry.dialogue!r} has entries on both split sides")

    dialogues = []
    dim = None
    for did in sorted(per_dialogue):
        events = sorted(per_dialogue[did], key=lambda r: (r["time"], r["speaker"]))
        speakers = sorted({r["speaker"] for r in events})
        if len(speakers) != 2:
            raise NotTwoSpeakers(f"dialogue {did!r} has speakers {speakers}")
        steps = []
        dim = dim or len(events[0]["features"])
        feats = np.full((len(events), 2, dim), np.nan)
        for t, r in enumerate(events):
            chain = speakers.index(r["speaker"])
            feats[t, chain] = r["features"]
            steps.append(TimelineStep(
                obs1=r["arousal"] if chain == 0 else MISSING,
                obs2=r["arousal"] if chain == 1 else MISSING,
                gold1=r["engagement"] if chain == 0 else UNKNOWN,
                gold2=r["engagement"] if chain == 1 else UNKNOWN,
                timestamp=r["time"],
            ))
        dialogues.append(DyadRecord(
            timeline=DyadTimeline(steps=steps, dialogue_id=did,
                                  speakers=(speakers[0], speakers[1])),
            features=feats))

    split = {did: split_votes.get(did, "test") for did in sorted(per_dialogue)}
    return DialogueCorpus(dialogues=dialogues, feature_dim=dim or 0, split=split)


# -- shared corpus helpers ----------------------------------------------------

def speaking_rows(record: DyadRecord, side: str | None = None,
                  step_split: np.ndarray | None = None):
    """Yield (t, chain, features, obs_symbol, gold_state) at speaking steps.

    step_split (T, 2) of "train"/"test" filters rows when a side is given;
    otherwise all speaking steps pass.
    """
    tl = record.timeline
    for t, step in enumerate(tl.steps):
        for chain, obs, gold in ((0, step.obs1, step.gold1), (1, step.obs2, step.gold2)):
            if obs is MISSING and np.all(np.isnan(record.features[t, chain])):
                continue
            if side is not None and step_split is not None and step_split[t, chain] != side:
                continue
            yield t, chain, record.features[t, chain], obs, gold


def chain_sequences(timeline: DyadTimeline, chain: int):
    """A chain's own utterance subsequence: (gold states, symbols, step indices)."""
    states, symbols, idx = [], [], []
    for t, step in enumerate(timeline.steps):
        obs = step.obs1 if chain == 0 else step.obs2
        gold = step.gold1 if chain == 0 else step.gold2
        if obs is not MISSING:
            states.append(gold)
            symbols.append(obs)
            idx.append(t)
    return states, symbols, idx


def _parity_masks(timeline: DyadTimeline):
    """Even own-sequence utterances are the train half, odd the test half."""
    train_mask = np.zeros(len(timeline.steps), dtype=bool)
    for chain in (0, 1):
        _states, _symbols, idx = chain_sequences(timeline, chain)
        for k, t in enumerate(idx):
            if k % 2 == 0:
                train_mask[t] = True
    return train_mask


def _restrict_record(record: DyadRecord, keep: np.ndarray) -> DyadRecord:
    steps = [s for s, k in zip(record.timeline.steps, keep) if k]
    tl = DyadTimeline(steps=steps, dialogue_id=record.timeline.dialogue_id,
                      speakers=record.timeline.speakers)
    return DyadRecord(timeline=tl, features=record.features[keep])


def _mask_gold(record: DyadRecord, keep: np.ndarray) -> DyadRecord:
    """Gold outside `keep` becomes UNKNOWN so evaluation skips those steps."""
    steps = [
        s if k else TimelineStep(obs1=s.obs1, obs2=s.obs2, gold1=UNKNOWN,
                                 gold2=UNKNOWN, timestamp=s.timestamp)
        for s, k in zip(record.timeline.steps, keep)
    ]
    tl = DyadTimeline(steps=steps, dialogue_id=record.timeline.dialogue_id,
                      speakers=record.timeline.speakers)
    return DyadRecord(timeline=tl, features=record.features)


def _corpus_sides(corpus: DialogueCorpus):
    """Train and test record lists honoring per-dialogue split values.

    "train"/"test" keep dialogues whole. "both" (the by-utterance SD policy)
    puts each chain's even-index utterances into training and evaluates the
    dialogue with gold visible only at the held-out odd-index steps.
    """
    train, test = [], []
    for rec in corpus.dialogues:
        side = corpus.split.get(rec.timeline.dialogue_id, "test")
        if side == "train":
            train.append(rec)
        elif side == "test":
            test.append(rec)
        elif side == "both":
            parity = _parity_masks(rec.timeline)
            train.append(_restrict_record(rec, parity))
            test.append(_mask_gold(rec, ~parity))
        else:
            raise DyadEngageError(f"unknown split value {side!r}")
    return train, test


# -- model training over a corpus ---------------------------------------------

def train_level_svm(train_records: list, cfg: SvmConfig | None = None,
                    target: str = "arousal") -> SvmModel:
    """Multiclass SVM on speaking-step features.

    target "arousal" learns the observation symbols (feeding the HMMs);
    "engagement" learns gold states directly (the isolated baseline).
    """
    X, y = [], []
    for rec in train_records:
        for _t, _c, vec, obs, gold in speaking_rows(rec):
            label = obs if target == "arousal" else gold
            if label is None:
                continue
            X.append(vec)
            y.append(int(label))
    data = LabeledDataset(features=np.asarray(X), labels=y)
    return train_multiclass(data, cfg, provenance={"trained_on": "train", "target": target})


def train_engagement_hmm(train_records: list, alpha: float = 1.0,
                         n_states: int | None = None,
                         n_symbols: int | None = None) -> HmmModel:
    """One HMM pooled over both chains' own utterance sequences."""
    seqs = []
    for rec in train_records:
        for chain in (0, 1):
            states, symbols, _ = chain_sequences(rec.timeline, chain)
            if states:
                seqs.append((states, symbols))
    return train_hmm_supervised(seqs, alpha=alpha, n_states=n_states, n_symbols=n_symbols)


def uncoupled_baseline(chmm: ChmmModel) -> ChmmModel:
    """The coupled model with its cross-participant influence removed.

    Replacing both cross matrices with uniform rows makes the joint decode
    factor into two independent per-chain decodes on the same dyad timeline,
    which is the multilevel-HMM baseline: identical transitions, emissions,
    and missing-observation handling, no interaction term.
    """
    S = chmm.n_states
    return ChmmModel(n_states=S, n_symbols=chmm.n_symbols,
                     initial=chmm.initial, trans=chmm.trans,
                     cross=np.full((2, S, S), 1.0 / S), emit=chmm.emit)


def train_engagement_chmm(train_records: list, alpha: float = 1.0,
                          n_states: int | None = None,
                          n_symbols: int | None = None) -> ChmmModel:
    timelines = [fill_gold(rec.timeline) for rec in train_records]
    return train_chmm_supervised(timelines, alpha=alpha,
                                 n_states=n_states, n_symbols=n_symbols)


def predict_symbols(record: DyadRecord, svm_model: SvmModel) -> dict:
    """SVM level predictions keyed by (t, chain) at speaking steps."""
    keys, rows = [], []
    for t, chain, vec, _obs, _gold in speaking_rows(record):
        keys.append((t, chain))
        rows.append(vec)
    if not rows:
        return {}
    values = decision_matrix(svm_model, np.asarray(rows))
    return {key: int(svm_model.classes[int(np.argmax(row))])
            for key, row in zip(keys, values)}


def predicted_timeline(record: DyadRecord, predictions: dict) -> DyadTimeline:
    """The record's timeline with observations replaced by SVM predictions."""
    steps = []
    for t, step in enumerate(record.timeline.steps):
        steps.append(TimelineStep(
            obs1=predictions.get((t, 0), MISSING),
            obs2=predictions.get((t, 1), MISSING),
            gold1=step.gold1, gold2=step.gold2,
            timestamp=step.timestamp,
        ))
    return DyadTimeline(steps=steps, dialogue_id=record.timeline.dialogue_id,
                        speakers=record.timeline.speakers)


# -- decoding + evaluation ----------------------------------------------------

def check_alphabets(svm_model: SvmModel, n_symbols: int):
    levels = sorted(int(c) for c in svm_model.classes)
    if levels != list(range(1, n_symbols + 1)):
        raise AlphabetMismatch(
            f"classifier levels {levels} vs observation alphabet 1..{n_symbols}")


def run_pipeline(corpus, svm_model: SvmModel, chmm_model: ChmmModel,
                 feature_cfg: FeatureConfig | None = None,
                 vad: VadConfig | None = None):
    """Decode every test dialogue with trained models and score against gold.

    corpus may be a CorpusManifest (features are extracted on the fly) or an
    already materialized DialogueCorpus. Returns (per-dialogue decode dict,
    merged EvalReport).
    """
    if isinstance(corpus, CorpusManifest):
        corpus = materialize_corpus(corpus, feature_cfg, vad)
    check_alphabets(svm_model, chmm_model.n_symbols)

    _train, test = _corpus_sides(corpus)
    decoded = {}
    reports = []
    for rec in test:
        preds = predict_symbols(rec, svm_model)
        tl = predicted_timeline(rec, preds)
        path1, path2 = viterbi_coupled(chmm_model, tl)
        gold1 = [s.gold1 for s in rec.timeline.steps]
        gold2 = [s.gold2 for s in rec.timeline.steps]
        rep = merge_reports([
            evaluate(path1, gold1, n_classes=chmm_model.n_states),
            evaluate(path2, gold2, n_classes=chmm_model.n_states),
        ], n_classes=chmm_model.n_states)
        decoded[rec.timeline.dialogue_id] = {
            "chain1": path1, "chain2": path2,
            "speakers": list(rec.timeline.speakers),
            "timestamps": [s.timestamp for s in rec.timeline.steps],
        }
        reports.append(rep)
    merged = merge_reports(reports, n_classes=chmm_model.n_states)
    return decoded, merged


@dataclass
class MethodComparison:
    """Engagement accuracy of the three estimators on one corpus."""

    reports: dict                       # name -> EvalReport
    decoded: dict = field(default_factory=dict)

    def accuracies(self) -> dict:
        return {name: rep.accuracy for name, rep in self.reports.items()}


def compare_methods(corpus: DialogueCorpus, svm_cfg: SvmConfig | None = None,
                    alpha: float = 1.0, n_states: int | None = None) -> MethodComparison:
    """Train and score isolated-SVM, uncoupled-HMM, and coupled-HMM estimators.

    All three predict each participant's engagement at that participant's own
    speaking steps and are scored there. The HMM baseline is the coupled model
    with its cross-influence removed (uncoupled_baseline), so the CHMM/HMM
    difference isolates what the interaction term contributes.
    """
    train, test = _corpus_sides(corpus)
    if not train or not test:
        raise DyadEngageError("method comparison needs both train and test dialogues")

    golds = [g for rec in train for g in
             [s.gold1 for s in rec.timeline.steps] + [s.gold2 for s in rec.timeline.steps]
             if g is not UNKNOWN]
    S = n_states or max(golds)
    symbols = [o for rec in train for s in rec.timeline.steps
               for o in (s.obs1, s.obs2) if o is not MISSING]
    O = max(symbols)

    svm_iso = train_level_svm(train, svm_cfg, target="engagement")
    svm_sym = train_level_svm(train, svm_cfg, target="arousal")
    chmm = train_engagement_chmm(train, alpha=alpha, n_states=S, n_symbols=O)
    hmm_baseline = uncoupled_baseline(chmm)
    check_alphabets(svm_sym, chmm.n_symbols)

    iso_reports, hmm_reports, chmm_reports = [], [], []
    decoded = {}
    for rec in test:
        sym_pred = predict_symbols(rec, svm_sym)
        iso_pred = predict_symbols(rec, svm_iso)

        tl = predicted_timeline(rec, sym_pred)
        path1, path2 = viterbi_coupled(chmm, tl)
        base1, base2 = viterbi_coupled(hmm_baseline, tl)

        # all methods scored at each chain's own utterance steps
        for chain, coupled_path, base_path in ((0, path1, base1), (1, path2, base2)):
            states, _symbols, idx = chain_sequences(rec.timeline, chain)
            if not idx:
                continue
            iso_seq = [iso_pred[(t, chain)] for t in idx]
            iso_reports.append(evaluate(iso_seq, states, n_classes=S))
            hmm_reports.append(evaluate([base_path[t] for t in idx], states, n_classes=S))
            chmm_reports.append(evaluate([coupled_path[t] for t in idx], states, n_classes=S))
        decoded[rec.timeline.dialogue_id] = {"chain1": path1, "chain2": path2}

    return MethodComparison(reports={
        "isolated_svm": merge_reports(iso_reports, n_classes=S),
        "hmm": merge_reports(hmm_reports, n_classes=S),
        "chmm": merge_reports(chmm_reports, n_classes=S),
    }, decoded=decoded)
