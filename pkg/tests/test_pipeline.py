import json

import numpy as np
import pytest

from dyadengage.chmm import (MISSING, UNKNOWN, DyadTimeline, TimelineStep,
                             train_chmm_supervised)
from dyadengage.errors import (AlphabetMismatch, DyadEngageError,
                               LengthMismatch, NotTwoSpeakers)
from dyadengage.features import FEATURE_NAMES, write_features_csv
from dyadengage.labels import LabeledUtterance, UtteranceLabels, write_labels_jsonl
from dyadengage.pipeline import (CorpusManifest, ManifestEntry, UtteranceEvent,
                                 assign_splits, build_timeline, compare_methods,
                                 evaluate, fill_gold, load_manifest,
                                 manifest_from_json_dict, materialize_corpus,
                                 merge_reports, run_pipeline, train_level_svm)
from dyadengage.selection import LabeledDataset
from dyadengage.svm import SvmConfig, train_multiclass
from dyadengage.synth import default_generator_config, synth_corpus

from conftest import SR, build_wav_bytes, tone


class TestEvaluate:
    def test_identity(self):
        report = evaluate([1, 2, 3], [1, 2, 3])
        assert report.accuracy == 1.0
        assert report.n == 3

    def test_all_unknown_gold(self):
        report = evaluate([1, 2], [UNKNOWN, UNKNOWN], n_classes=3)
        assert report.n == 0
        assert report.no_data
        assert np.isnan(report.accuracy)
        assert report.to_json_dict()["accuracy"] is None

    def test_partial_and_confusion_cell(self):
        report = evaluate([1, 2], [1, 3], n_classes=3)
        assert report.accuracy == 0.5
        assert report.confusion[2, 1] == 1  # gold 3 predicted as 2
        assert report.confusion[0, 0] == 1

    def test_unknown_steps_skipped(self):
        report = evaluate([1, 2, 1], [1, UNKNOWN, 2], n_classes=2)
        assert report.n == 2
        assert report.accuracy == 0.5

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            evaluate([1], [1, 2])

    def test_confusion_sums_to_n(self):
        rng = np.random.default_rng(0)
        pred = [int(v) + 1 for v in rng.integers(0, 4, 50)]
        gold = [int(v) + 1 if rng.random() < 0.8 else UNKNOWN
                for v in rng.integers(0, 4, 50)]
        report = evaluate(pred, gold, n_classes=4)
        assert report.confusion.sum() == report.n
        assert report.accuracy == pytest.approx(np.trace(report.confusion) / report.n)

    def test_merge_reports(self):
        a = evaluate([1, 1], [1, 2], n_classes=2)
        b = evaluate([2, 2], [2, 2], n_classes=2)
        merged = merge_reports([a, b])
        assert merged.n == 4
        assert merged.accuracy == pytest.approx(0.75)


class TestBuildTimeline:
    def test_merge_rule(self):
        events = [
            UtteranceEvent(speaker="A", start_time=0.0, obs_level=3, gold_engagement=4),
            UtteranceEvent(speaker="B", start_time=2.0, obs_level=1, gold_engagement=2),
            UtteranceEvent(speaker="A", start_time=5.0, obs_level=2, gold_engagement=3),
        ]
        tl = build_timeline(events, dialogue_id="d1")
        assert len(tl) == 3
        assert (tl.steps[0].obs1, tl.steps[0].obs2) == (3, MISSING)
        assert (tl.steps[1].obs1, tl.steps[1].obs2) == (MISSING, 1)
        assert (tl.steps[2].obs1, tl.steps[2].obs2) == (2, MISSING)
        assert tl.steps[0].gold2 is UNKNOWN
        assert tl.speakers == ("A", "B")

    def test_simultaneous_starts_order_by_speaker(self):
        events = [
            UtteranceEvent(speaker="B", start_time=1.0, obs_level=2),
            UtteranceEvent(speaker="A", start_time=1.0, obs_level=5),
        ]
        tl = build_timeline(events)
        assert tl.steps[0].obs1 == 5   # speaker A (chain 1) comes first
        assert tl.steps[1].obs2 == 2

    def test_one_speaker_rejected(self):
        events = [UtteranceEvent(speaker="A", start_time=0.0, obs_level=1)]
        with pytest.raises(NotTwoSpeakers):
            build_timeline(events)

    def test_three_speakers_rejected(self):
        events = [UtteranceEvent(speaker=s, start_time=float(i), obs_level=1)
                  for i, s in enumerate("ABC")]
        with pytest.raises(NotTwoSpeakers):
            build_timeline(events)


class TestFillGold:
    def test_holds_last_known_state(self):
        steps = [
            TimelineStep(obs1=1, gold1=2, timestamp=0.0),
            TimelineStep(obs2=1, gold2=3, timestamp=1.0),
            TimelineStep(obs1=2, gold1=4, timestamp=2.0),
        ]
        tl = fill_gold(DyadTimeline(steps=steps))
        assert [s.gold1 for s in tl.steps] == [2, 2, 4]
        assert [s.gold2 for s in tl.steps] == [3, 3, 3]  # backfilled then held

    def test_densified_timeline_trains(self):
        steps = [TimelineStep(obs1=1, gold1=1, timestamp=0.0),
                 TimelineStep(obs2=2, gold2=2, timestamp=1.0),
                 TimelineStep(obs1=1, gold1=2, timestamp=2.0)]
        tl = fill_gold(DyadTimeline(steps=steps))
        model = train_chmm_supervised([tl], alpha=1.0)
        assert model.n_states == 2


class TestManifest:
    def test_dialogue_speaker_limit(self):
        entries = [ManifestEntry(path="x.wav", speaker=s, dialogue="d")
                   for s in "ABC"]
        with pytest.raises(NotTwoSpeakers):
            CorpusManifest(entries=entries)

    def test_assign_splits_by_dialogue(self):
        entries = [ManifestEntry(path="p", speaker=s, dialogue=f"d{i}")
                   for i in range(4) for s in "AB"]
        manifest = CorpusManifest(entries=entries, split_policy="by-dialogue")
        manifest = assign_splits(manifest, seed=1)
        sides = {}
        for e in manifest.entries:
            sides.setdefault(e.dialogue, set()).add(e.split)
        assert all(len(v) == 1 for v in sides.values())
        values = [next(iter(v)) for v in sides.values()]
        assert values.count("train") == 2 and values.count("test") == 2

    def test_assign_splits_by_speaker(self):
        entries = [ManifestEntry(path="p", speaker=s, dialogue=f"d{i}")
                   for i, s in enumerate(["A", "B", "A", "B"])]
        manifest = CorpusManifest(entries=entries, split_policy="by-speaker")
        manifest = assign_splits(manifest, seed=0)
        by_speaker = {}
        for e in manifest.entries:
            by_speaker.setdefault(e.speaker, set()).add(e.split)
        assert all(len(v) == 1 for v in by_speaker.values())

    def test_by_utterance_marks_both(self):
        entries = [ManifestEntry(path="p", speaker="A", dialogue="d"),
                   ManifestEntry(path="p", speaker="B", dialogue="d")]
        manifest = CorpusManifest(entries=entries, split_policy="by-utterance")
        manifest = assign_splits(manifest, seed=0)
        assert all(e.split == "both" for e in manifest.entries)

    def test_missing_path_rejected(self, tmp_path):
        doc = {"entries": [{"path": "nope.wav", "speaker": "A", "dialogue": "d"},
                           {"path": "nope2.wav", "speaker": "B", "dialogue": "d"}]}
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(DyadEngageError):
            load_manifest(path)


def synthetic_models(corpus, n_states=5):
    from dyadengage.pipeline import (_corpus_sides, train_engagement_chmm,
                                     train_level_svm)
    train, _test = _corpus_sides(corpus)
    svm_sym = train_level_svm(train, target="arousal")
    chmm = train_engagement_chmm(train, n_states=n_states, n_symbols=5)
    return svm_sym, chmm


class TestRunPipeline:
    def test_zero_test_dialogues(self):
        corpus = synth_corpus(default_generator_config(n_dialogues=4, n_steps=40), seed=2)
        svm_sym, chmm = synthetic_models(corpus)
        corpus.split = {k: "train" for k in corpus.split}
        decoded, report = run_pipeline(corpus, svm_sym, chmm)
        assert decoded == {}
        assert report.n == 0 and report.no_data

    def test_alphabet_mismatch(self):
        corpus = synth_corpus(default_generator_config(n_dialogues=4, n_steps=40), seed=2)
        _svm, chmm = synthetic_models(corpus)
        rng = np.random.default_rng(0)
        X = np.vstack([k + 0.05 * rng.standard_normal((10, 2)) for k in range(3)])
        three_level = train_multiclass(
            LabeledDataset(features=X, labels=[k + 1 for k in range(3) for _ in range(10)]))
        with pytest.raises(AlphabetMismatch):
            run_pipeline(corpus, three_level, chmm)

    def test_synthetic_accuracy_beats_random(self):
        corpus = synth_corpus(default_generator_config(), seed=4)
        svm_sym, chmm = synthetic_models(corpus)
        decoded, report = run_pipeline(corpus, svm_sym, chmm)
        assert len(decoded) == 4
        assert report.accuracy > 0.2
        for paths in decoded.values():
            assert len(paths["chain1"]) == 100
            assert all(1 <= s <= 5 for s in paths["chain1"])

    def test_provenance_tags_on_models(self):
        corpus = synth_corpus(default_generator_config(n_dialogues=4, n_steps=40), seed=2)
        from dyadengage.pipeline import _corpus_sides
        train, _ = _corpus_sides(corpus)
        model = train_level_svm(train, target="arousal")
        assert model.provenance.get("trained_on") == "train"


class TestCompareMethods:
    def test_reports_structure(self):
        corpus = synth_corpus(default_generator_config(n_dialogues=4, n_steps=60), seed=6)
        comparison = compare_methods(corpus)
        assert set(comparison.reports) == {"isolated_svm", "hmm", "chmm"}
        for report in comparison.reports.values():
            assert report.n > 0
            assert 0.0 <= report.accuracy <= 1.0

    def test_needs_both_sides(self):
        corpus = synth_corpus(default_generator_config(n_dialogues=2, n_steps=30), seed=0)
        corpus.split = {k: "train" for k in corpus.split}
        with pytest.raises(DyadEngageError):
            compare_methods(corpus)


class TestMaterializeCorpus:
    @pytest.fixture
    def audio_manifest(self, tmp_path):
        def speech(seed):
            rng = np.random.default_rng(seed)
            pieces = []
            for k in range(3):
                pieces.append(np.zeros(int(0.45 * SR)))
                freq = 150 + 60 * k + 10 * seed
                pieces.append(tone(freq, 0.4, amplitude=0.7))
            pieces.append(np.zeros(int(0.45 * SR)))
            return np.concatenate(pieces)

        labels = []
        entries = []
        for i, speaker in enumerate(("alice", "bob")):
            samples = np.clip(speech(i), -1, 1)
            path = tmp_path / f"{speaker}.wav"
            path.write_bytes(build_wav_bytes((samples * 32767).astype(int)))
            entries.append({"path": f"{speaker}.wav", "speaker": speaker,
                            "dialogue": "d0", "split": "test"})
            for u in range(3):
                labels.append(LabeledUtterance(
                    dialogue_id="d0", speaker=speaker, utterance_id=u,
                    start_sample=0, end_sample=1,
                    labels=UtteranceLabels(arousal=(u % 3) + 1,
                                           engagement=(u % 5) + 1)))
        write_labels_jsonl(tmp_path / "labels.jsonl", labels)
        doc = {"entries": entries, "labels": "labels.jsonl"}
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(json.dumps(doc))
        return manifest_path

    def test_extracts_and_builds_timelines(self, audio_manifest):
        manifest = load_manifest(audio_manifest)
        corpus = materialize_corpus(manifest)
        assert len(corpus.dialogues) == 1
        rec = corpus.dialogues[0]
        assert len(rec.timeline) == 6  # 3 utterances per speaker
        assert corpus.feature_dim == len(FEATURE_NAMES)
        for step in rec.timeline.steps:
            assert (step.obs1 is not MISSING) != (step.obs2 is not MISSING)
        times = [s.timestamp for s in rec.timeline.steps]
        assert times == sorted(times)

    def test_feature_file_entries(self, tmp_path):
        rng = np.random.default_rng(1)
        for speaker in ("a", "b"):
            rows = [{"dialogue_id": "d", "speaker": speaker, "utterance_id": u,
                     "start_sample": u * 100, "end_sample": u * 100 + 50,
                     "features": rng.uniform(size=4)} for u in range(2)]
            write_features_csv(tmp_path / f"{speaker}.csv", rows,
                               names=[f"f{i}" for i in range(4)])
        labels = [LabeledUtterance(dialogue_id="d", speaker=s, utterance_id=u,
                                   start_sample=u * 100, end_sample=u * 100 + 50,
                                   labels=UtteranceLabels(arousal=u + 1, engagement=u + 1))
                  for s in ("a", "b") for u in range(2)]
        write_labels_jsonl(tmp_path / "labels.jsonl", labels)
        manifest = manifest_from_json_dict({
            "entries": [{"path": f"{s}.csv", "speaker": s, "dialogue": "d",
                         "kind": "features"} for s in ("a", "b")],
            "labels": "labels.jsonl",
        }, base_dir=tmp_path)
        corpus = materialize_corpus(manifest)
        assert corpus.feature_dim == 4
        assert len(corpus.dialogues[0].timeline) == 4
