import pytest

from dyadengage.errors import NoVotes
from dyadengage.labels import (DEFAULT_LEVEL_MERGE, EXCLUDED, LabeledUtterance,
                               UtteranceLabels, consensus_labels, level_merge,
                               read_labels_jsonl, write_labels_jsonl)


def vote(**kwargs):
    return UtteranceLabels(**kwargs)


class TestConsensusLabels:
    def test_median_arousal(self):
        votes = [vote(arousal=v) for v in (2, 3, 3, 4, 5)]
        assert consensus_labels(votes).arousal == 3

    def test_median_even_count_takes_lower(self):
        votes = [vote(engagement=v) for v in (2, 3)]
        assert consensus_labels(votes).engagement == 2

    def test_mode_emotion(self):
        votes = [vote(emotion=e) for e in ("happy", "happy", "sadness")]
        assert consensus_labels(votes).emotion == "happy"

    def test_tied_mode_excluded(self):
        votes = [vote(emotion=e) for e in ("happy", "sadness")]
        assert consensus_labels(votes).emotion == EXCLUDED

    def test_no_votes(self):
        with pytest.raises(NoVotes):
            consensus_labels([])

    def test_mixed_fields(self):
        votes = [vote(emotion="interest", arousal=4, valence=3, engagement=5),
                 vote(emotion="interest", arousal=2, valence=3, engagement=4),
                 vote(emotion="boredom", arousal=3, valence=1, engagement=4)]
        merged = consensus_labels(votes)
        assert merged.emotion == "interest"
        assert merged.arousal == 3
        assert merged.valence == 3
        assert merged.engagement == 4
        assert len(merged.votes) == 3


class TestLevelMerge:
    @pytest.mark.parametrize("label,expected", [(1, 1), (2, 1), (3, 2), (4, 3), (5, 3)])
    def test_default_scheme(self, label, expected):
        assert level_merge(label) == expected

    def test_custom_scheme(self):
        scheme = {1: 1, 2: 2, 3: 2, 4: 2, 5: 3}
        assert level_merge(4, scheme) == 2

    def test_label_outside_scheme(self):
        with pytest.raises(ValueError):
            level_merge(6)

    def test_default_total_on_domain(self):
        assert sorted(DEFAULT_LEVEL_MERGE) == [1, 2, 3, 4, 5]


class TestLabelValidation:
    def test_out_of_scale_rejected(self):
        with pytest.raises(ValueError):
            UtteranceLabels(arousal=6)

    def test_unknown_emotion_rejected(self):
        with pytest.raises(ValueError):
            UtteranceLabels(emotion="confused")

    def test_excluded_is_allowed(self):
        assert UtteranceLabels(emotion=EXCLUDED).emotion == EXCLUDED


class TestLabelFiles:
    def test_jsonl_round_trip(self, tmp_path):
        utterances = [
            LabeledUtterance(dialogue_id="d1", speaker="A", utterance_id=0,
                             start_sample=0, end_sample=4000,
                             labels=UtteranceLabels(emotion="happy", arousal=4,
                                                    valence=4, engagement=5)),
            LabeledUtterance(dialogue_id="d1", speaker="B", utterance_id=0,
                             start_sample=4200, end_sample=8000,
                             labels=UtteranceLabels(arousal=2)),
        ]
        path = tmp_path / "labels.jsonl"
        write_labels_jsonl(path, utterances)
        back = read_labels_jsonl(path)
        assert len(back) == 2
        assert back[0].labels.engagement == 5
        assert back[1].speaker == "B" and back[1].labels.arousal == 2

    def test_votes_fold_to_consensus_on_read(self, tmp_path):
        labels = UtteranceLabels(votes=[vote(arousal=1), vote(arousal=3), vote(arousal=3)])
        u = LabeledUtterance(dialogue_id="d", speaker="A", utterance_id=0,
                             start_sample=0, end_sample=100, labels=labels)
        path = tmp_path / "votes.jsonl"
        write_labels_jsonl(path, [u])
        back = read_labels_jsonl(path)
        assert back[0].labels.arousal == 3
