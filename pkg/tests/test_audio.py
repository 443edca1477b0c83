import numpy as np
import pytest

from dyadengage.audio import (AudioClip, UtteranceSpan, VadConfig, frame_signal,
                              load_audio, segment_utterances)
from dyadengage.errors import ClipTooShort, MalformedWav, UnsupportedFormat

from conftest import SR, build_wav_bytes, tone


class TestLoadAudio:
    def test_16bit_sample_scaling(self, wav_file):
        clip = load_audio(wav_file([16384, -32768, 0, 32767]))
        assert clip.samples[0] == pytest.approx(0.5)
        assert clip.samples[1] == -1.0
        assert clip.samples[2] == 0.0
        assert clip.samples[3] == pytest.approx(32767 / 32768)

    def test_hand_built_zero_wav(self, wav_file):
        # 44-byte header + 100 zero samples at 8 kHz
        clip = load_audio(wav_file([0] * 100, sample_rate=8000))
        assert clip.sample_rate_hz == 8000
        assert len(clip.samples) == 100
        assert np.all(clip.samples == 0.0)

    def test_8bit_unsigned_centering(self, wav_file):
        clip = load_audio(wav_file([128, 255, 0], bits=8))
        assert clip.samples[0] == 0.0
        assert clip.samples[1] == pytest.approx(127 / 128)
        assert clip.samples[2] == -1.0

    def test_bad_riff_magic(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"JUNK" + build_wav_bytes([0] * 4)[4:])
        with pytest.raises(MalformedWav):
            load_audio(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "tiny.wav"
        path.write_bytes(b"RIFF\x00\x00")
        with pytest.raises(MalformedWav):
            load_audio(path)

    def test_missing_data_chunk(self, tmp_path):
        raw = build_wav_bytes([0] * 4)
        path = tmp_path / "nodata.wav"
        path.write_bytes(raw[:36])  # drop the data chunk entirely
        with pytest.raises(MalformedWav):
            load_audio(path)

    def test_extra_chunks_are_skipped(self, tmp_path):
        import struct
        raw = build_wav_bytes([100, -100], sample_rate=8000)
        header, rest = raw[:12], raw[12:]
        extra = b"LIST" + struct.pack("<I", 6) + b"notes\x00"
        path = tmp_path / "extra.wav"
        path.write_bytes(header + extra + rest)
        clip = load_audio(path)
        assert len(clip.samples) == 2

    def test_compressed_rejected(self, wav_file):
        with pytest.raises(UnsupportedFormat):
            load_audio(wav_file([0] * 4, audio_format=7))

    def test_stereo_rejected(self, wav_file):
        with pytest.raises(UnsupportedFormat):
            load_audio(wav_file([0] * 4, channels=2))

    def test_24bit_rejected(self, wav_file):
        with pytest.raises(UnsupportedFormat):
            load_audio(wav_file([0] * 4, bits=24))


class TestFrameSignal:
    def test_count_800_samples(self):
        clip = AudioClip(samples=np.zeros(800), sample_rate_hz=8000)
        fs = frame_signal(clip, 25.0, 10.0)
        assert fs.frame_len == 200 and fs.hop == 80
        assert len(fs) == 8  # floor(600/80) + 1

    def test_exact_fit_single_frame(self):
        clip = AudioClip(samples=np.zeros(200), sample_rate_hz=8000)
        assert len(frame_signal(clip, 25.0, 10.0)) == 1

    def test_too_short(self):
        clip = AudioClip(samples=np.zeros(199), sample_rate_hz=8000)
        with pytest.raises(ClipTooShort):
            frame_signal(clip, 25.0, 10.0)

    def test_frame_starts_exact(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, 1600)
        clip = AudioClip(samples=x, sample_rate_hz=8000)
        fs = frame_signal(clip, 25.0, 10.0)
        for k in range(len(fs)):
            assert fs.start_of(k) == k * fs.hop
            assert np.array_equal(fs.frames[k], x[k * fs.hop:k * fs.hop + fs.frame_len])


class TestSegmentUtterances:
    def test_all_zero_clip(self):
        clip = AudioClip(samples=np.zeros(2 * SR), sample_rate_hz=SR)
        assert segment_utterances(clip) == []

    def test_single_burst_within_one_hop(self):
        silence = np.zeros(int(0.75 * SR))
        sig = np.concatenate([silence, tone(300, 0.5), silence])
        clip = AudioClip(samples=sig, sample_rate_hz=SR)
        spans = segment_utterances(clip)
        assert len(spans) == 1
        hop = int(0.010 * SR)
        t0, t1 = len(silence), len(silence) + int(0.5 * SR)
        assert abs(spans[0].start_sample - t0) <= hop
        assert abs(spans[0].end_sample - t1) <= hop

    def test_two_bursts_stay_separate(self):
        sig = np.concatenate([tone(300, 0.5), np.zeros(SR), tone(300, 0.5)])
        clip = AudioClip(samples=sig, sample_rate_hz=SR)
        spans = segment_utterances(clip, VadConfig(min_gap_ms=300.0))
        assert len(spans) == 2

    def test_short_gap_merges(self):
        sig = np.concatenate([tone(300, 0.5), np.zeros(int(0.2 * SR)), tone(300, 0.5)])
        clip = AudioClip(samples=sig, sample_rate_hz=SR)
        spans = segment_utterances(clip, VadConfig(min_gap_ms=300.0))
        assert len(spans) == 1

    def test_short_burst_dropped(self):
        sig = np.concatenate([np.zeros(SR), tone(300, 0.1), np.zeros(SR)])
        clip = AudioClip(samples=sig, sample_rate_hz=SR)
        assert segment_utterances(clip) == []

    def test_spans_sorted_non_overlapping(self):
        rng = np.random.default_rng(5)
        pieces = []
        for _ in range(3):
            pieces.append(np.zeros(int(0.6 * SR)))
            pieces.append(tone(250, 0.4, amplitude=0.7) + 0.001 * rng.standard_normal(int(0.4 * SR)))
        pieces.append(np.zeros(int(0.6 * SR)))
        clip = AudioClip(samples=np.clip(np.concatenate(pieces), -1, 1), sample_rate_hz=SR)
        spans = segment_utterances(clip)
        assert len(spans) == 3
        for a, b in zip(spans, spans[1:]):
            assert a.end_sample <= b.start_sample
        assert [s.utterance_id for s in spans] == [0, 1, 2]

    def test_on_threshold_monotonicity(self):
        # a more permissive onset threshold never shrinks total voiced time
        rng = np.random.default_rng(9)
        sig = np.concatenate([
            np.zeros(SR), tone(200, 0.5, amplitude=0.9),
            0.02 * rng.standard_normal(SR), tone(350, 0.4, amplitude=0.3),
            np.zeros(SR),
        ])
        clip = AudioClip(samples=np.clip(sig, -1, 1), sample_rate_hz=SR)
        durations = []
        for on_db in (10.0, 20.0, 30.0, 40.0):
            spans = segment_utterances(clip, VadConfig(on_threshold_db=on_db,
                                                       off_threshold_db=max(on_db, 35.0)))
            durations.append(sum(s.n_samples for s in spans))
        assert durations == sorted(durations)

    def test_resegmentation_is_stable(self):
        sig = np.concatenate([np.zeros(SR), tone(220, 0.5), np.zeros(SR),
                              tone(300, 0.6), np.zeros(SR)])
        clip = AudioClip(samples=sig, sample_rate_hz=SR)
        spans = segment_utterances(clip)
        assert len(spans) == 2
        gap = np.zeros(int(0.5 * SR))
        rebuilt = [gap]
        for s in spans:
            rebuilt.append(clip.samples[s.start_sample:s.end_sample])
            rebuilt.append(gap)
        clip2 = AudioClip(samples=np.concatenate(rebuilt), sample_rate_hz=SR)
        assert len(segment_utterances(clip2)) == len(spans)


class TestTypes:
    def test_span_orders_by_start(self):
        with pytest.raises(ValueError):
            UtteranceSpan(start_sample=10, end_sample=10)

    def test_clip_validates_amplitude(self):
        with pytest.raises(ValueError):
            AudioClip(samples=np.array([1.5]), sample_rate_hz=8000)

    def test_vad_threshold_ordering(self):
        with pytest.raises(ValueError):
            VadConfig(on_threshold_db=30.0, off_threshold_db=20.0)
