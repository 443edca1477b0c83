"""WAV loading, framing, and energy-based utterance segmentation."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ClipTooShort, MalformedWav, SpanOutOfRange, UnsupportedFormat

WAVE_FORMAT_PCM = 1


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM signal with amplitudes normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int
    channel_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.samples.size and (np.max(np.abs(self.samples)) > 1.0 + 1e-12):
            raise ValueError("samples must lie in [-1, 1]")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FrameSeries:
    """Fixed-length analysis windows; frame k starts at sample k*hop."""

    frame_len: int
    hop: int
    frames: np.ndarray  # shape (n_frames, frame_len)

    def __len__(self):
        return len(self.frames)

    def start_of(self, k: int) -> int:
        return k * self.hop


@dataclass(frozen=True, order=True)
class UtteranceSpan:
    """Half-open sample range [start_sample, end_sample) spoken by one participant."""

    start_sample: int
    end_sample: int
    speaker: str = ""
    utterance_id: int = 0

    def __post_init__(self):
        if self.start_sample >= self.end_sample:
            raise ValueError("start_sample must precede end_sample")

    @property
    def n_samples(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class VadConfig:
    """Energy VAD with hysteresis; thresholds are dB below the clip's peak frame energy."""

    frame_ms: float = 25.0
    hop_ms: float = 10.0
    on_threshold_db: float = 25.0
    off_threshold_db: float = 35.0
    min_utterance_ms: float = 250.0
    min_gap_ms: float = 300.0

    def __post_init__(self):
        if self.off_threshold_db < self.on_threshold_db:
            raise ValueError("off threshold must be at or below the on threshold (more dB below peak)")


def load_audio(path, channel_id: str = "") -> AudioClip:
    """Parse a RIFF/WAVE file containing mono 8- or 16-bit linear PCM.

    Integer samples are normalized by 2**(bits-1); 8-bit data is unsigned and
    centered at 128 before normalization.

    Raises MalformedWav for container damage and UnsupportedFormat for
    compressed, multi-channel, or other-bit-depth audio.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 12:
        raise MalformedWav(f"{path}: file too small for a RIFF header")
    if data[0:4] != b"RIFF":
        raise MalformedWav(f"{path}: missing RIFF magic")
    if data[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: missing WAVE form type")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise MalformedWav(f"{path}: chunk {chunk_id!r} truncated")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedWav(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise MalformedWav(f"{path}: no fmt chunk")
    if payload is None:
        raise MalformedWav(f"{path}: no data chunk")

    audio_format, n_channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != WAVE_FORMAT_PCM:
        raise UnsupportedFormat(f"{path}: compressed audio (format tag {audio_format})")
    if n_channels != 1:
        raise UnsupportedFormat(f"{path}: expected mono, got {n_channels} channels")
    if bits not in (8, 16):
        raise UnsupportedFormat(f"{path}: unsupported bit depth {bits}")
    if sample_rate <= 0:
        raise MalformedWav(f"{path}: non-positive sample rate")

    if bits == 16:
        usable = len(payload) - (len(payload) % 2)
        raw = np.frombuffer(payload[:usable], dtype="<i2").astype(np.float64)
        samples = raw / 32768.0
    else:
        raw = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
        samples = (raw - 128.0) / 128.0

    return AudioClip(samples=samples, sample_rate_hz=sample_rate, channel_id=channel_id)


def _frame_len_samples(sr: int, ms: float) -> int:
    return max(1, int(round(sr * ms / 1000.0)))


def frame_signal(clip: AudioClip, frame_ms: float = 25.0, hop_ms: float = 10.0) -> FrameSeries:
    """Slice the clip into overlapping frames; trailing partial frame discarded."""
    if hop_ms <= 0 or frame_ms < hop_ms:
        raise ValueError("need frame_ms >= hop_ms > 0")
    frame_len = _frame_len_samples(clip.sample_rate_hz, frame_ms)
    hop = _frame_len_samples(clip.sample_rate_hz, hop_ms)
    n = len(clip.samples)
    if n < frame_len:
        raise ClipTooShort(f"{n} samples < frame of {frame_len}")
    n_frames = (n - frame_len) // hop + 1
    frames = np.stack([clip.samples[k * hop:k * hop + frame_len] for k in range(n_frames)])
    return FrameSeries(frame_len=frame_len, hop=hop, frames=frames)


def check_span(clip: AudioClip, span: UtteranceSpan):
    if span.start_sample < 0 or span.end_sample > len(clip.samples):
        raise SpanOutOfRange(
            f"span [{span.start_sample}, {span.end_sample}) outside clip of {len(clip.samples)}"
        )


def frame_energies(frames: np.ndarray) -> np.ndarray:
    """Per-frame energy as mean squared amplitude."""
    return np.mean(frames * frames, axis=1)


def segment_utterances(clip: AudioClip, vad: VadConfig | None = None) -> list[UtteranceSpan]:
    """Split a clip into utterance spans with an energy VAD.

    A hysteresis state machine walks per-frame energies (dB relative to the
    peak frame): speech starts when energy rises within ``on_threshold_db`` of
    the peak and ends when it falls below ``off_threshold_db``. Gaps shorter
    than ``min_gap_ms`` are merged, then regions shorter than
    ``min_utterance_ms`` are dropped.

    Span edges are snapped to [onset_frame_end - hop, offset_frame_end] so a
    boundary is wrong by at most one hop when the surrounding silence is
    quiet relative to the thresholds.
    """
    vad = vad or VadConfig()
    sr = clip.sample_rate_hz
    n = len(clip.samples)
    frame_len = _frame_len_samples(sr, vad.frame_ms)
    hop = _frame_len_samples(sr, vad.hop_ms)
    if n < frame_len:
        return []

    frames = frame_signal(clip, vad.frame_ms, vad.hop_ms)
    energies = frame_energies(frames.frames)
    peak = float(np.max(energies))
    if peak <= 0.0:
        return []

    on_level = peak * 10.0 ** (-vad.on_threshold_db / 10.0)
    off_level = peak * 10.0 ** (-vad.off_threshold_db / 10.0)

    regions = []  # (first_frame, last_frame) inclusive
    in_speech = False
    start = 0
    for k, e in enumerate(energies):
        if not in_speech and e >= on_level:
            in_speech = True
            start = k
        elif in_speech and e < off_level:
            regions.append((start, k - 1))
            in_speech = False
    if in_speech:
        regions.append((start, len(energies) - 1))

    # Frame region -> sample span. The onset frame contributes only its final
    # hop and the offset frame only its first, which bounds the edge error by
    # one hop for an isolated burst in quiet surroundings.
    spans = []
    for k0, k1 in regions:
        s = max(0, k0 * hop + frame_len - hop)
        e = min(n, (k1 + 1) * hop)
        if e > s:
            spans.append((s, e))

    min_gap = int(round(sr * vad.min_gap_ms / 1000.0))
    merged: list[list[int]] = []
    for s, e in spans:
        if merged and s - merged[-1][1] < min_gap:
            merged[-1][1] = e
        else:
            merged.append([s, e])

    min_len = int(round(sr * vad.min_utterance_ms / 1000.0))
    out = []
    for s, e in merged:
        if e - s >= min_len:
            out.append(UtteranceSpan(start_sample=s, end_sample=e,
                                     speaker=clip.channel_id, utterance_id=len(out)))
    return out
