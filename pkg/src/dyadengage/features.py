"""Per-utterance acoustic features: pitch, energy, duration, and formants.

Every utterance maps to a fixed 46-value vector whose order is frozen in
FEATURE_NAMES. Degenerate inputs (no voiced frames, fewer than two values
for a spread statistic) produce 0.0 sentinels so the vector is always finite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioClip, UtteranceSpan, check_span, frame_energies
from .errors import SpanOutOfRange

# Frozen output order. Derivatives are first differences per frame (not per
# second); both duration "ratio" features are fractions of the span total.
FEATURE_NAMES = (
    # pitch statistics over voiced frames
    "pitch_mean", "pitch_max", "pitch_min", "pitch_std", "pitch_range",
    "pitch_p25", "pitch_p75",
    # first difference of f0 across consecutive voiced frames in a run
    "pitch_delta_mean", "pitch_delta_max", "pitch_delta_min",
    "pitch_delta_std", "pitch_delta_range",
    "pitch_delta_abs_mean", "pitch_delta_abs_std",
    # voiced-run durations
    "voiced_duration_ratio", "voiced_run_mean_frames", "voiced_run_std_frames",
    "voiced_run_count", "voiced_frame_ratio", "voiced_run_max_frames",
    "voiced_run_peak_pitch_mean",
    # frame energy statistics and band split
    "energy_mean", "energy_std", "energy_max", "energy_median",
    "energy_band_0_200", "energy_band_200_300", "energy_band_300_500",
    "energy_band_500_1k", "energy_band_1k_2k", "energy_band_2k_up",
    # first difference of frame energy
    "energy_delta_mean", "energy_delta_std", "energy_delta_max",
    "energy_delta_median", "energy_delta_min",
    # non-silent-run durations
    "nonsilent_run_mean_frames", "nonsilent_run_std_frames",
    "nonsilent_frame_ratio", "nonsilent_run_max_frames",
    # LPC formants averaged over voiced frames
    "formant_f1", "formant_f2", "formant_f3",
    "formant_f1_bw", "formant_f2_bw", "formant_f3_bw",
)

N_FEATURES = len(FEATURE_NAMES)

BAND_EDGES_HZ = (0.0, 200.0, 300.0, 500.0, 1000.0, 2000.0)  # last band runs to Nyquist


@dataclass(frozen=True)
class PitchConfig:
    f0_min_hz: float = 75.0
    f0_max_hz: float = 500.0
    voicing_threshold: float = 0.45  # on the normalized autocorrelation peak
    frame_ms: float = 40.0
    hop_ms: float = 10.0


@dataclass(frozen=True)
class EnergyConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    silence_threshold_db: float = 25.0  # below the span's peak frame energy


@dataclass(frozen=True)
class FormantConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    lpc_order: int | None = None      # None -> sample_rate_khz + 2
    pre_emphasis: float = 0.97
    min_freq_hz: float = 50.0
    max_bandwidth_hz: float = 1000.0
    pitch: PitchConfig = field(default_factory=PitchConfig)


@dataclass(frozen=True)
class FeatureConfig:
    pitch: PitchConfig = field(default_factory=PitchConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    formant: FormantConfig = field(default_factory=FormantConfig)


@dataclass(frozen=True)
class PitchTrack:
    """Per-frame f0 in Hz (0 where unvoiced) plus the framing that produced it."""

    f0_hz: np.ndarray
    voiced: np.ndarray
    frame_len: int
    hop: int

    def __len__(self):
        return len(self.f0_hz)


def _span_frames(clip: AudioClip, span: UtteranceSpan, frame_ms: float, hop_ms: float):
    """Frames covering the span; empty when the span is shorter than a frame."""
    check_span(clip, span)
    sr = clip.sample_rate_hz
    frame_len = max(1, int(round(sr * frame_ms / 1000.0)))
    hop = max(1, int(round(sr * hop_ms / 1000.0)))
    x = clip.samples[span.start_sample:span.end_sample]
    if len(x) < frame_len:
        return np.empty((0, frame_len)), frame_len, hop
    n_frames = (len(x) - frame_len) // hop + 1
    frames = np.stack([x[k * hop:k * hop + frame_len] for k in range(n_frames)])
    return frames, frame_len, hop


def track_pitch(clip: AudioClip, span: UtteranceSpan, cfg: PitchConfig | None = None) -> PitchTrack:
    """Frame-wise f0 by the autocorrelation-peak method.

    Each frame is mean-removed, its normalized autocorrelation searched for
    the highest peak between the lags of f0_max and f0_min, and the peak lag
    refined by parabolic interpolation. A frame is voiced when the peak value
    reaches the voicing threshold; unvoiced frames report f0 = 0.
    """
    cfg = cfg or PitchConfig()
    frames, frame_len, hop = _span_frames(clip, span, cfg.frame_ms, cfg.hop_ms)
    sr = clip.sample_rate_hz
    n = len(frames)
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    if n == 0:
        return PitchTrack(f0_hz=f0, voiced=voiced, frame_len=frame_len, hop=hop)

    lag_min = max(2, int(np.floor(sr / cfg.f0_max_hz)))
    lag_max = min(frame_len - 2, int(np.ceil(sr / cfg.f0_min_hz)))
    if lag_max <= lag_min:
        return PitchTrack(f0_hz=f0, voiced=voiced, frame_len=frame_len, hop=hop)

    for k in range(n):
        x = frames[k] - np.mean(frames[k])
        r0 = float(np.dot(x, x))
        if r0 <= 0.0:
            continue
        # full autocorrelation via rfft, biased estimator normalized by r(0)
        nfft = 1
        while nfft < 2 * frame_len:
            nfft *= 2
        spec = np.fft.rfft(x, nfft)
        ac = np.fft.irfft(spec * np.conj(spec), nfft)[:frame_len]
        ac = ac / r0

        band = ac[lag_min:lag_max + 1]
        peak_rel = int(np.argmax(band))
        lag = lag_min + peak_rel
        peak = float(band[peak_rel])
        if peak < cfg.voicing_threshold:
            continue
        # parabolic refinement around the integer peak
        if 1 <= lag < frame_len - 1:
            rm, rc, rp = ac[lag - 1], ac[lag], ac[lag + 1]
            denom = rm - 2.0 * rc + rp
            if denom < 0.0:
                lag = lag + 0.5 * (rm - rp) / denom
        f0_k = sr / lag
        f0[k] = float(np.clip(f0_k, cfg.f0_min_hz, cfg.f0_max_hz))
        voiced[k] = True

    return PitchTrack(f0_hz=f0, voiced=voiced, frame_len=frame_len, hop=hop)


def _voiced_runs(voiced: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as (start, end) frame index pairs, end exclusive."""
    runs = []
    start = None
    for k, v in enumerate(voiced):
        if v and start is None:
            start = k
        elif not v and start is not None:
            runs.append((start, k))
            start = None
    if start is not None:
        runs.append((start, len(voiced)))
    return runs


def _std(values: np.ndarray) -> float:
    return float(np.std(values)) if len(values) >= 2 else 0.0


def _spread_stats(values: np.ndarray) -> tuple[float, float, float, float, float]:
    """mean, max, min, std, range with 0-sentinels on empty input."""
    if len(values) == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    vmax = float(np.max(values))
    vmin = float(np.min(values))
    return float(np.mean(values)), vmax, vmin, _std(values), vmax - vmin


def pitch_stats(track: PitchTrack) -> np.ndarray:
    """The 21 pitch, pitch-derivative, and voiced-duration features.

    Statistics run over voiced frames only; the derivative is the first
    difference of f0 between consecutive voiced frames inside one voiced run,
    in Hz per frame. A fully unvoiced track returns all zeros.
    """
    voiced_f0 = track.f0_hz[track.voiced]
    n_frames = len(track)
    out = np.zeros(21)

    if len(voiced_f0) > 0:
        vmax = float(np.max(voiced_f0))
        vmin = float(np.min(voiced_f0))
        out[0] = float(np.mean(voiced_f0))
        out[1] = vmax
        out[2] = vmin
        out[3] = _std(voiced_f0)
        out[4] = vmax - vmin
        out[5] = float(np.percentile(voiced_f0, 25))
        out[6] = float(np.percentile(voiced_f0, 75))

    runs = _voiced_runs(track.voiced)
    deltas = np.concatenate([np.diff(track.f0_hz[a:b]) for a, b in runs]) if runs else np.array([])
    out[7:12] = _spread_stats(deltas)
    if len(deltas) > 0:
        abs_d = np.abs(deltas)
        out[12] = float(np.mean(abs_d))
        out[13] = _std(abs_d)

    if runs:
        lens = np.array([b - a for a, b in runs], dtype=float)
        span_samples = (n_frames - 1) * track.hop + track.frame_len
        run_samples = sum((b - a - 1) * track.hop + track.frame_len for a, b in runs)
        out[14] = min(1.0, run_samples / span_samples)
        out[15] = float(np.mean(lens))
        out[16] = _std(lens)
        out[17] = float(len(runs))
        out[18] = len(voiced_f0) / n_frames
        out[19] = float(np.max(lens))
        out[20] = float(np.mean([np.max(track.f0_hz[a:b]) for a, b in runs]))

    return out


def _run_length_stats(mask: np.ndarray) -> tuple[float, float, float, float]:
    """mean, std, ratio-of-true, max over run lengths of a boolean mask."""
    runs = _voiced_runs(mask)
    if not runs:
        return 0.0, 0.0, 0.0, 0.0
    lens = np.array([b - a for a, b in runs], dtype=float)
    return float(np.mean(lens)), _std(lens), float(np.sum(mask)) / len(mask), float(np.max(lens))


def energy_features(clip: AudioClip, span: UtteranceSpan, cfg: EnergyConfig | None = None) -> np.ndarray:
    """The 19 energy, energy-derivative, and non-silent-duration features.

    Frame energy is the mean squared amplitude. Band energies come from the
    magnitude-squared spectrum of Hann-windowed frames, summed over the bins
    of each band (edges half-open, the final band reaching Nyquist) and
    averaged over frames. Non-silent frames sit within silence_threshold_db
    of the span's peak frame energy.
    """
    cfg = cfg or EnergyConfig()
    frames, _frame_len, _hop = _span_frames(clip, span, cfg.frame_ms, cfg.hop_ms)
    out = np.zeros(19)
    if len(frames) == 0:
        return out

    energies = frame_energies(frames)
    out[0] = float(np.mean(energies))
    out[1] = _std(energies)
    out[2] = float(np.max(energies))
    out[3] = float(np.median(energies))

    sr = clip.sample_rate_hz
    window = np.hanning(frames.shape[1])
    spec = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    freqs = np.fft.rfftfreq(frames.shape[1], d=1.0 / sr)
    edges = list(BAND_EDGES_HZ) + [sr / 2.0 + 1.0]
    for b in range(6):
        in_band = (freqs >= edges[b]) & (freqs < edges[b + 1])
        out[4 + b] = float(np.mean(np.sum(spec[:, in_band], axis=1))) if np.any(in_band) else 0.0

    deltas = np.diff(energies)
    if len(deltas) > 0:
        out[10] = float(np.mean(deltas))
        out[11] = _std(deltas)
        out[12] = float(np.max(deltas))
        out[13] = float(np.median(deltas))
        out[14] = float(np.min(deltas))

    peak = float(np.max(energies))
    if peak > 0.0:
        non_silent = energies > peak * 10.0 ** (-cfg.silence_threshold_db / 10.0)
        out[15:19] = _run_length_stats(non_silent)

    return out


def _levinson(r: np.ndarray, order: int) -> np.ndarray | None:
    """Levinson-Durbin recursion; returns LPC polynomial [1, a1..ap] or None."""
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    if err <= 0.0:
        return None
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        a[1:i + 1] = a[1:i + 1] + k * a[i - 1::-1][:i]
        err *= 1.0 - k * k
        if err <= 0.0:
            return None
    return a


def formant_features(clip: AudioClip, span: UtteranceSpan, cfg: FormantConfig | None = None) -> np.ndarray:
    """F1-F3 frequencies and bandwidths from LPC root angles.

    Per voiced frame the autocorrelation-method LPC polynomial is factored;
    complex roots in the upper half plane give candidate formants with
    frequency from the root angle and bandwidth from the radius. Frames
    yielding fewer than three candidates are skipped; a fully unvoiced span
    (or one with no usable frames) returns six zeros.
    """
    cfg = cfg or FormantConfig()
    sr = clip.sample_rate_hz
    pitch_cfg = PitchConfig(
        f0_min_hz=cfg.pitch.f0_min_hz, f0_max_hz=cfg.pitch.f0_max_hz,
        voicing_threshold=cfg.pitch.voicing_threshold,
        frame_ms=cfg.frame_ms, hop_ms=cfg.hop_ms,
    )
    track = track_pitch(clip, span, pitch_cfg)
    frames, _fl, _hop = _span_frames(clip, span, cfg.frame_ms, cfg.hop_ms)
    out = np.zeros(6)
    if len(frames) == 0 or not np.any(track.voiced):
        return out

    order = cfg.lpc_order or int(round(sr / 1000.0)) + 2
    window = np.hamming(frames.shape[1])
    nyquist = sr / 2.0
    triples = []
    for k in np.flatnonzero(track.voiced[:len(frames)]):
        x = frames[k]
        if cfg.pre_emphasis > 0.0:
            x = np.append(x[0], x[1:] - cfg.pre_emphasis * x[:-1])
        x = (x - np.mean(x)) * window
        full = np.correlate(x, x, mode="full")
        r = full[len(x) - 1:len(x) + order]
        r = r.copy()
        r[0] *= 1.0 + 1e-9
        a = _levinson(r, order)
        if a is None:
            continue
        roots = np.roots(a)
        roots = roots[np.imag(roots) > 0.0]
        if len(roots) == 0:
            continue
        freqs = np.angle(roots) * sr / (2.0 * np.pi)
        bws = -np.log(np.maximum(np.abs(roots), 1e-12)) * sr / np.pi
        keep = (freqs > cfg.min_freq_hz) & (freqs < nyquist - cfg.min_freq_hz) & (bws < cfg.max_bandwidth_hz)
        freqs, bws = freqs[keep], bws[keep]
        if len(freqs) < 3:
            continue
        idx = np.argsort(freqs)[:3]
        triples.append((freqs[idx], bws[idx]))

    if not triples:
        return out
    out[0:3] = np.mean([f for f, _ in triples], axis=0)
    out[3:6] = np.mean([b for _, b in triples], axis=0)
    return out


def extract_features(clip: AudioClip, span: UtteranceSpan, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Full 46-value feature vector in FEATURE_NAMES order."""
    cfg = cfg or FeatureConfig()
    check_span(clip, span)
    track = track_pitch(clip, span, cfg.pitch)
    vec = np.concatenate([
        pitch_stats(track),
        energy_features(clip, span, cfg.energy),
        formant_features(clip, span, cfg.formant),
    ])
    assert vec.shape == (N_FEATURES,)
    return vec


# -- export -----------------------------------------------------------------

def write_features_csv(path, rows: list[dict], names=FEATURE_NAMES):
    """Rows carry utterance metadata plus a 'features' vector; header is frozen."""
    meta = ("dialogue_id", "speaker", "utterance_id", "start_sample", "end_sample")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(meta) + list(names))
        for row in rows:
            vec = row["features"]
            writer.writerow([row.get(m, "") for m in meta] + [repr(float(v)) for v in vec])


def read_features_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_meta = 5
        if len(header) <= n_meta:
            raise ValueError(f"{path}: feature CSV header too short")
        rows = []
        for line in reader:
            rows.append({
                "dialogue_id": line[0],
                "speaker": line[1],
                "utterance_id": int(line[2]) if line[2] else 0,
                "start_sample": int(line[3]) if line[3] else 0,
                "end_sample": int(line[4]) if line[4] else 0,
                "features": np.array([float(v) for v in line[n_meta:]]),
            })
    return rows


def write_features_jsonl(path, rows: list[dict], names=FEATURE_NAMES):
    with open(path, "w") as fh:
        for row in rows:
            rec = {k: v for k, v in row.items() if k != "features"}
            rec["features"] = dict(zip(names, (float(v) for v in row["features"])))
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
