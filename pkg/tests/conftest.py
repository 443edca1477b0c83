import struct

import numpy as np
import pytest

SR = 8000


def build_wav_bytes(samples, bits=16, sample_rate=SR, channels=1, audio_format=1,
                    data_size=None):
    """Hand-assembled 44-byte-header RIFF/WAVE file."""
    if bits == 16:
        payload = b"".join(struct.pack("<h", int(v)) for v in samples)
    else:
        payload = bytes(int(v) & 0xFF for v in samples)
    if data_size is None:
        data_size = len(payload)
    block_align = channels * bits // 8
    byte_rate = sample_rate * block_align
    header = b"RIFF" + struct.pack("<I", 36 + data_size) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, audio_format, channels,
                                    sample_rate, byte_rate, block_align, bits)
    header += b"data" + struct.pack("<I", data_size)
    return header + payload


@pytest.fixture
def wav_file(tmp_path):
    def _write(samples, name="clip.wav", **kwargs):
        path = tmp_path / name
        path.write_bytes(build_wav_bytes(samples, **kwargs))
        return path
    return _write


def tone(freq_hz, duration_s, sr=SR, amplitude=0.8, phase=0.0):
    t = np.arange(int(duration_s * sr)) / sr
    return amplitude * np.sin(2 * np.pi * freq_hz * t + phase)


def resonator_vowel(f1, f2, duration_s, sr=SR, f0=100.0, radius=0.97):
    """Impulse train through two cascaded two-pole resonators; the known pole
    frequencies act as the formant oracle."""
    from scipy.signal import lfilter

    n = int(duration_s * sr)
    x = np.zeros(n)
    x[::int(round(sr / f0))] = 1.0
    for fc in (f1, f2):
        theta = 2 * np.pi * fc / sr
        a = [1.0, -2.0 * radius * np.cos(theta), radius ** 2]
        x = lfilter([1.0], a, x)
    return 0.8 * x / np.max(np.abs(x))
