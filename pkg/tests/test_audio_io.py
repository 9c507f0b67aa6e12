import struct
import wave

import numpy as np
import pytest

from wavegap.audio_io import (
    WavFormatError,
    read_wav,
    read_wav_mono,
    read_wav_segment,
    write_wav,
)
from wavegap.dsp import Waveform


def test_mono_roundtrip(tmp_path):
    x = np.linspace(-0.9, 0.9, 1000)
    path = tmp_path / "x.wav"
    write_wav(path, Waveform(x, 16000))
    channels, rate = read_wav(path)
    assert rate == 16000
    assert channels.shape == (1, 1000)
    assert np.allclose(channels[0], x, atol=1.0 / 32767)


def test_stereo_roundtrip(tmp_path):
    left = np.linspace(-0.5, 0.5, 64)
    right = -left
    path = tmp_path / "st.wav"
    write_wav(path, np.stack([left, right]), 44100)
    channels, rate = read_wav(path)
    assert channels.shape == (2, 64)
    assert np.allclose(channels[0], left, atol=1e-3)
    assert np.allclose(channels[1], right, atol=1e-3)
    mono = read_wav_mono(path)
    assert np.allclose(mono.samples, 0.0, atol=1e-3)


def test_fractional_rate_rounded_at_write(tmp_path):
    from fractions import Fraction

    path = tmp_path / "f.wav"
    write_wav(path, Waveform(np.zeros(10), Fraction(44100, 8)))
    _, rate = read_wav(path)
    assert rate == round(44100 / 8)


def test_clipping_out_of_range_values(tmp_path):
    path = tmp_path / "c.wav"
    write_wav(path, np.array([2.0, -2.0]), 8000)
    channels, _ = read_wav(path)
    assert channels[0, 0] == pytest.approx(1.0, abs=1e-4)
    assert channels[0, 1] == pytest.approx(-32768 / 32767, abs=1e-4)


def test_rejects_non_pcm_format(tmp_path):
    # hand-built RIFF header with wFormatTag = 0x0055 (mp3)
    path = tmp_path / "fake.wav"
    data = b"\x00" * 64
    fmt = struct.pack("<HHIIHH", 0x0055, 1, 8000, 8000, 1, 8)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(WavFormatError):
        read_wav(path)


def test_rejects_non_16bit(tmp_path):
    path = tmp_path / "w24.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(3)
        fh.setframerate(8000)
        fh.writeframes(b"\x00\x00\x00" * 8)
    with pytest.raises(WavFormatError, match="16-bit"):
        read_wav(path)


def test_segment_read_matches_slice(tmp_path):
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, 500)
    path = tmp_path / "s.wav"
    write_wav(path, x, 16000)
    full, _ = read_wav(path)
    seg = read_wav_segment(path, 100, 50)
    assert np.array_equal(seg, full[0, 100:150])


def test_segment_read_out_of_range(tmp_path):
    path = tmp_path / "s.wav"
    write_wav(path, np.zeros(100), 16000)
    with pytest.raises(ValueError, match="out of range"):
        read_wav_segment(path, 90, 20)


def test_write_requires_rate_for_bare_arrays(tmp_path):
    with pytest.raises(TypeError):
        write_wav(tmp_path / "x.wav", np.zeros(4))
