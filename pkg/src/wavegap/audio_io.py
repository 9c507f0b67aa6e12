"""16-bit PCM WAV reading and writing on top of the stdlib wave module."""

from __future__ import annotations

import wave
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np

from .dsp import Rate, Waveform, to_mono

_I16_SCALE = 32767.0


class WavFormatError(ValueError):
    """File is not an uncompressed 16-bit PCM WAV we can handle."""


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a PCM WAV into a float64 array shaped [channels, samples] in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getcomptype() != "NONE":
                raise WavFormatError(
                    f"{path}: compressed WAV ({fh.getcomptype()}/{fh.getcompname()}) is not supported"
                )
            if fh.getsampwidth() != 2:
                raise WavFormatError(
                    f"{path}: only 16-bit PCM is supported, got {8 * fh.getsampwidth()}-bit"
                )
            n_channels = fh.getnchannels()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not an uncompressed PCM WAV ({exc})") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _I16_SCALE
    return data.reshape(-1, n_channels).T.copy(), rate


def read_wav_mono(path) -> Waveform:
    """Read a WAV and average its channels down to mono."""
    channels, rate = read_wav(path)
    return to_mono(channels, rate)


def wav_num_samples(path) -> int:
    with wave.open(str(path), "rb") as fh:
        return fh.getnframes()


def read_wav_segment(path, offset: int, n: int) -> np.ndarray:
    """Read n mono samples starting at frame offset without loading the file.

    Stereo input is averaged to mono. Used by the streaming loader so
    memory stays bounded by the segments in flight, not by file sizes.
    """
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getcomptype() != "NONE" or fh.getsampwidth() != 2:
                raise WavFormatError(f"{path}: only uncompressed 16-bit PCM is supported")
            if offset < 0 or offset + n > fh.getnframes():
                raise ValueError(
                    f"{path}: segment [{offset}, {offset + n}) out of range for {fh.getnframes()} frames"
                )
            fh.setpos(offset)
            raw = fh.readframes(n)
            n_channels = fh.getnchannels()
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not an uncompressed PCM WAV ({exc})") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _I16_SCALE
    return data.reshape(-1, n_channels).mean(axis=1)


def write_wav(path, samples: Union[np.ndarray, Waveform], sample_rate_hz: Rate | None = None) -> None:
    """Write mono or multi-channel float samples as 16-bit PCM.

    Accepts a Waveform or a [samples] / [channels, samples] array with an
    explicit rate. Fractional rates are rounded here, at the file
    boundary, and nowhere else.
    """
    if isinstance(samples, Waveform):
        if sample_rate_hz is not None:
            raise TypeError("pass either a Waveform or samples + sample_rate_hz, not both")
        sample_rate_hz = samples.sample_rate_hz
        samples = samples.samples
    if sample_rate_hz is None:
        raise TypeError("sample_rate_hz is required when passing a bare array")
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim == 1:
        data = data[np.newaxis, :]
    if data.ndim != 2:
        raise ValueError(f"samples must be 1-D or [channels, samples], got shape {data.shape}")
    rate = int(round(float(Fraction(sample_rate_hz))))
    pcm = np.clip(np.round(data * _I16_SCALE), -32768, 32767).astype("<i2")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(pcm.shape[0])
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.T.tobytes())
