"""Deterministic signal processing: FIR design, filtering, decimation, STFT.

Everything here is a pure function over immutable inputs; nothing keeps
state, so concurrent use is safe. Sample rates are carried as exact
rationals (`fractions.Fraction`) whenever integer division would lose
precision, and only rounded when a file is written.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy.signal import firwin, fftconvolve

Rate = Union[int, Fraction]

FILTER_WINDOWS = ("hamming", "hann", "blackman")

DEFAULT_NUM_TAPS = 255
DEFAULT_FRAME_LEN = 512
DEFAULT_HOP_LEN = 128
DEFAULT_DB_FLOOR = -80.0


class NyquistError(ValueError):
    """Requested cutoff at or above the Nyquist frequency."""


def _normalize_rate(rate: Rate) -> Rate:
    if isinstance(rate, bool) or not isinstance(rate, (int, Fraction)):
        raise TypeError(f"sample rate must be an int or Fraction, got {type(rate).__name__}")
    if rate <= 0:
        raise ValueError(f"sample rate must be positive, got {rate}")
    if isinstance(rate, Fraction) and rate.denominator == 1:
        return int(rate)
    return rate


@dataclass(frozen=True)
class Waveform:
    """Mono signal: float64 samples (nominally in [-1, 1]) plus a sample rate."""

    samples: np.ndarray
    sample_rate_hz: Rate

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform samples must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", _normalize_rate(self.sample_rate_hz))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / float(self.sample_rate_hz)


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase FIR filter: odd, symmetric taps with unit DC gain."""

    taps: np.ndarray
    cutoff_hz: float
    design_window: str
    design_rate_hz: Rate

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.size % 2 == 0:
            raise ValueError(f"tap count must be odd, got {taps.size}")
        if not np.array_equal(taps, taps[::-1]):
            raise ValueError("taps are not symmetric about the center")
        dc = float(taps.sum())
        if abs(dc - 1.0) > 1e-3:
            raise ValueError(f"DC gain {dc} deviates from 1 by more than 1e-3")
        object.__setattr__(self, "taps", taps)

    @property
    def num_taps(self) -> int:
        return int(self.taps.size)

    def response_db(self, freqs_hz: Sequence[float]) -> np.ndarray:
        """Magnitude response in dB at the given frequencies (design rate)."""
        freqs = np.asarray(freqs_hz, dtype=np.float64)
        n = np.arange(self.num_taps)
        # Direct DTFT of the taps; dense grids stay cheap at desk scale.
        phase = np.exp(-2j * np.pi * np.outer(freqs / float(self.design_rate_hz), n))
        mag = np.abs(phase @ self.taps)
        return 20.0 * np.log10(np.maximum(mag, 1e-300))


@dataclass(frozen=True)
class Spectrogram:
    """dB magnitude STFT, frames x bins."""

    magnitudes_db: np.ndarray
    frame_len: int
    hop_len: int
    sample_rate_hz: Rate

    def __post_init__(self):
        mags = np.asarray(self.magnitudes_db, dtype=np.float64)
        if mags.ndim != 2:
            raise ValueError(f"magnitudes_db must be 2-D, got shape {mags.shape}")
        if not np.all(np.isfinite(mags)):
            raise ValueError("magnitudes_db contains non-finite values")
        object.__setattr__(self, "magnitudes_db", mags)

    @property
    def num_frames(self) -> int:
        return int(self.magnitudes_db.shape[0])

    @property
    def num_bins(self) -> int:
        return int(self.magnitudes_db.shape[1])

    def bin_frequencies_hz(self) -> np.ndarray:
        return np.arange(self.num_bins) * float(self.sample_rate_hz) / self.frame_len


def design_lowpass(
    cutoff_hz: float,
    sample_rate_hz: Rate,
    num_taps: int = DEFAULT_NUM_TAPS,
    window: str = "hamming",
) -> FirFilter:
    """Design a windowed-sinc lowpass filter.

    The cutoff must sit strictly below Nyquist; an even tap count is
    rejected because the symmetric, integer group delay of an odd-length
    filter is what keeps segmentation indices aligned downstream.
    """
    rate = _normalize_rate(sample_rate_hz)
    nyquist = float(rate) / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise NyquistError(
            f"cutoff {cutoff_hz} Hz must lie strictly between 0 and the "
            f"Nyquist frequency {nyquist} Hz at {rate} Hz sampling"
        )
    if num_taps < 3 or num_taps % 2 == 0:
        raise ValueError(f"num_taps must be an odd integer >= 3, got {num_taps}")
    if window not in FILTER_WINDOWS:
        raise ValueError(f"window must be one of {FILTER_WINDOWS}, got {window!r}")

    taps = firwin(num_taps, cutoff_hz, fs=float(rate), window=window)
    # Enforce exact symmetry, then renormalize so the DC gain is exactly 1.
    taps = (taps + taps[::-1]) / 2.0
    taps = taps / taps.sum()
    return FirFilter(taps=taps, cutoff_hz=float(cutoff_hz), design_window=window, design_rate_hz=rate)


def apply_filter(w: Waveform, f: FirFilter) -> Waveform:
    """Filter a waveform, compensating the (num_taps-1)/2 group delay.

    Output has the same length and rate as the input so sample indices
    (gap positions, segment offsets) stay aligned.
    """
    if w.sample_rate_hz != f.design_rate_hz:
        raise ValueError(
            f"filter designed for {f.design_rate_hz} Hz applied to a "
            f"{w.sample_rate_hz} Hz waveform"
        )
    if len(w) == 0:
        return w
    filtered = fftconvolve(w.samples, f.taps, mode="same")
    return Waveform(filtered, w.sample_rate_hz)


def downsample(w: Waveform, factor: int) -> Waveform:
    """Keep every factor-th sample; the caller is responsible for anti-aliasing.

    The new rate is rate/factor, kept exact as a Fraction when it is not
    an integer.
    """
    if isinstance(factor, bool) or not isinstance(factor, int):
        raise TypeError(f"factor must be an int, got {type(factor).__name__}")
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return w
    rate = _normalize_rate(Fraction(w.sample_rate_hz) / factor)
    return Waveform(w.samples[::factor], rate)


def to_mono(channels, sample_rate_hz: Rate) -> Waveform:
    """Average equal-length channels into a mono waveform."""
    rows = [np.asarray(c, dtype=np.float64) for c in channels]
    if not rows:
        raise ValueError("need at least one channel")
    lengths = {r.shape for r in rows}
    if any(r.ndim != 1 for r in rows) or len(lengths) != 1:
        raise ValueError(f"channels must be 1-D and equal length, got shapes {sorted(r.shape for r in rows)}")
    mono = np.mean(np.stack(rows, axis=0), axis=0)
    return Waveform(mono, sample_rate_hz)


def normalize(w: Waveform) -> Waveform:
    """Scale so the peak magnitude is exactly 1; all-zero input is unchanged."""
    if len(w) == 0:
        return w
    peak = float(np.max(np.abs(w.samples)))
    if peak == 0.0:
        return w
    return Waveform(w.samples / peak, w.sample_rate_hz)


def stft_magnitude_db(
    w: Waveform,
    frame_len: int = DEFAULT_FRAME_LEN,
    hop_len: int = DEFAULT_HOP_LEN,
    window: str = "hann",
    floor_db: float = DEFAULT_DB_FLOOR,
) -> Spectrogram:
    """dB magnitude spectrogram with a symmetric analysis window.

    Frame count is floor((n - frame_len)/hop_len) + 1; a signal shorter
    than one frame is zero-padded into a single frame. Values are clamped
    at floor_db so silence stays finite.
    """
    if hop_len < 1 or frame_len < hop_len:
        raise ValueError(f"need frame_len >= hop_len >= 1, got frame_len={frame_len} hop_len={hop_len}")
    x = w.samples
    if x.size < frame_len:
        x = np.pad(x, (0, frame_len - x.size))
    num_frames = (x.size - frame_len) // hop_len + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop_len][:num_frames]
    win = _analysis_window(window, frame_len)
    mags = np.abs(np.fft.rfft(frames * win, axis=1))
    floor_amp = 10.0 ** (floor_db / 20.0)
    db = 20.0 * np.log10(np.maximum(mags, floor_amp))
    return Spectrogram(db, frame_len=frame_len, hop_len=hop_len, sample_rate_hz=w.sample_rate_hz)


def _analysis_window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return np.hanning(n)
    if name == "hamming":
        return np.hamming(n)
    if name == "blackman":
        return np.blackman(n)
    raise ValueError(f"unknown analysis window {name!r}")
