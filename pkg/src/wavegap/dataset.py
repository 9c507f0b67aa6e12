"""Corpus handling: splits, gap/border segmentation, and streaming batches."""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import audio_io
from .dsp import Rate, Waveform, _normalize_rate

# Sub-stream tags mixed into SeedSequence entropy so the epoch schedule and
# the shuffle window draw from independent, reproducible streams.
_EPOCH_STREAM = 2
_WINDOW_STREAM = 3
_SYNTH_STREAM = 5


@dataclass(frozen=True)
class SegmentLayout:
    """Sample-count geometry of a training segment.

    A segment is [left context | gap | right context]; borders are the
    slices of context adjacent to the gap on each side, with the longer
    border feeding a decimated model branch.
    """

    total_len: int = 53248
    gap_len: int = 4096
    context_len: int = 24576
    border1_len: int = 8192
    border2_len: int = 24576
    long_branch_downsample: int = 4

    def __post_init__(self):
        if self.total_len != 2 * self.context_len + self.gap_len:
            raise ValueError(
                f"total_len must equal 2*context_len + gap_len: "
                f"{self.total_len} != 2*{self.context_len} + {self.gap_len}"
            )
        if not (0 < self.border1_len <= self.border2_len <= self.context_len):
            raise ValueError(
                f"need 0 < border1_len <= border2_len <= context_len, got "
                f"{self.border1_len}, {self.border2_len}, {self.context_len}"
            )
        if self.long_branch_downsample < 1:
            raise ValueError("long_branch_downsample must be >= 1")
        if self.border2_len % self.long_branch_downsample != 0:
            raise ValueError(
                f"border2_len {self.border2_len} not divisible by "
                f"long_branch_downsample {self.long_branch_downsample}"
            )
        if self.gap_len % self.long_branch_downsample != 0:
            raise ValueError(
                f"gap_len {self.gap_len} not divisible by "
                f"long_branch_downsample {self.long_branch_downsample}"
            )

    @property
    def gap_start(self) -> int:
        return self.context_len

    @property
    def gap_end(self) -> int:
        return self.context_len + self.gap_len

    @property
    def real1_len(self) -> int:
        return 2 * self.border1_len + self.gap_len

    @property
    def real2_len(self) -> int:
        return 2 * self.border2_len + self.gap_len

    @property
    def real2_ds_len(self) -> int:
        return self.real2_len // self.long_branch_downsample

    @property
    def border2_ds_len(self) -> int:
        return self.border2_len // self.long_branch_downsample

    def to_text(self) -> str:
        """key=value serialization stored beside checkpoints for provenance."""
        return "".join(
            f"{k}={getattr(self, k)}\n"
            for k in (
                "total_len",
                "gap_len",
                "context_len",
                "border1_len",
                "border2_len",
                "long_branch_downsample",
            )
        )

    @classmethod
    def from_text(cls, text: str) -> "SegmentLayout":
        fields: dict[str, int] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = int(value.strip())
        return cls(**fields)


def default_layout() -> SegmentLayout:
    """Full-scale geometry: 53248-sample segments with a 4096-sample gap."""
    return SegmentLayout()


def tiny_layout() -> SegmentLayout:
    """Desk-scale geometry for tests and demos."""
    return SegmentLayout(
        total_len=2560,
        gap_len=512,
        context_len=1024,
        border1_len=256,
        border2_len=1024,
        long_branch_downsample=4,
    )


@dataclass(frozen=True)
class Segment:
    """One training example cut from a waveform.

    Gap and borders are views into `full`, so they can never disagree
    with it.
    """

    layout: SegmentLayout
    full: np.ndarray
    source_file: str = ""
    offset: int = 0

    def __post_init__(self):
        full = np.asarray(self.full, dtype=np.float64)
        if full.shape != (self.layout.total_len,):
            raise ValueError(
                f"segment samples must have shape ({self.layout.total_len},), got {full.shape}"
            )
        object.__setattr__(self, "full", full)

    @property
    def gap(self) -> np.ndarray:
        return self.full[self.layout.gap_start : self.layout.gap_end]

    @property
    def borders1(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.layout.gap_start, self.layout.gap_end
        b = self.layout.border1_len
        return self.full[lo - b : lo], self.full[hi : hi + b]

    @property
    def borders2(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.layout.gap_start, self.layout.gap_end
        b = self.layout.border2_len
        return self.full[lo - b : lo], self.full[hi : hi + b]

    @property
    def real1(self) -> np.ndarray:
        left, right = self.borders1
        return np.concatenate([left, self.gap, right])

    @property
    def real2(self) -> np.ndarray:
        left, right = self.borders2
        return np.concatenate([left, self.gap, right])


@dataclass(frozen=True)
class DatasetSplit:
    """File-granular train/validation/test partition of a corpus."""

    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    durations_s: Mapping[str, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "validation", tuple(self.validation))
        object.__setattr__(self, "test", tuple(self.test))
        groups = (set(self.train), set(self.validation), set(self.test))
        total = sum(len(g) for g in groups)
        if len(groups[0] | groups[1] | groups[2]) != total:
            raise ValueError("split groups are not disjoint")

    def all_files(self) -> tuple[str, ...]:
        return self.train + self.validation + self.test


def split_corpus(
    files: Sequence[str],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    durations_s: Mapping[str, float] | None = None,
) -> DatasetSplit:
    """Seeded file-level split with largest-remainder count allocation.

    Files are never cut across splits; the same inputs and seed always
    produce the same partition.
    """
    files = list(files)
    if len(files) < 3:
        raise ValueError(f"need at least 3 files to build 3 splits, got {len(files)}")
    if len(set(files)) != len(files):
        raise ValueError("duplicate file identifiers in corpus")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be 3 positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got sum {sum(ratios)}")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(len(files))
    shuffled = [files[i] for i in order]

    exact = [len(files) * r for r in ratios]
    counts = [math.floor(e) for e in exact]
    leftovers = sorted(range(3), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in leftovers[: len(files) - sum(counts)]:
        counts[i] += 1

    n_train, n_val, _ = counts
    split_durations = None
    if durations_s is not None:
        split_durations = {
            "train": sum(durations_s[f] for f in shuffled[:n_train]),
            "validation": sum(durations_s[f] for f in shuffled[n_train : n_train + n_val]),
            "test": sum(durations_s[f] for f in shuffled[n_train + n_val :]),
        }
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        durations_s=split_durations,
    )


def segment(w: Waveform | np.ndarray, layout: SegmentLayout, offset: int, source_file: str = "") -> Segment:
    """Cut one segment at the given sample offset."""
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if offset < 0 or offset + layout.total_len > samples.size:
        raise ValueError(
            f"segment [{offset}, {offset + layout.total_len}) out of range for a "
            f"{samples.size}-sample waveform"
        )
    return Segment(layout, samples[offset : offset + layout.total_len], source_file, offset)


def segment_offsets(num_samples: int, layout: SegmentLayout, stride: int | None = None) -> list[int]:
    """Offsets of consecutive segments; non-overlapping unless a stride is given."""
    stride = layout.total_len if stride is None else stride
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return list(range(0, num_samples - layout.total_len + 1, stride))


class ArrayCorpus:
    """In-memory corpus keyed by file id; the desk-scale workhorse."""

    def __init__(self, waveforms: Mapping[str, Waveform]):
        if not waveforms:
            raise ValueError("corpus must contain at least one waveform")
        rates = {w.sample_rate_hz for w in waveforms.values()}
        if len(rates) != 1:
            raise ValueError(f"corpus mixes sample rates: {sorted(map(float, rates))}")
        self._waves = dict(waveforms)
        self._rate = next(iter(rates))

    @classmethod
    def from_waveforms(cls, waves: Sequence[Waveform], prefix: str = "synth") -> "ArrayCorpus":
        return cls({f"{prefix}_{i:03d}": w for i, w in enumerate(waves)})

    def file_ids(self) -> tuple[str, ...]:
        return tuple(self._waves)

    def sample_rate(self) -> Rate:
        return self._rate

    def num_samples(self, file_id: str) -> int:
        return len(self._waves[file_id])

    def duration_s(self, file_id: str) -> float:
        return self._waves[file_id].duration_s

    def read(self, file_id: str, offset: int, n: int) -> np.ndarray:
        w = self._waves[file_id]
        if offset < 0 or offset + n > len(w):
            raise ValueError(f"{file_id}: read [{offset}, {offset + n}) out of range for {len(w)} samples")
        return w.samples[offset : offset + n].copy()

    def waveform(self, file_id: str) -> Waveform:
        return self._waves[file_id]


class WavDirCorpus:
    """Corpus backed by WAV files under a root directory.

    Segment reads seek within the file, so iterating a huge corpus never
    holds more than the segments in flight.
    """

    def __init__(self, root, file_ids: Sequence[str] | None = None):
        self.root = Path(root)
        if file_ids is None:
            file_ids = sorted(p.relative_to(self.root).as_posix() for p in self.root.rglob("*.wav"))
        if not file_ids:
            raise ValueError(f"no WAV files under {self.root}")
        self._ids = tuple(file_ids)
        self._meta: dict[str, tuple[int, int]] = {}

    def _stat(self, file_id: str) -> tuple[int, int]:
        if file_id not in self._meta:
            import wave

            with wave.open(str(self.root / file_id), "rb") as fh:
                self._meta[file_id] = (fh.getnframes(), fh.getframerate())
        return self._meta[file_id]

    def file_ids(self) -> tuple[str, ...]:
        return self._ids

    def sample_rate(self, file_id: str | None = None) -> int:
        fid = file_id if file_id is not None else self._ids[0]
        return self._stat(fid)[1]

    def num_samples(self, file_id: str) -> int:
        return self._stat(file_id)[0]

    def duration_s(self, file_id: str) -> float:
        n, rate = self._stat(file_id)
        return n / rate

    def read(self, file_id: str, offset: int, n: int) -> np.ndarray:
        return audio_io.read_wav_segment(self.root / file_id, offset, n)

    def waveform(self, file_id: str) -> Waveform:
        return audio_io.read_wav_mono(self.root / file_id)


class BatchStream:
    """Lazy, deterministic iterator of Segment batches.

    File order reshuffles each epoch from a seed derived per epoch; refs
    pass through a seeded shuffle window of `window_size` before being
    materialized, one batch at a time, at emission. Peak resident
    segments are therefore bounded by the batch (plus the prefetch queue
    when enabled), well under the window_size + batch_size contract.
    """

    def __init__(
        self,
        corpus,
        files: Sequence[str],
        layout: SegmentLayout,
        batch_size: int,
        seed: int = 0,
        window_size: int = 64,
        stride: int | None = None,
        epochs: int | None = None,
        prefetch: bool = False,
        prefetch_depth: int = 2,
    ):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if window_size < 1:
            raise ValueError(f"window_size must be >= 1, got {window_size}")
        self.corpus = corpus
        self.files = tuple(files)
        self.layout = layout
        self.batch_size = batch_size
        self.seed = seed
        self.window_size = window_size
        self.stride = stride
        self.epochs = epochs
        self.prefetch = prefetch
        self.prefetch_depth = prefetch_depth

        self.batches_consumed = 0
        self.peak_resident_segments = 0
        self._resident = 0
        self._lock = threading.Lock()

        self._window_rng = np.random.default_rng(np.random.SeedSequence([seed, _WINDOW_STREAM]))
        self._buffer: list[tuple[str, int]] = []
        self._schedule = self._ref_schedule()
        self._exhausted = False
        self._queue: queue.Queue | None = None
        self._thread: threading.Thread | None = None

    # -- deterministic (file, offset) schedule ------------------------------

    def _epoch_refs(self, epoch: int) -> Iterator[tuple[str, int]]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _EPOCH_STREAM, epoch]))
        for i in rng.permutation(len(self.files)):
            fid = self.files[i]
            offsets = segment_offsets(self.corpus.num_samples(fid), self.layout, self.stride)
            for j in rng.permutation(len(offsets)):
                yield fid, offsets[j]

    def _ref_schedule(self) -> Iterator[tuple[str, int]]:
        epoch = 0
        while self.epochs is None or epoch < self.epochs:
            produced = False
            for ref in self._epoch_refs(epoch):
                produced = True
                yield ref
            if not produced:
                return
            epoch += 1

    def _next_ref(self) -> tuple[str, int] | None:
        while not self._exhausted and len(self._buffer) < self.window_size:
            try:
                self._buffer.append(next(self._schedule))
            except StopIteration:
                self._exhausted = True
        if not self._buffer:
            return None
        idx = int(self._window_rng.integers(len(self._buffer)))
        return self._buffer.pop(idx)

    # -- residency accounting ------------------------------------------------

    def _track_load(self, n: int = 1) -> None:
        with self._lock:
            self._resident += n
            self.peak_resident_segments = max(self.peak_resident_segments, self._resident)

    def _track_release(self, n: int) -> None:
        with self._lock:
            self._resident -= n

    # -- iteration -----------------------------------------------------------

    def _assemble_batch(self) -> list[Segment] | None:
        refs = []
        for _ in range(self.batch_size):
            ref = self._next_ref()
            if ref is None:
                return None  # drop a trailing partial batch
            refs.append(ref)
        batch = []
        for fid, off in refs:
            samples = self.corpus.read(fid, off, self.layout.total_len)
            self._track_load()
            batch.append(Segment(self.layout, samples, fid, off))
        return batch

    def skip(self, n_batches: int) -> None:
        """Advance the schedule n batches without touching audio data.

        Replays the exact ref/shuffle decisions, so a stream skipped to a
        checkpoint's consumed count continues bit-identically.
        """
        if self._queue is not None:
            raise RuntimeError("cannot skip a stream that already started prefetching")
        for _ in range(n_batches):
            for _ in range(self.batch_size):
                if self._next_ref() is None:
                    return
            self.batches_consumed += 1

    def __iter__(self) -> Iterator[list[Segment]]:
        if not self.prefetch:
            while True:
                batch = self._assemble_batch()
                if batch is None:
                    return
                self.batches_consumed += 1
                self._track_release(len(batch))
                yield batch
        else:
            yield from self._iter_prefetched()

    def _iter_prefetched(self) -> Iterator[list[Segment]]:
        if self._queue is None:
            self._queue = queue.Queue(maxsize=self.prefetch_depth)
            self._thread = threading.Thread(target=self._producer, daemon=True)
            self._thread.start()
        while True:
            batch = self._queue.get()
            if batch is None:
                return
            self.batches_consumed += 1
            self._track_release(len(batch))
            yield batch

    def _producer(self) -> None:
        while True:
            batch = self._assemble_batch()
            self._queue.put(batch)
            if batch is None:
                return


def stream_batches(
    corpus,
    files: Sequence[str],
    layout: SegmentLayout,
    batch_size: int,
    seed: int = 0,
    **kwargs,
) -> BatchStream:
    """Build a BatchStream; see BatchStream for the determinism contract."""
    return BatchStream(corpus, files, layout, batch_size, seed=seed, **kwargs)


def make_synthetic_corpus(
    freqs_hz: Sequence[float],
    n_files: int,
    duration_s: float,
    sample_rate_hz: Rate,
    seed: int = 0,
    amplitude: float = 0.8,
    kind: str = "tone",
    layout: SegmentLayout | None = None,
    noise_db: float | None = None,
) -> list[Waveform]:
    """Deterministic sinusoid/chirp corpus standing in for real recordings.

    Each file mixes the given fundamentals with per-file random phases
    (tones) or sweeps between the first two frequencies (chirps), plus a
    Gaussian noise floor at noise_db (None for a mathematically pure
    signal; real recordings always carry a floor). The same seed always
    produces the same corpus.
    """
    rate = _normalize_rate(sample_rate_hz)
    n = int(round(duration_s * float(rate)))
    if layout is not None and n < layout.total_len:
        raise ValueError(
            f"duration {duration_s}s = {n} samples is shorter than one "
            f"{layout.total_len}-sample segment"
        )
    if n_files < 1:
        raise ValueError("n_files must be >= 1")
    if kind not in ("tone", "chirp"):
        raise ValueError(f"kind must be 'tone' or 'chirp', got {kind!r}")
    if kind == "chirp" and len(freqs_hz) < 2:
        raise ValueError("chirp needs two frequencies (start, end)")

    t = np.arange(n) / float(rate)
    waves = []
    for i in range(n_files):
        rng = np.random.default_rng(np.random.SeedSequence([seed, _SYNTH_STREAM, i]))
        if kind == "tone":
            x = np.zeros(n)
            for f in freqs_hz:
                phase = rng.uniform(0, 2 * np.pi)
                x += np.sin(2 * np.pi * f * t + phase)
            x *= amplitude / max(len(freqs_hz), 1)
        else:
            f0, f1 = freqs_hz[0], freqs_hz[1]
            phase = rng.uniform(0, 2 * np.pi)
            inst = f0 + (f1 - f0) * t / max(duration_s, 1e-12)
            x = amplitude * np.sin(2 * np.pi * np.cumsum(inst) / float(rate) + phase)
        if noise_db is not None:
            x = x + 10.0 ** (noise_db / 20.0) * rng.standard_normal(n)
        waves.append(Waveform(x, rate))
    return waves


# -- manifest files ----------------------------------------------------------

_SPLIT_TAGS = ("train", "validation", "test")


def write_corpus_manifest(path, split: DatasetSplit) -> None:
    """One `<tag>\\t<relative path>` line per file."""
    lines = []
    for tag in _SPLIT_TAGS:
        for fid in getattr(split, tag):
            lines.append(f"{tag}\t{fid}\n")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(lines))


def read_corpus_manifest(path) -> DatasetSplit:
    groups: dict[str, list[str]] = {tag: [] for tag in _SPLIT_TAGS}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tag, _, fid = line.partition("\t")
        if tag not in groups or not fid:
            raise ValueError(f"{path}:{lineno}: expected '<split>\\t<path>', got {line!r}")
        groups[tag].append(fid)
    return DatasetSplit(
        train=tuple(groups["train"]),
        validation=tuple(groups["validation"]),
        test=tuple(groups["test"]),
    )
