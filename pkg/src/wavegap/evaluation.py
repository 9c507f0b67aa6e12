"""Objective metrics and listening-grade aggregation.

SNR is reported for reference only; it punishes any waveform that is not
sample-aligned with the original, which is exactly what a generative
reconstruction is, so the headline numbers come from human grades and
the log-spectral distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dsp import (
    DEFAULT_FRAME_LEN,
    DEFAULT_HOP_LEN,
    Waveform,
    stft_magnitude_db,
)

ODG_SCALE = (0, -1, -2, -3, -4)
ODG_LABELS = {
    0: "Imperceptible",
    -1: "Perceptible, but not annoying",
    -2: "Slightly annoying",
    -3: "Annoying",
    -4: "Very annoying",
}

# Unclamped-in-practice floor for the spectral distance; the -80 dB
# rendering floor would fold quiet leakage bins together and bias the
# metric (a half-amplitude copy must measure exactly 6.02 dB).
LSD_DB_FLOOR = -200.0


class DuplicateGradeError(ValueError):
    """The same grader graded the same presentation twice."""

    def __init__(self, conflicts: list[tuple[str, str]]):
        super().__init__(f"duplicate (grader, presentation) grades: {conflicts}")
        self.conflicts = conflicts


@dataclass(frozen=True)
class GradeRecord:
    grader_id: str
    presentation_id: str
    odg: int
    timestamp: float = 0.0

    def __post_init__(self):
        if self.odg not in ODG_SCALE:
            raise ValueError(f"odg must be one of {ODG_SCALE}, got {self.odg}")


@dataclass(frozen=True)
class OdgCell:
    """Counts and moments for one group of grades."""

    counts: Mapping[int, int]
    n: int
    mean: float
    std_sample: float
    std_population: float

    @property
    def std(self) -> float:
        return self.std_sample

    def to_dict(self) -> dict:
        return {
            "counts": {str(k): int(v) for k, v in self.counts.items()},
            "n": self.n,
            "mean": self.mean,
            "std": self.std_sample,
            "std_population": self.std_population,
        }


@dataclass
class OdgTable:
    """Per (dataset, model) cells plus pooled per-model rows."""

    rows: dict[tuple[str, str], OdgCell]
    overall: dict[str, OdgCell]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"dataset": d, "model": m, **cell.to_dict()} for (d, m), cell in self.rows.items()
            ],
            "overall": [{"model": m, **cell.to_dict()} for m, cell in self.overall.items()],
        }

    def to_text(self) -> str:
        """Aligned text table: one column per (model, dataset), count rows then moments."""
        cols = sorted(self.rows)
        header = ["".ljust(18)] + [f"{m}/{d}".rjust(16) for d, m in cols]
        lines = ["".join(header)]
        for grade in ODG_SCALE:
            cells = [f"ODG {grade:3d}".ljust(18)]
            cells += [str(self.rows[c].counts.get(grade, 0)).rjust(16) for c in cols]
            lines.append("".join(cells))
        for label, attr in (("Mean ODG", "mean"), ("Std ODG", "std_sample")):
            cells = [label.ljust(18)]
            cells += [f"{getattr(self.rows[c], attr):.2f}".rjust(16) for c in cols]
            lines.append("".join(cells))
        for m, cell in sorted(self.overall.items()):
            lines.append(f"Overall {m}: mean {cell.mean:.2f}, std {cell.std_sample:.2f}, n {cell.n}")
        return "\n".join(lines) + "\n"


def _cell_from_grades(grades: Sequence[int]) -> OdgCell:
    arr = np.asarray(grades, dtype=np.float64)
    counts = {g: int(np.sum(arr == g)) for g in ODG_SCALE}
    std_pop = float(np.std(arr))
    std_sample = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return OdgCell(
        counts=counts,
        n=int(arr.size),
        mean=float(arr.mean()),
        std_sample=std_sample,
        std_population=std_pop,
    )


def cell_from_counts(counts: Mapping[int, int]) -> OdgCell:
    """Expand a counts histogram into grades and aggregate; test convenience."""
    grades: list[int] = []
    for grade, c in counts.items():
        grades.extend([int(grade)] * int(c))
    return _cell_from_grades(grades)


def odg_aggregate(
    records: Iterable[GradeRecord],
    presentation_info: Mapping[str, tuple[str, str]],
) -> OdgTable:
    """Pool grades into the per-(dataset, model) table.

    presentation_info maps presentation_id -> (dataset, model); this is
    the unblinding key and only exists in this aggregate view. Duplicate
    (grader, presentation) pairs are rejected with the conflicting ids.
    """
    records = list(records)
    if not records:
        raise ValueError("no grade records to aggregate")
    seen: set[tuple[str, str]] = set()
    conflicts = []
    for rec in records:
        key = (rec.grader_id, rec.presentation_id)
        if key in seen:
            conflicts.append(key)
        seen.add(key)
    if conflicts:
        raise DuplicateGradeError(conflicts)

    by_group: dict[tuple[str, str], list[int]] = {}
    by_model: dict[str, list[int]] = {}
    for rec in records:
        if rec.presentation_id not in presentation_info:
            raise KeyError(f"presentation {rec.presentation_id!r} missing from the unblinding map")
        dataset, model = presentation_info[rec.presentation_id]
        by_group.setdefault((dataset, model), []).append(rec.odg)
        by_model.setdefault(model, []).append(rec.odg)

    return OdgTable(
        rows={k: _cell_from_grades(v) for k, v in sorted(by_group.items())},
        overall={m: _cell_from_grades(v) for m, v in sorted(by_model.items())},
    )


# -- waveform metrics -----------------------------------------------------------


def snr(reference: Waveform, test: Waveform, region: tuple[int, int] | None = None) -> float:
    """10*log10(signal power / error power) over the region; inf when identical."""
    if len(reference) != len(test):
        raise ValueError(f"length mismatch: {len(reference)} vs {len(test)}")
    lo, hi = region if region is not None else (0, len(reference))
    ref = reference.samples[lo:hi]
    err = ref - test.samples[lo:hi]
    err_power = float(np.sum(err**2))
    if err_power == 0.0:
        return math.inf
    ref_power = float(np.sum(ref**2))
    return 10.0 * math.log10(ref_power / err_power)


def log_spectral_distance(
    reference: Waveform,
    test: Waveform,
    region: tuple[int, int] | None = None,
    frame_len: int = DEFAULT_FRAME_LEN,
    hop_len: int = DEFAULT_HOP_LEN,
) -> float:
    """RMS difference of dB magnitude spectrograms over the region.

    The region must cover at least one STFT frame. Symmetric by
    construction.
    """
    if len(reference) != len(test):
        raise ValueError(f"length mismatch: {len(reference)} vs {len(test)}")
    lo, hi = region if region is not None else (0, len(reference))
    if hi - lo < frame_len:
        raise ValueError(f"region [{lo}, {hi}) shorter than one {frame_len}-sample frame")
    ref = Waveform(reference.samples[lo:hi], reference.sample_rate_hz)
    tst = Waveform(test.samples[lo:hi], test.sample_rate_hz)
    a = stft_magnitude_db(ref, frame_len, hop_len, floor_db=LSD_DB_FLOOR).magnitudes_db
    b = stft_magnitude_db(tst, frame_len, hop_len, floor_db=LSD_DB_FLOOR).magnitudes_db
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class RenderResult:
    """Saved comparison image plus the pixel boxes of the two panels.

    Boxes are (left, top, right, bottom) in image coordinates, so tests
    can crop and compare panel pixels directly.
    """

    path: Path
    panel_boxes: tuple[tuple[int, int, int, int], tuple[int, int, int, int]]


def render_spectrogram_comparison(
    real: Waveform,
    reconstructed: Waveform,
    gap_start: int,
    gap_len: int,
    out_path,
    frame_len: int = DEFAULT_FRAME_LEN,
    hop_len: int = DEFAULT_HOP_LEN,
) -> RenderResult:
    """Side-by-side dB spectrograms with the gap marked by two red lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if len(real) != len(reconstructed):
        raise ValueError(f"length mismatch: {len(real)} vs {len(reconstructed)}")
    specs = [
        stft_magnitude_db(w, frame_len, hop_len) for w in (real, reconstructed)
    ]
    vmin = min(s.magnitudes_db.min() for s in specs)
    vmax = max(s.magnitudes_db.max() for s in specs)
    rate = float(real.sample_rate_hz)
    duration = len(real) / rate

    dpi = 100
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True, dpi=dpi)
    for ax, spec, title in zip(axes, specs, ("real", "reconstructed")):
        ax.imshow(
            spec.magnitudes_db.T,
            origin="lower",
            aspect="auto",
            extent=(0.0, duration, 0.0, rate / 2.0),
            vmin=vmin,
            vmax=vmax,
            cmap="magma",
        )
        for x in (gap_start / rate, (gap_start + gap_len) / rate):
            ax.axvline(x, color="red", linewidth=1.0)
        ax.set_title(title)
        ax.set_xlabel("time [s]")
    axes[0].set_ylabel("frequency [Hz]")
    fig.tight_layout()

    # Snap both panels to identical, pixel-aligned boxes so equal inputs
    # render to pixel-equal panels.
    img_w = int(round(fig.get_figwidth() * dpi))
    img_h = int(round(fig.get_figheight() * dpi))
    px = [ax.get_position().bounds for ax in axes]
    w = round(min(b[2] for b in px) * img_w)
    h = round(min(b[3] for b in px) * img_h)
    boxes = []
    for ax, (x0, y0, _, _) in zip(axes, px):
        xi, yi = round(x0 * img_w), round(y0 * img_h)
        ax.set_position((xi / img_w, yi / img_h, w / img_w, h / img_h))
        boxes.append((xi + 1, img_h - (yi + h) + 1, xi + w - 1, img_h - yi - 1))

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return RenderResult(path=out_path, panel_boxes=(boxes[0], boxes[1]))


# -- grade persistence ------------------------------------------------------------


def append_grade(path, record: GradeRecord) -> None:
    """Append one grade to the line-delimited store and flush it to disk."""
    import os
    from dataclasses import asdict

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_grades(path) -> list[GradeRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in path.read_text().splitlines():
        if line.strip():
            records.append(GradeRecord(**json.loads(line)))
    return records
