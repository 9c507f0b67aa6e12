"""Inference: fill a gap with the generator and splice it into the source.

Also builds blinded (real, reconstructed) evaluation sets plus the
line-delimited manifest consumed by the listening-test service.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import audio_io
from .dataset import SegmentLayout, Segment, segment_offsets
from .dsp import Waveform
from .model import Checkpoint, generator_forward


@dataclass(frozen=True)
class InpaintRequest:
    source: Waveform
    gap_start: int
    layout: SegmentLayout
    checkpoint: Checkpoint
    seed: int = 0
    crossfade_len: int = 64

    def __post_init__(self):
        lo_ok = self.gap_start >= self.layout.context_len
        hi_ok = self.gap_start + self.layout.gap_len + self.layout.context_len <= len(self.source)
        if not (lo_ok and hi_ok):
            raise ValueError(
                f"gap at {self.gap_start} needs {self.layout.context_len} context samples on "
                f"both sides of a {self.layout.gap_len}-sample gap; source has {len(self.source)}"
            )
        if not 0 <= self.crossfade_len <= self.layout.gap_len // 2:
            raise ValueError(
                f"crossfade_len must be in [0, gap_len/2] = [0, {self.layout.gap_len // 2}], "
                f"got {self.crossfade_len}"
            )


def splice(
    context: Waveform,
    gap_fill: np.ndarray,
    gap_start: int,
    crossfade_len: int = 64,
) -> Waveform:
    """Insert gap_fill, linearly crossfading inside the gap at both edges.

    The ramps blend the source's own gap-edge samples with the fill, so a
    fill equal to the removed region reproduces the input exactly. With a
    heavily corrupted gap use crossfade_len 0 (hard cut). Samples outside
    the gap are never touched.
    """
    fill = np.asarray(gap_fill, dtype=np.float64)
    if fill.ndim != 1 or fill.size == 0:
        raise ValueError(f"gap_fill must be a non-empty 1-D array, got shape {fill.shape}")
    gap_len = fill.size
    if crossfade_len < 0 or crossfade_len > gap_len // 2:
        raise ValueError(f"crossfade_len must be in [0, {gap_len // 2}], got {crossfade_len}")
    if gap_start < 0 or gap_start + gap_len > len(context):
        raise ValueError(
            f"gap [{gap_start}, {gap_start + gap_len}) out of range for {len(context)} samples"
        )
    out = context.samples.copy()
    src_gap = context.samples[gap_start : gap_start + gap_len]
    out[gap_start : gap_start + gap_len] = fill
    if crossfade_len > 0:
        # written as src + w*(fill - src) so equal signals blend bit-exactly
        ramp_in = np.arange(crossfade_len) / crossfade_len
        head = src_gap[:crossfade_len]
        out[gap_start : gap_start + crossfade_len] = head + ramp_in * (fill[:crossfade_len] - head)
        ramp_out = 1.0 - np.arange(1, crossfade_len + 1) / crossfade_len
        tail = src_gap[gap_len - crossfade_len :]
        out[gap_start + gap_len - crossfade_len : gap_start + gap_len] = tail + ramp_out * (
            fill[gap_len - crossfade_len :] - tail
        )
    return Waveform(out, context.sample_rate_hz)


def inpaint(req: InpaintRequest, fill: np.ndarray | None = None, gen=None) -> Waveform:
    """Reconstruct the source with its gap replaced by generator output.

    Deterministic for a fixed checkpoint and seed. `fill` overrides the
    generator (plumbing tests and ablations); `gen` supplies a prebuilt
    generator when inpainting many gaps from one checkpoint.
    """
    if req.checkpoint.config.layout != req.layout:
        raise ValueError(
            "request layout does not match the checkpoint's layout "
            f"(checkpoint config hash {req.checkpoint.config_hash[:12]})"
        )
    if fill is None:
        fill = _generate_fill(req, gen)
    return splice(req.source, fill, req.gap_start, req.crossfade_len)


def _generate_fill(req: InpaintRequest, gen=None) -> np.ndarray:
    layout = req.layout
    src = req.source.samples
    gs, ge = req.gap_start, req.gap_start + layout.gap_len
    b1 = (src[gs - layout.border1_len : gs], src[ge : ge + layout.border1_len])
    b2_ds = None
    if gen is None:
        gen, _ = req.checkpoint.build()
    if gen.cfg.use_long_borders:
        ds = layout.long_branch_downsample
        b2_ds = (
            src[gs - layout.border2_len : gs : ds],
            src[ge : ge + layout.border2_len : ds],
        )
    rng = torch.Generator()
    rng.manual_seed(req.seed)
    z = torch.randn(1, gen.cfg.latent.dim, generator=rng).numpy()
    return generator_forward(gen, b1, b2_ds, z[0]).astype(np.float64)


# -- blinded evaluation sets ---------------------------------------------------

ROLE_REAL = "real"
ROLE_RECONSTRUCTED = "reconstructed"


@dataclass(frozen=True)
class PresentationRecord:
    """One manifest line: a blinded clip plus its hidden provenance."""

    presentation_id: str
    pair_id: str
    role: str
    path: str
    blinded: bool = True
    dataset: str = ""
    model: str = ""


def write_eval_manifest(path, records: Sequence[PresentationRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_eval_manifest(path) -> list[PresentationRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(PresentationRecord(**json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad manifest row ({exc})") from exc
    return records


@dataclass
class EvalSet:
    out_dir: Path
    records: list[PresentationRecord]
    pairs: list[tuple[str, Waveform, Waveform]]  # pair_id, real, reconstructed
    manifest_path: Path
    with_replacement: bool


def batch_generate_eval_set(
    checkpoint: Checkpoint,
    corpus,
    files: Sequence[str],
    n_samples: int,
    seed: int,
    out_dir,
    dataset_label: str = "",
    model_label: str = "",
    crossfade_len: int = 64,
) -> EvalSet:
    """Write n (real, reconstructed) WAV pairs under blinded presentation ids.

    Segments are drawn from the given files without replacement when
    possible; a short split falls back to sampling with replacement and
    the manifest metadata says so. Presentation ids are a seeded
    permutation so nothing about file order leaks the role.
    """
    layout = checkpoint.config.layout
    positions = [
        (fid, off) for fid in files for off in segment_offsets(corpus.num_samples(fid), layout)
    ]
    if not positions:
        raise ValueError("no segments available in the given files")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    with_replacement = len(positions) < n_samples
    idx = rng.choice(len(positions), size=n_samples, replace=with_replacement)

    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    rate = corpus.sample_rate()

    perm = rng.permutation(2 * n_samples)
    gen, _ = checkpoint.build()
    records: list[PresentationRecord] = []
    pairs: list[tuple[str, Waveform, Waveform]] = []
    for i, pos in enumerate(idx):
        fid, off = positions[int(pos)]
        seg = Segment(layout, corpus.read(fid, off, layout.total_len), fid, int(off))
        real = Waveform(seg.full, rate)
        recon = inpaint(
            InpaintRequest(
                source=real,
                gap_start=layout.gap_start,
                layout=layout,
                checkpoint=checkpoint,
                seed=int(np.random.SeedSequence([seed, 11, i]).generate_state(1)[0]),
                crossfade_len=crossfade_len,
            ),
            gen=gen,
        )
        pair_id = f"pair{i:04d}"
        pairs.append((pair_id, real, recon))
        for role, wave, slot in ((ROLE_REAL, real, 2 * i), (ROLE_RECONSTRUCTED, recon, 2 * i + 1)):
            pres_id = f"p{perm[slot]:04d}"
            rel = f"audio/{pres_id}.wav"
            audio_io.write_wav(out_dir / rel, wave)
            records.append(
                PresentationRecord(
                    presentation_id=pres_id,
                    pair_id=pair_id,
                    role=role,
                    path=rel,
                    blinded=True,
                    dataset=dataset_label,
                    model=model_label,
                )
            )

    records.sort(key=lambda r: r.presentation_id)
    manifest_path = out_dir / "eval_manifest.jsonl"
    write_eval_manifest(manifest_path, records)
    (out_dir / "eval_meta.json").write_text(
        json.dumps(
            {
                "n_pairs": n_samples,
                "seed": seed,
                "with_replacement": with_replacement,
                "dataset": dataset_label,
                "model": model_label,
                "sample_rate_hz": str(rate),
                "crossfade_len": crossfade_len,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EvalSet(
        out_dir=out_dir,
        records=records,
        pairs=pairs,
        manifest_path=manifest_path,
        with_replacement=with_replacement,
    )
