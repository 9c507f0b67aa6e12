"""Desk-scale end to end: train a tiny dual-critic model, fill a gap,
render the comparison spectrogram.

Around 800 steps on a single-tone corpus is where the generator starts
placing the dominant frequency correctly; the acceptance suite runs the
full 2000-step version of this with pass/fail thresholds.
"""

import time
from pathlib import Path

import numpy as np

from wavegap import (
    InpaintRequest,
    TrainConfig,
    load_checkpoint,
    make_synthetic_corpus,
    render_spectrogram_comparison,
    split_corpus,
    tiny_layout,
    tiny_model_config,
    train,
)
from wavegap.dataset import ArrayCorpus, segment
from wavegap.dsp import Waveform, stft_magnitude_db
from wavegap.evaluation import log_spectral_distance
from wavegap.reconstruct import inpaint

OUT = Path(__file__).parent / "out"
RATE = 16000
STEPS = 800  # demo-sized; the acceptance smoke uses 2000

lay = tiny_layout()
waves = make_synthetic_corpus([440.0], n_files=8, duration_s=2.0, sample_rate_hz=RATE,
                              seed=3, layout=lay, noise_db=-40)
corpus = ArrayCorpus.from_waveforms(waves)
split = split_corpus(list(corpus.file_ids()), seed=0)

cfg = TrainConfig(total_steps=STEPS, batch_size=16, monitor_every=200,
                  checkpoint_every=400, lipschitz_mode="gp", seed=0)
print(f"training tiny dual-critic model for {STEPS} steps ...")
t0 = time.time()
run = train(tiny_model_config(lay), corpus, split.train, cfg, OUT / "tiny_run")
print(f"done in {time.time() - t0:.0f}s; monitor rows:")
for row in run.rows:
    print(f"  step {row['step']:4d}  d_total {row['d_total']:+.3f}  g {row['g']:+.3f}")

ckpt = load_checkpoint(run.final_checkpoint)
seg = segment(corpus.waveform(split.test[0]), lay, 0)
src = Waveform(seg.full, RATE)
out = inpaint(InpaintRequest(src, lay.gap_start, lay, ckpt, seed=1, crossfade_len=32))

frame, hop = 256, 64
region = (lay.gap_start, lay.gap_end)
lsd = log_spectral_distance(src, out, region, frame, hop)
gap_spec = stft_magnitude_db(Waveform(out.samples[lay.gap_start : lay.gap_end], RATE), frame, hop)
gap_bin = int(np.argmax(gap_spec.magnitudes_db.mean(axis=0)))
print(f"\nfilled gap: dominant bin {gap_bin} "
      f"(440 Hz lives at bin {round(440 * frame / RATE)}), LSD over the gap {lsd:.2f} dB")

res = render_spectrogram_comparison(src, out, lay.gap_start, lay.gap_len,
                                    OUT / "inpaint_comparison.png", frame, hop)
print(f"comparison image: {res.path}")
