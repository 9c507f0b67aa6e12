import json

import numpy as np
import pytest

from wavegap.dataset import (
    ArrayCorpus,
    make_synthetic_corpus,
    segment,
    tiny_layout,
)
from wavegap.dsp import Waveform
from wavegap.model import load_checkpoint, save_checkpoint, tiny_model_config, build_models
from wavegap.reconstruct import (
    InpaintRequest,
    batch_generate_eval_set,
    inpaint,
    read_eval_manifest,
    splice,
)


@pytest.fixture(scope="module")
def layout():
    return tiny_layout()


@pytest.fixture(scope="module")
def checkpoint(layout, tmp_path_factory):
    """Randomly initialized checkpoint; reconstruction plumbing does not care."""
    cfg = tiny_model_config(layout)
    gen, critics = build_models(cfg, seed=5)
    path = tmp_path_factory.mktemp("ckpt") / "m.npz"
    save_checkpoint(path, step=0, batches_consumed=0, config=cfg, gen=gen, critics=critics)
    return load_checkpoint(path)


@pytest.fixture(scope="module")
def source(layout):
    t = np.arange(3 * layout.total_len) / 16000
    return Waveform(0.7 * np.sin(2 * np.pi * 440 * t), 16000)


class TestSplice:
    def test_identity_when_fill_is_removed_region(self, rng):
        ctx = Waveform(rng.uniform(-1, 1, 400), 16000)
        for cf in (0, 1, 8, 50):
            out = splice(ctx, ctx.samples[150:250].copy(), 150, cf)
            assert np.array_equal(out.samples, ctx.samples)

    def test_hard_cut_with_zero_crossfade(self, rng):
        ctx = Waveform(rng.uniform(-1, 1, 300), 16000)
        fill = rng.uniform(-1, 1, 100)
        out = splice(ctx, fill, 100, 0)
        assert np.array_equal(out.samples[100:200], fill)
        assert np.array_equal(out.samples[:100], ctx.samples[:100])
        assert np.array_equal(out.samples[200:], ctx.samples[200:])

    def test_linear_ramp_example(self):
        ctx = Waveform(np.full(40, 0.5), 16000)
        fill = np.full(16, 0.3)
        out = splice(ctx, fill, 12, 4)
        # entering the gap: pure context, then a linear walk down to the fill
        assert np.allclose(out.samples[12:17], [0.5, 0.45, 0.4, 0.35, 0.3])
        # leaving the gap, mirrored
        assert np.allclose(out.samples[23:28], [0.3, 0.35, 0.4, 0.45, 0.5])
        # untouched outside the gap
        assert np.all(out.samples[:12] == 0.5)
        assert np.all(out.samples[28:] == 0.5)

    def test_crossfade_too_long_rejected(self):
        ctx = Waveform(np.zeros(100), 16000)
        with pytest.raises(ValueError, match="crossfade"):
            splice(ctx, np.zeros(20), 10, 11)

    def test_gap_out_of_range_rejected(self):
        ctx = Waveform(np.zeros(50), 16000)
        with pytest.raises(ValueError, match="out of range"):
            splice(ctx, np.zeros(20), 40, 0)


class TestInpaintRequest:
    def test_insufficient_context_rejected(self, layout, checkpoint):
        short = Waveform(np.zeros(layout.total_len - 1), 16000)
        with pytest.raises(ValueError, match="context"):
            InpaintRequest(short, layout.context_len, layout, checkpoint)

    def test_crossfade_bound(self, layout, checkpoint, source):
        with pytest.raises(ValueError, match="crossfade"):
            InpaintRequest(source, layout.context_len, layout, checkpoint,
                           crossfade_len=layout.gap_len // 2 + 1)

    def test_layout_mismatch_rejected(self, layout, checkpoint, source):
        import dataclasses

        other = dataclasses.replace(layout, total_len=layout.total_len + 512,
                                    context_len=layout.context_len + 256)
        req = InpaintRequest(source, other.context_len, other, checkpoint)
        with pytest.raises(ValueError, match="layout"):
            inpaint(req)


class TestInpaint:
    def test_length_preserved(self, layout, checkpoint, source):
        req = InpaintRequest(source, layout.context_len, layout, checkpoint, seed=1)
        out = inpaint(req)
        assert len(out) == len(source)

    def test_out_of_gap_bit_identity(self, layout, checkpoint, source):
        gs = layout.context_len + 37
        req = InpaintRequest(source, gs, layout, checkpoint, seed=1, crossfade_len=0)
        out = inpaint(req)
        ge = gs + layout.gap_len
        assert np.array_equal(out.samples[:gs], source.samples[:gs])
        assert np.array_equal(out.samples[ge:], source.samples[ge:])
        assert not np.array_equal(out.samples[gs:ge], source.samples[gs:ge])

    def test_deterministic_given_seed(self, layout, checkpoint, source):
        req = InpaintRequest(source, layout.context_len, layout, checkpoint, seed=9)
        assert np.array_equal(inpaint(req).samples, inpaint(req).samples)
        other = InpaintRequest(source, layout.context_len, layout, checkpoint, seed=10)
        assert not np.array_equal(inpaint(req).samples, inpaint(other).samples)

    def test_stubbed_fill_reproduces_source(self, layout, checkpoint, source):
        gs = layout.context_len
        true_gap = source.samples[gs : gs + layout.gap_len].copy()
        req = InpaintRequest(source, gs, layout, checkpoint, crossfade_len=0)
        out = inpaint(req, fill=true_gap)
        assert np.array_equal(out.samples, source.samples)

    def test_boundary_continuity(self, layout, checkpoint, source):
        gs = layout.context_len
        req = InpaintRequest(source, gs, layout, checkpoint, seed=3, crossfade_len=64)
        out = inpaint(req)
        ge = gs + layout.gap_len
        context_jumps = np.abs(np.diff(source.samples))
        allowed = context_jumps.max() + 0.1
        for stitch in (gs, ge):
            assert abs(out.samples[stitch] - out.samples[stitch - 1]) <= allowed


@pytest.fixture(scope="module")
def corpus(layout):
    waves = make_synthetic_corpus(
        [440.0], n_files=3, duration_s=1.5, sample_rate_hz=16000, seed=1, layout=layout,
        noise_db=-45,
    )
    return ArrayCorpus.from_waveforms(waves)


class TestEvalSet:

    def test_pairs_and_manifest(self, checkpoint, corpus, tmp_path):
        n = 4
        evalset = batch_generate_eval_set(
            checkpoint, corpus, corpus.file_ids(), n, seed=0, out_dir=tmp_path / "ev",
            dataset_label="tones", model_label="dual",
        )
        assert len(evalset.pairs) == n
        assert len(evalset.records) == 2 * n
        roles = [r.role for r in evalset.records]
        assert roles.count("real") == n and roles.count("reconstructed") == n
        for rec in evalset.records:
            assert (tmp_path / "ev" / rec.path).exists()
            assert rec.presentation_id in rec.path  # blinded name carries only the id
            assert "real" not in rec.path and "recon" not in rec.path
        loaded = read_eval_manifest(evalset.manifest_path)
        assert loaded == evalset.records

    def test_seeded_permutation_differs(self, checkpoint, corpus, tmp_path):
        ids = []
        for seed in (0, 1):
            evalset = batch_generate_eval_set(
                checkpoint, corpus, corpus.file_ids(), 3, seed=seed, out_dir=tmp_path / f"e{seed}"
            )
            ids.append([(r.presentation_id, r.role) for r in evalset.records])
        assert ids[0] != ids[1]

    def test_reconstructed_differs_only_in_gap(self, checkpoint, corpus, tmp_path, layout):
        from wavegap.audio_io import read_wav_mono

        cf = 16
        evalset = batch_generate_eval_set(
            checkpoint, corpus, corpus.file_ids(), 2, seed=0, out_dir=tmp_path / "mask",
            crossfade_len=cf,
        )
        by_pair = {}
        for rec in evalset.records:
            by_pair.setdefault(rec.pair_id, {})[rec.role] = read_wav_mono(tmp_path / "mask" / rec.path)
        gs, ge = layout.gap_start, layout.gap_end
        for pair in by_pair.values():
            real, recon = pair["real"].samples, pair["reconstructed"].samples
            assert np.array_equal(real[: gs], recon[: gs])
            assert np.array_equal(real[ge:], recon[ge:])
            assert not np.array_equal(real[gs:ge], recon[gs:ge])

    def test_with_replacement_flagged(self, checkpoint, corpus, tmp_path):
        n_available = sum(
            len(range(0, corpus.num_samples(f) - checkpoint.config.layout.total_len + 1,
                      checkpoint.config.layout.total_len))
            for f in corpus.file_ids()
        )
        evalset = batch_generate_eval_set(
            checkpoint, corpus, corpus.file_ids(), n_available + 5, seed=0,
            out_dir=tmp_path / "rep",
        )
        assert evalset.with_replacement
        meta = json.loads((tmp_path / "rep" / "eval_meta.json").read_text())
        assert meta["with_replacement"] is True

    def test_empty_files_rejected(self, checkpoint, corpus, tmp_path):
        with pytest.raises(ValueError, match="no segments"):
            batch_generate_eval_set(checkpoint, corpus, [], 2, seed=0, out_dir=tmp_path / "x")
