"""Single entry point for the pipeline: preprocess, split, synth, train,
inpaint, eval, serve.

Exit codes: 0 success, 2 validation problem (bad arguments, missing or
malformed inputs), 3 runtime failure (training divergence, unexpected
errors mid-pipeline). Every subcommand takes --seed and records it, with
input hashes and outputs, in a run_manifest.json beside its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime
from pathlib import Path

from . import audio_io, dataset, dsp, evaluation, model, reconstruct, training
from .audio_io import WavFormatError
from .model import CheckpointFormatError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

PREPROCESS_TARGETS = {
    # target name -> (cutoff_hz, decimation factor, expected input rate)
    "piano48k": (13200.0, 3, 48000),
    "solo44k": (11025.0, 3, 44100),
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs, outputs, started: float) -> None:
    manifest = {
        "command": command,
        "argv": {k: v for k, v in vars(args).items() if k != "func" and not callable(v)},
        "seed": getattr(args, "seed", None),
        "input_hashes": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "outputs": [str(p) for p in outputs],
        "started_at": datetime.fromtimestamp(started).isoformat(),
        "finished_at": datetime.now().isoformat(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


# -- subcommands ---------------------------------------------------------------


def cmd_preprocess(args) -> int:
    started = time.time()
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        raise ValueError(f"input directory not found: {in_dir}")
    wavs = sorted(in_dir.glob("*.wav"))
    if not wavs:
        raise ValueError(f"no .wav files in {in_dir}")

    if args.target == "custom":
        if args.cutoff_hz is None or args.factor is None:
            raise ValueError("custom target requires --cutoff-hz and --factor")
        cutoff, factor = args.cutoff_hz, args.factor
    else:
        cutoff, factor, _ = PREPROCESS_TARGETS[args.target]

    filters: dict[int, dsp.FirFilter] = {}
    outputs, failures = [], []
    for path in wavs:
        try:
            w = audio_io.read_wav_mono(path)
            w = dsp.normalize(w)
            rate = int(w.sample_rate_hz)
            if rate not in filters:
                filters[rate] = dsp.design_lowpass(cutoff, rate, args.num_taps, args.window)
            w = dsp.apply_filter(w, filters[rate])
            w = dsp.downsample(w, factor)
            out_path = out_dir / path.name
            audio_io.write_wav(out_path, w)
            outputs.append(out_path)
            print(f"{path.name}: {rate} Hz -> {float(w.sample_rate_hz):g} Hz, {len(w)} samples")
        except (WavFormatError, ValueError, dsp.NyquistError) as exc:
            failures.append(path.name)
            print(f"skipping {path.name}: {exc}", file=sys.stderr)
    if not outputs:
        raise RuntimeError(f"all {len(failures)} input files failed preprocessing")
    _write_run_manifest(out_dir, "preprocess", args, wavs, outputs, started)
    return EXIT_OK


def cmd_split(args) -> int:
    started = time.time()
    corpus = dataset.WavDirCorpus(args.corpus_dir)
    files = list(corpus.file_ids())
    durations = {fid: corpus.duration_s(fid) for fid in files}
    split = dataset.split_corpus(files, tuple(args.ratios), seed=args.seed, durations_s=durations)
    out_path = Path(args.out)
    dataset.write_corpus_manifest(out_path, split)
    for name in ("train", "validation", "test"):
        ids = getattr(split, name)
        print(f"{name}: {len(ids)} files, {split.durations_s[name] / 60:.1f} min")
    _write_run_manifest(out_path.parent, "split", args, [], [out_path], started)
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.time()
    out_dir = Path(args.out_dir)
    waves = dataset.make_synthetic_corpus(
        freqs_hz=args.freq or [440.0],
        n_files=args.files,
        duration_s=args.duration,
        sample_rate_hz=args.rate,
        seed=args.seed,
        kind=args.kind,
        noise_db=args.noise_db,
    )
    outputs = []
    ids = []
    for i, w in enumerate(waves):
        name = f"synth_{i:03d}.wav"
        audio_io.write_wav(out_dir / name, w)
        outputs.append(out_dir / name)
        ids.append(name)
    if len(ids) >= 3:
        split = dataset.split_corpus(ids, seed=args.seed)
    else:
        split = dataset.DatasetSplit(train=tuple(ids), validation=(), test=())
    manifest_path = out_dir / "corpus_manifest.txt"
    dataset.write_corpus_manifest(manifest_path, split)
    print(f"wrote {len(outputs)} files and {manifest_path}")
    _write_run_manifest(out_dir, "synth", args, [], [*outputs, manifest_path], started)
    return EXIT_OK


def _load_layout(args) -> dataset.SegmentLayout:
    if args.layout is not None:
        return dataset.SegmentLayout.from_text(Path(args.layout).read_text())
    return dataset.tiny_layout() if args.preset == "tiny" else dataset.default_layout()


def _model_config(args, layout) -> model.ModelConfig:
    if args.preset == "tiny":
        return model.tiny_model_config(layout, arch=args.arch)
    return model.default_model_config(layout, arch=args.arch)


def cmd_train(args) -> int:
    started = time.time()
    corpus = dataset.WavDirCorpus(args.corpus)
    split = dataset.read_corpus_manifest(args.manifest)
    if not split.train:
        raise ValueError(f"manifest {args.manifest} has no train files")

    layout = _load_layout(args)
    cfg = training.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        critic_steps_per_gen_step=args.critic_steps,
        clip_value=args.clip,
        lipschitz_mode=args.lipschitz,
        monitor_every=args.monitor_every,
        checkpoint_every=args.checkpoint_every,
        total_steps=args.steps,
        seed=args.seed,
        prefetch=args.prefetch,
    )
    run_name = args.run_name or f"run-{datetime.now():%Y%m%d-%H%M%S}-{args.arch}"
    run_dir = Path(args.out) / run_name

    if args.resume:
        run = training.resume(args.resume, corpus, split.train, cfg, run_dir)
    else:
        mc = _model_config(args, layout)
        run = training.train(mc, corpus, split.train, cfg, run_dir)
    print(f"run dir: {run.run_dir}")
    print(f"final checkpoint: {run.final_checkpoint}")
    _write_run_manifest(
        run_dir, "train", args, [args.manifest], [run.final_checkpoint, *run.checkpoint_paths], started
    )
    return EXIT_OK


def cmd_inpaint(args) -> int:
    started = time.time()
    ckpt = model.load_checkpoint(args.checkpoint)
    source = audio_io.read_wav_mono(args.input)
    req = reconstruct.InpaintRequest(
        source=source,
        gap_start=args.gap_start,
        layout=ckpt.config.layout,
        checkpoint=ckpt,
        seed=args.seed,
        crossfade_len=args.crossfade,
    )
    out = reconstruct.inpaint(req)
    audio_io.write_wav(args.out, out)
    print(f"wrote {args.out}")
    _write_run_manifest(Path(args.out).parent, "inpaint", args, [args.checkpoint, args.input], [args.out], started)
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    ckpt = model.load_checkpoint(args.checkpoint)
    corpus = dataset.WavDirCorpus(args.corpus)
    split = dataset.read_corpus_manifest(args.manifest)
    files = split.test or split.train
    if not files:
        raise ValueError("manifest has no test (or train) files to evaluate on")
    if not split.test:
        print("note: manifest has no test split; evaluating on train files", file=sys.stderr)

    out_dir = Path(args.out)
    evalset = reconstruct.batch_generate_eval_set(
        ckpt,
        corpus,
        files,
        n_samples=args.n,
        seed=args.seed,
        out_dir=out_dir,
        dataset_label=args.dataset_label,
        model_label=args.model_label,
        crossfade_len=args.crossfade,
    )
    if evalset.with_replacement:
        print("note: fewer segments than requested samples; sampled with replacement", file=sys.stderr)

    layout = ckpt.config.layout
    frame = min(dsp.DEFAULT_FRAME_LEN, layout.gap_len)
    hop = max(1, frame // 4)
    region = (layout.gap_start, layout.gap_end)
    report_path = out_dir / "report.jsonl"
    rendered = 0
    with open(report_path, "w") as fh:
        for pair_id, real, recon in evalset.pairs:
            row = {
                "pair_id": pair_id,
                "lsd_db": evaluation.log_spectral_distance(real, recon, region, frame, hop),
                "snr_db": evaluation.snr(real, recon, region),
            }
            fh.write(json.dumps(row) + "\n")
            if rendered < args.render_limit:
                evaluation.render_spectrogram_comparison(
                    real,
                    recon,
                    layout.gap_start,
                    layout.gap_len,
                    out_dir / "spectrograms" / f"{pair_id}.png",
                    frame_len=frame,
                    hop_len=hop,
                )
                rendered += 1
    print(f"eval set: {evalset.manifest_path}")
    print(f"report: {report_path}")
    _write_run_manifest(out_dir, "eval", args, [args.checkpoint, args.manifest], [report_path], started)
    return EXIT_OK


def cmd_serve(args) -> int:
    from . import listen

    store = listen.ListenStore(
        manifest_path=args.manifest,
        grades_path=args.grades,
        protocol=listen.PROTOCOL_PAIRED if args.paired else listen.PROTOCOL_UNPAIRED,
    )
    print(f"serving {len(store.presentations)} presentations on http://{args.host}:{args.port}")
    try:
        listen.serve(store, port=args.port, host=args.host, webui_dir=args.webui)
    except OSError as exc:
        raise RuntimeError(f"could not bind {args.host}:{args.port}: {exc}") from exc
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavegap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="mono + normalize + lowpass + decimate a WAV directory")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--target", choices=[*PREPROCESS_TARGETS, "custom"], default="piano48k")
    p.add_argument("--cutoff-hz", type=float, default=None)
    p.add_argument("--factor", type=int, default=None)
    p.add_argument("--num-taps", type=int, default=dsp.DEFAULT_NUM_TAPS)
    p.add_argument("--window", choices=dsp.FILTER_WINDOWS, default="hamming")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="write a train/validation/test corpus manifest")
    p.add_argument("corpus_dir")
    p.add_argument("--ratios", type=float, nargs=3, default=(0.8, 0.1, 0.1))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="corpus_manifest.txt")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("out_dir")
    p.add_argument("--freq", type=float, action="append", default=None, help="repeatable; default 440")
    p.add_argument("--files", type=int, default=8)
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--kind", choices=("tone", "chirp"), default="tone")
    p.add_argument("--noise-db", type=float, default=None, help="noise floor in dB, e.g. -40")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an inpainting model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", choices=model.ARCHITECTURES, default=model.ARCH_DUAL)
    p.add_argument("--preset", choices=("tiny", "full"), default="full")
    p.add_argument("--layout", default=None, help="key=value layout file overriding the preset")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--critic-steps", type=int, default=5)
    p.add_argument("--clip", type=float, default=0.01)
    p.add_argument("--lipschitz", choices=training.LIPSCHITZ_MODES, default="clip")
    p.add_argument("--monitor-every", type=int, default=100)
    p.add_argument("--checkpoint-every", type=int, default=1000)
    p.add_argument("--prefetch", action="store_true")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--run-name", default=None)
    p.add_argument("--out", default="runs")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inpaint", help="fill one gap in a WAV with a trained model")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("--gap-start", type=int, required=True)
    p.add_argument("--crossfade", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("eval", help="generate a blinded eval set plus metrics")
    p.add_argument("checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--crossfade", type=int, default=64)
    p.add_argument("--dataset-label", default="dataset")
    p.add_argument("--model-label", default="model")
    p.add_argument("--render-limit", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the listening-test backend")
    p.add_argument("manifest")
    p.add_argument("--grades", default="grades.jsonl")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--webui", default=None, help="static UI bundle directory to mount at /")
    p.add_argument("--paired", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, WavFormatError, CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except training.TrainingDiverged as exc:
        print(f"training diverged: {exc} (snapshot: {exc.snapshot_path})", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything to exit codes
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
