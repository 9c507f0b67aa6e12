import json
import signal
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from wavegap.audio_io import read_wav, read_wav_mono, write_wav
from wavegap.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, main
from wavegap.dataset import tiny_layout


@pytest.fixture(scope="module")
def tiny_layout_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("layout") / "layout.txt"
    path.write_text(tiny_layout().to_text())
    return path


@pytest.fixture(scope="module")
def synth_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    rc = main(
        [
            "synth", str(out), "--freq", "440", "--files", "6", "--duration", "1.0",
            "--rate", "16000", "--seed", "3",
        ]
    )
    assert rc == EXIT_OK
    return out


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, synth_corpus, tiny_layout_file):
    runs = tmp_path_factory.mktemp("runs")
    rc = main(
        [
            "train", "--corpus", str(synth_corpus), "--manifest", str(synth_corpus / "corpus_manifest.txt"),
            "--arch", "d2wgan", "--preset", "tiny", "--layout", str(tiny_layout_file),
            "--steps", "4", "--batch", "4", "--critic-steps", "2",
            "--monitor-every", "2", "--checkpoint-every", "2",
            "--run-name", "testrun", "--out", str(runs), "--seed", "0",
        ]
    )
    assert rc == EXIT_OK
    return runs / "testrun"


class TestSynthAndSplit:
    def test_synth_outputs(self, synth_corpus):
        wavs = sorted(synth_corpus.glob("*.wav"))
        assert len(wavs) == 6
        assert (synth_corpus / "corpus_manifest.txt").exists()
        assert (synth_corpus / "run_manifest.json").exists()
        _, rate = read_wav(wavs[0])
        assert rate == 16000

    def test_synth_default_frequency(self, tmp_path):
        out = tmp_path / "defaults"
        assert main(["synth", str(out), "--files", "3", "--duration", "0.5"]) == EXIT_OK
        assert len(list(out.glob("*.wav"))) == 3

    def test_split_counts_and_durations(self, synth_corpus, tmp_path, capsys):
        out = tmp_path / "manifest.txt"
        rc = main(["split", str(synth_corpus), "--seed", "1", "--out", str(out)])
        assert rc == EXIT_OK
        lines = [l for l in out.read_text().splitlines() if l.strip()]
        assert len(lines) == 6
        captured = capsys.readouterr().out
        assert "train:" in captured


class TestTrain:
    def test_run_artifacts(self, trained_run):
        assert (trained_run / "trace.jsonl").exists()
        assert (trained_run / "config.json").exists()
        assert (trained_run / "layout.txt").exists()
        assert (trained_run / "checkpoints" / "final.npz").exists()
        assert (trained_run / "checkpoints" / "step_000002.npz").exists()
        assert (trained_run / "run_manifest.json").exists()
        manifest = json.loads((trained_run / "run_manifest.json").read_text())
        assert manifest["seed"] == 0
        assert manifest["command"] == "train"

    def test_paper_defaults(self):
        parser = build_parser()
        args = parser.parse_args(["train", "--corpus", "c", "--manifest", "m"])
        assert args.lr == 1e-4
        assert args.batch == 64
        assert args.monitor_every == 100
        assert args.checkpoint_every == 1000

    def test_wgan_trace_has_no_d2(self, synth_corpus, tiny_layout_file, tmp_path):
        rc = main(
            [
                "train", "--corpus", str(synth_corpus), "--manifest",
                str(synth_corpus / "corpus_manifest.txt"),
                "--arch", "wgan", "--preset", "tiny", "--layout", str(tiny_layout_file),
                "--steps", "2", "--batch", "2", "--critic-steps", "1",
                "--monitor-every", "1", "--checkpoint-every", "10",
                "--run-name", "w", "--out", str(tmp_path), "--seed", "0",
            ]
        )
        assert rc == EXIT_OK
        rows = [json.loads(l) for l in (tmp_path / "w" / "trace.jsonl").read_text().splitlines()]
        assert rows and all("d2" not in r for r in rows)

    def test_resume_flag(self, synth_corpus, tiny_layout_file, trained_run, tmp_path):
        rc = main(
            [
                "train", "--corpus", str(synth_corpus), "--manifest",
                str(synth_corpus / "corpus_manifest.txt"),
                "--preset", "tiny", "--layout", str(tiny_layout_file),
                "--steps", "6", "--batch", "4", "--critic-steps", "2",
                "--monitor-every", "2", "--checkpoint-every", "2",
                "--resume", str(trained_run / "checkpoints" / "final.npz"),
                "--run-name", "resumed", "--out", str(tmp_path), "--seed", "0",
            ]
        )
        assert rc == EXIT_OK
        rows = [json.loads(l) for l in (tmp_path / "resumed" / "trace.jsonl").read_text().splitlines()]
        assert [r["step"] for r in rows] == [6]

    def test_missing_manifest_is_usage_error(self, synth_corpus, tmp_path):
        rc = main(
            ["train", "--corpus", str(synth_corpus), "--manifest", str(tmp_path / "nope.txt"),
             "--out", str(tmp_path)]
        )
        assert rc == EXIT_USAGE


class TestEvalAndInpaint:
    def test_eval_artifacts(self, synth_corpus, trained_run, tmp_path):
        out = tmp_path / "evalset"
        rc = main(
            [
                "eval", str(trained_run / "checkpoints" / "final.npz"),
                "--corpus", str(synth_corpus), "--manifest", str(synth_corpus / "corpus_manifest.txt"),
                "--n", "2", "--render-limit", "1", "--out", str(out), "--seed", "0",
                "--dataset-label", "tones", "--model-label", "dual",
            ]
        )
        assert rc == EXIT_OK
        report = [json.loads(l) for l in (out / "report.jsonl").read_text().splitlines()]
        assert len(report) == 2
        assert {"pair_id", "lsd_db", "snr_db"} <= set(report[0])
        manifest_rows = [json.loads(l) for l in (out / "eval_manifest.jsonl").read_text().splitlines()]
        assert len(manifest_rows) == 4
        assert len(list((out / "spectrograms").glob("*.png"))) == 1
        assert (out / "run_manifest.json").exists()

    def test_inpaint_roundtrip(self, synth_corpus, trained_run, tmp_path):
        lay = tiny_layout()
        src = sorted(synth_corpus.glob("*.wav"))[0]
        out_path = tmp_path / "filled.wav"
        rc = main(
            [
                "inpaint", str(trained_run / "checkpoints" / "final.npz"), str(src),
                "--gap-start", str(lay.context_len), "--crossfade", "8",
                "--out", str(out_path), "--seed", "1",
            ]
        )
        assert rc == EXIT_OK
        original = read_wav_mono(src)
        filled = read_wav_mono(out_path)
        assert len(filled) == len(original)

    def test_bad_checkpoint_is_usage_error(self, synth_corpus, tmp_path):
        rc = main(
            ["eval", str(tmp_path / "missing.npz"), "--corpus", str(synth_corpus),
             "--manifest", str(synth_corpus / "corpus_manifest.txt"), "--out", str(tmp_path / "e")]
        )
        assert rc == EXIT_USAGE


class TestPreprocess:
    def make_input_dir(self, tmp_path, rate=48000):
        in_dir = tmp_path / "raw"
        in_dir.mkdir(exist_ok=True)
        t = np.arange(rate) / rate
        tone = 0.5 * np.sin(2 * np.pi * 1000 * t)
        write_wav(in_dir / "a.wav", np.stack([tone, tone * 0.5]), rate)
        write_wav(in_dir / "b.wav", tone, rate)
        return in_dir

    def test_piano_preset(self, tmp_path):
        in_dir = self.make_input_dir(tmp_path)
        out_dir = tmp_path / "out"
        rc = main(["preprocess", str(in_dir), str(out_dir), "--target", "piano48k"])
        assert rc == EXIT_OK
        channels, rate = read_wav(out_dir / "a.wav")
        assert rate == 16000
        assert channels.shape[0] == 1

    def test_solo_preset(self, tmp_path):
        in_dir = self.make_input_dir(tmp_path, rate=44100)
        out_dir = tmp_path / "out44"
        rc = main(["preprocess", str(in_dir), str(out_dir), "--target", "solo44k"])
        assert rc == EXIT_OK
        _, rate = read_wav(out_dir / "b.wav")
        assert rate == 14700

    def test_custom_requires_flags(self, tmp_path):
        in_dir = self.make_input_dir(tmp_path)
        rc = main(["preprocess", str(in_dir), str(tmp_path / "o"), "--target", "custom"])
        assert rc == EXIT_USAGE

    def test_empty_dir_fails(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["preprocess", str(empty), str(tmp_path / "o")]) == EXIT_USAGE

    def test_corrupt_file_skipped(self, tmp_path, capsys):
        in_dir = self.make_input_dir(tmp_path)
        (in_dir / "broken.wav").write_bytes(b"not a wav at all")
        out_dir = tmp_path / "out2"
        rc = main(["preprocess", str(in_dir), str(out_dir)])
        assert rc == EXIT_OK
        assert "skipping broken.wav" in capsys.readouterr().err
        assert not (out_dir / "broken.wav").exists()
        assert (out_dir / "a.wav").exists()

    def test_all_corrupt_is_runtime_error(self, tmp_path):
        in_dir = tmp_path / "bad"
        in_dir.mkdir()
        (in_dir / "x.wav").write_bytes(b"garbage")
        assert main(["preprocess", str(in_dir), str(tmp_path / "o")]) == EXIT_RUNTIME


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for(port, timeout=15.0):
    import httpx

    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            return httpx.get(f"http://127.0.0.1:{port}/v1/results", timeout=1.0)
        except httpx.TransportError:
            time.sleep(0.2)
    raise TimeoutError(f"server on {port} never came up")


class TestServe:
    @pytest.mark.parametrize("n_grades", [2])
    def test_kill_and_restart_preserves_grades(self, tmp_path, n_grades):
        import httpx

        from test_listen import build_eval_dir

        manifest = build_eval_dir(tmp_path)
        grades = tmp_path / "grades.jsonl"
        port = _free_port()
        cmd = [
            sys.executable, "-m", "wavegap.cli", "serve", str(manifest),
            "--grades", str(grades), "--port", str(port),
        ]
        proc = subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        try:
            _wait_for(port)
            base = f"http://127.0.0.1:{port}/v1"
            sid = httpx.post(f"{base}/sessions", json={"grader_id": "g", "seed": 0}).json()["session_id"]
            for _ in range(n_grades):
                pid = httpx.get(f"{base}/sessions/{sid}/next").headers["X-Presentation-Id"]
                assert httpx.post(
                    f"{base}/sessions/{sid}/grades", json={"presentation_id": pid, "odg": -2}
                ).status_code == 200
        finally:
            proc.send_signal(signal.SIGKILL)
            proc.wait()

        port2 = _free_port()
        cmd[cmd.index(str(port))] = str(port2)
        proc = subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        try:
            resp = _wait_for(port2)
            assert resp.json()["n_grades"] == n_grades
        finally:
            proc.send_signal(signal.SIGTERM)
            proc.wait()
