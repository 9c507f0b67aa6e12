"""Blind listening test round trip, fully in process.

Builds a small blinded eval set from a randomly initialized model,
drives the HTTP API with a scripted grader, and prints the unblinded
aggregate table at the end. Grades persist to a line-delimited log that
survives restarts.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from wavegap.dataset import ArrayCorpus, make_synthetic_corpus, tiny_layout
from wavegap.listen import ListenStore, create_app
from wavegap.model import build_models, load_checkpoint, save_checkpoint, tiny_model_config
from wavegap.reconstruct import batch_generate_eval_set

work = Path(tempfile.mkdtemp(prefix="wavegap_listen_demo_"))
lay = tiny_layout()
config = tiny_model_config(lay)
gen, critics = build_models(config, seed=0)
save_checkpoint(work / "ckpt.npz", 0, 0, config, gen, critics)

waves = make_synthetic_corpus([440.0], n_files=3, duration_s=2.0, sample_rate_hz=16000,
                              seed=2, layout=lay, noise_db=-45)
corpus = ArrayCorpus.from_waveforms(waves)
evalset = batch_generate_eval_set(
    load_checkpoint(work / "ckpt.npz"), corpus, corpus.file_ids(),
    n_samples=6, seed=4, out_dir=work, dataset_label="tones", model_label="dual-critic",
)
print(f"eval set: {len(evalset.records)} blinded presentations under {work}")

store = ListenStore(evalset.manifest_path, work / "grades.jsonl")
client = TestClient(create_app(store))

session = client.post("/v1/sessions", json={"grader_id": "demo", "seed": 0}).json()
print(f"session {session['session_id']}: {session['total']} clips to grade")

scripted = [-2, -1, -3, -2, 0, -2]
for grade in scripted:
    nxt = client.get(f"/v1/sessions/{session['session_id']}/next")
    pid = nxt.headers["X-Presentation-Id"]
    client.post(
        f"/v1/sessions/{session['session_id']}/grades",
        json={"presentation_id": pid, "odg": grade},
    )
    print(f"  {pid}: graded {grade} ({len(nxt.content)} audio bytes served, role hidden)")

results = client.get("/v1/results").json()
row = results["rows"][0]
print(f"\nunblinded aggregate for {row['model']} on {row['dataset']}:")
print(f"  counts {row['counts']}, n {row['n']}, mean {row['mean']:.2f}, std {row['std']:.2f}")
print(f"grade log: {work / 'grades.jsonl'}")
