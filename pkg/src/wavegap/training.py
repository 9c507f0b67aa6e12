"""Wasserstein losses, Lipschitz enforcement, and the training loop.

The critic minimizes mean(fake scores) - mean(real scores); the
generator minimizes the negated fake-score means. One step is one
generator iteration: `critic_steps_per_gen_step` critic updates followed
by a single generator update, each on a fresh batch.

Everything stochastic derives from TrainConfig.seed, so two runs with
the same config produce identical loss traces, and a checkpointed run
resumes bit-identically (prefetch disabled).
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .dataset import Segment, stream_batches
from .model import (
    Checkpoint,
    CheckpointFormatError,
    Critic,
    Generator,
    ModelConfig,
    assemble_batch,
    build_models,
    config_hash,
    config_to_dict,
    load_checkpoint,
    load_optimizer_state,
    optimizer_state_arrays,
    save_checkpoint,
)

LIPSCHITZ_MODES = ("clip", "gp")


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; see .snapshot for the diagnostic dump."""

    def __init__(self, message: str, snapshot: dict, snapshot_path: Path | None):
        super().__init__(message)
        self.snapshot = snapshot
        self.snapshot_path = snapshot_path


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    critic_steps_per_gen_step: int = 5
    clip_value: float = 0.01
    lipschitz_mode: str = "clip"
    gp_lambda: float = 10.0
    adam_betas: tuple[float, float] = (0.5, 0.9)
    monitor_every: int = 100
    checkpoint_every: int = 1000
    total_steps: int = 1000
    seed: int = 0
    window_size: int = 64
    stride: int | None = None
    prefetch: bool = False
    critic_weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        positives = (
            ("learning_rate", self.learning_rate),
            ("batch_size", self.batch_size),
            ("critic_steps_per_gen_step", self.critic_steps_per_gen_step),
            ("monitor_every", self.monitor_every),
            ("checkpoint_every", self.checkpoint_every),
            ("total_steps", self.total_steps),
        )
        for name, value in positives:
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.lipschitz_mode not in LIPSCHITZ_MODES:
            raise ValueError(f"lipschitz_mode must be one of {LIPSCHITZ_MODES}")
        if self.lipschitz_mode == "clip" and self.clip_value <= 0:
            raise ValueError(f"clip_value must be positive, got {self.clip_value}")
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        object.__setattr__(self, "critic_weights", tuple(self.critic_weights))


@dataclass
class TrainRun:
    run_dir: Path
    rows: list[dict]
    checkpoint_paths: list[Path]
    final_checkpoint: Path
    total_steps: int

    def column(self, key: str) -> list[float]:
        return [row[key] for row in self.rows if key in row]


# -- loss algebra --------------------------------------------------------------


def _scores(x, name: str) -> torch.Tensor:
    t = torch.as_tensor(x, dtype=torch.float32) if not isinstance(x, torch.Tensor) else x
    if t.numel() == 0:
        raise ValueError(f"{name}: empty score batch")
    return t


def critic_loss(scores_real, scores_fake) -> torch.Tensor:
    """mean(fake) - mean(real); minimizing this maximizes the Wasserstein surrogate."""
    real = _scores(scores_real, "scores_real")
    fake = _scores(scores_fake, "scores_fake")
    if real.numel() != fake.numel():
        raise ValueError(f"batch sizes differ: {real.numel()} real vs {fake.numel()} fake")
    return fake.mean() - real.mean()


def total_critic_loss(l_d1, l_d2, weights: tuple[float, float] = (1.0, 1.0)):
    """Weighted sum of the two critic losses; 1:1 by default."""
    return weights[0] * l_d1 + weights[1] * l_d2


def generator_loss(scores_fake_d1, scores_fake_d2=None) -> torch.Tensor:
    """Negated mean fake scores, summed over however many critics exist."""
    loss = -_scores(scores_fake_d1, "scores_fake_d1").mean()
    if scores_fake_d2 is not None:
        loss = loss - _scores(scores_fake_d2, "scores_fake_d2").mean()
    return loss


def enforce_lipschitz(critic_params, clip_value: float):
    """Clamp every parameter into [-clip_value, clip_value], in place.

    Accepts a module, an iterable of tensors, or numpy arrays; returns
    the same object for convenience.
    """
    if clip_value <= 0:
        raise ValueError(f"clip_value must be positive, got {clip_value}")
    params: Iterable
    if isinstance(critic_params, nn.Module):
        params = critic_params.parameters()
    else:
        params = critic_params
    for p in params:
        if isinstance(p, torch.Tensor):
            with torch.no_grad():
                p.clamp_(-clip_value, clip_value)
        else:
            np.clip(p, -clip_value, clip_value, out=p)
    return critic_params


def gradient_penalty(
    critic: nn.Module,
    real: torch.Tensor,
    fake: torch.Tensor,
    lam: float = 10.0,
    rng: torch.Generator | None = None,
) -> torch.Tensor:
    """lam * mean((||grad_x D(x_hat)|| - 1)^2) on real/fake interpolates."""
    eps = torch.rand(real.shape[0], 1, generator=rng, dtype=real.dtype)
    x_hat = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    scores = critic(x_hat)
    grads = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)[0]
    norms = grads.flatten(1).norm(2, dim=1)
    return lam * ((norms - 1.0) ** 2).mean()


# -- batch plumbing ------------------------------------------------------------


def _batch_tensors(batch: Sequence[Segment]) -> dict[str, torch.Tensor]:
    layout = batch[0].layout
    ds = layout.long_branch_downsample

    def stack(parts):
        return torch.from_numpy(np.stack(parts).astype(np.float32))

    b1l = stack([s.borders1[0] for s in batch])
    b1r = stack([s.borders1[1] for s in batch])
    b2l = stack([s.borders2[0] for s in batch])
    b2r = stack([s.borders2[1] for s in batch])
    gap = stack([s.gap for s in batch])
    real1, real2_ds = assemble_batch(b1l, b1r, b2l, b2r, gap, ds)
    return {
        "b1": torch.stack([b1l, b1r], dim=1),
        "b2_ds": torch.stack([b2l[:, ::ds], b2r[:, ::ds]], dim=1),
        "b1l": b1l,
        "b1r": b1r,
        "b2l": b2l,
        "b2r": b2r,
        "real1": real1,
        "real2_ds": real2_ds,
    }


def _fake_assemblies(t: dict[str, torch.Tensor], gap_fake: torch.Tensor, ds: int):
    return assemble_batch(t["b1l"], t["b1r"], t["b2l"], t["b2r"], gap_fake, ds)


# -- training loop -------------------------------------------------------------


def _write_jsonl(path: Path, row: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(row) + "\n")


def train(
    config: ModelConfig,
    corpus,
    files: Sequence[str],
    cfg: TrainConfig,
    run_dir,
    resume_from: Checkpoint | None = None,
    update_callback: Callable[[str, int, Generator, list[Critic]], None] | None = None,
) -> TrainRun:
    """Run the alternating critic/generator loop and write run artifacts.

    The run directory receives config.json, layout.txt, an append-only
    trace.jsonl, scheduled checkpoints under checkpoints/, and final.npz.
    A non-finite loss aborts with a diagnostic snapshot instead of being
    skipped.
    """
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run_dir / "layout.txt").write_text(config.layout.to_text())
    (run_dir / "config.json").write_text(
        json.dumps(
            {"model": config_to_dict(config), "train": dataclasses.asdict(cfg), "files": list(files)},
            indent=2,
            sort_keys=True,
        )
    )

    latent_rng = torch.Generator()
    if resume_from is None:
        gen, critics = build_models(config, seed=cfg.seed)
        latent_rng.manual_seed(cfg.seed)
        start_step, batches_consumed = 0, 0
    else:
        if config_hash(resume_from.config) != config_hash(config):
            raise CheckpointFormatError(
                f"checkpoint config hash {config_hash(resume_from.config)[:12]} does not match "
                f"requested config hash {config_hash(config)[:12]}"
            )
        gen, critics = resume_from.build()
        if resume_from.latent_rng_state is None:
            raise CheckpointFormatError("checkpoint lacks the latent RNG state needed to resume")
        latent_rng.set_state(torch.from_numpy(resume_from.latent_rng_state.copy()))
        start_step, batches_consumed = resume_from.step, resume_from.batches_consumed
    if start_step >= cfg.total_steps:
        raise ValueError(f"nothing to do: checkpoint step {start_step} >= total_steps {cfg.total_steps}")

    nets = {"gen": gen, **{f"critic{i}": c for i, c in enumerate(critics)}}
    param_names = {name: [n for n, _ in net.named_parameters()] for name, net in nets.items()}
    opts = {
        name: torch.optim.Adam(net.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)
        for name, net in nets.items()
    }
    if resume_from is not None and resume_from.opt_state:
        for name, opt in opts.items():
            if name in resume_from.opt_state:
                load_optimizer_state(opt, param_names[name], resume_from.opt_state[name])

    stream = stream_batches(
        corpus,
        files,
        config.layout,
        cfg.batch_size,
        seed=cfg.seed,
        window_size=cfg.window_size,
        stride=cfg.stride,
        prefetch=cfg.prefetch,
    )
    if batches_consumed:
        stream.skip(batches_consumed)
    batches = iter(stream)

    def next_batch() -> dict[str, torch.Tensor]:
        batch = next(batches, None)
        if batch is None:
            raise RuntimeError("data stream exhausted before total_steps was reached")
        return _batch_tensors(batch)

    def save(step: int, path: Path) -> None:
        opt_arrays = {name: optimizer_state_arrays(opt, param_names[name]) for name, opt in opts.items()}
        save_checkpoint(
            path,
            step=step,
            batches_consumed=stream.batches_consumed,
            config=config,
            gen=gen,
            critics=critics,
            opt_arrays=opt_arrays,
            latent_rng_state=latent_rng.get_state().numpy(),
            extra={"train_config": dataclasses.asdict(cfg)},
        )

    def abort(step: int, losses: dict) -> None:
        snapshot = {
            "step": step,
            "losses": {k: float(v) for k, v in losses.items()},
            "batches_consumed": stream.batches_consumed,
            "seed": cfg.seed,
        }
        snap_path = run_dir / "divergence_snapshot.json"
        snap_path.write_text(json.dumps(snapshot, indent=2))
        raise TrainingDiverged(
            f"non-finite loss at step {step}: {snapshot['losses']}", snapshot, snap_path
        )

    ds = config.layout.long_branch_downsample
    weights = cfg.critic_weights
    rows: list[dict] = []
    checkpoint_paths: list[Path] = []
    trace_path = run_dir / "trace.jsonl"

    for step in range(start_step + 1, cfg.total_steps + 1):
        t0 = time.perf_counter()
        d_losses = [0.0] * len(critics)
        for _ in range(cfg.critic_steps_per_gen_step):
            t = next_batch()
            z = torch.randn(cfg.batch_size, config.latent.dim, generator=latent_rng)
            with torch.no_grad():
                gap_fake = gen(t["b1"], t["b2_ds"] if config.is_dual else None, z)
            fake1, fake2_ds = _fake_assemblies(t, gap_fake, ds)

            losses = [critic_loss(critics[0](t["real1"]), critics[0](fake1))]
            if config.is_dual:
                losses.append(critic_loss(critics[1](t["real2_ds"]), critics[1](fake2_ds)))
            total = total_critic_loss(losses[0], losses[1], weights) if config.is_dual else losses[0]

            objective = total
            if cfg.lipschitz_mode == "gp":
                objective = objective + gradient_penalty(
                    critics[0], t["real1"], fake1, cfg.gp_lambda, latent_rng
                )
                if config.is_dual:
                    objective = objective + gradient_penalty(
                        critics[1], t["real2_ds"], fake2_ds, cfg.gp_lambda, latent_rng
                    )
            for opt_name in (f"critic{i}" for i in range(len(critics))):
                opts[opt_name].zero_grad(set_to_none=True)
            objective.backward()
            for i, critic in enumerate(critics):
                opts[f"critic{i}"].step()
                if cfg.lipschitz_mode == "clip":
                    enforce_lipschitz(critic, cfg.clip_value)
            d_losses = [float(l.detach()) for l in losses]
            if update_callback is not None:
                update_callback("critic_update", step, gen, critics)

        t = next_batch()
        z = torch.randn(cfg.batch_size, config.latent.dim, generator=latent_rng)
        gap_fake = gen(t["b1"], t["b2_ds"] if config.is_dual else None, z)
        fake1, fake2_ds = _fake_assemblies(t, gap_fake, ds)
        g_loss = generator_loss(
            critics[0](fake1), critics[1](fake2_ds) if config.is_dual else None
        )
        opts["gen"].zero_grad(set_to_none=True)
        g_loss.backward()
        opts["gen"].step()
        if update_callback is not None:
            update_callback("gen_update", step, gen, critics)

        d_total = sum(w * l for w, l in zip(weights, d_losses)) if config.is_dual else d_losses[0]
        g_val = float(g_loss.detach())
        all_losses = {"d_total": d_total, "g": g_val}
        if not all(math.isfinite(v) for v in [*d_losses, d_total, g_val]):
            abort(step, {**all_losses, **{f"d{i + 1}": v for i, v in enumerate(d_losses)}})

        if step % cfg.monitor_every == 0:
            wall_ms = (time.perf_counter() - t0) * 1000.0
            row = {"step": step, "d1": d_losses[0]}
            if config.is_dual:
                row["d2"] = d_losses[1]
            row.update({"d_total": d_total, "g": g_val, "wall_ms": wall_ms})
            rows.append(row)
            _write_jsonl(trace_path, row)

        if step % cfg.checkpoint_every == 0:
            path = run_dir / "checkpoints" / f"step_{step:06d}.npz"
            save(step, path)
            checkpoint_paths.append(path)

    final_path = run_dir / "checkpoints" / "final.npz"
    save(cfg.total_steps, final_path)
    return TrainRun(
        run_dir=run_dir,
        rows=rows,
        checkpoint_paths=checkpoint_paths,
        final_checkpoint=final_path,
        total_steps=cfg.total_steps,
    )


def resume(
    checkpoint_path,
    corpus,
    files: Sequence[str],
    cfg: TrainConfig,
    run_dir,
    expect_config: ModelConfig | None = None,
    update_callback=None,
) -> TrainRun:
    """Continue a checkpointed run until cfg.total_steps.

    The model config comes from the checkpoint; pass expect_config to
    assert it matches what the caller thinks it is (layout changes are
    rejected via the config hash).
    """
    ckpt = load_checkpoint(checkpoint_path)
    if expect_config is not None and config_hash(expect_config) != config_hash(ckpt.config):
        raise CheckpointFormatError(
            f"checkpoint config hash {config_hash(ckpt.config)[:12]} != "
            f"expected {config_hash(expect_config)[:12]} (layout or architecture changed)"
        )
    return train(
        ckpt.config,
        corpus,
        files,
        cfg,
        run_dir,
        resume_from=ckpt,
        update_callback=update_callback,
    )


def loss_columns(rows: Sequence[dict]) -> list[tuple]:
    """Trace rows minus wall-clock, for determinism comparisons."""
    keys = ("step", "d1", "d2", "d_total", "g")
    return [tuple(row.get(k) for k in keys) for row in rows]


def read_trace(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


# -- 1-D toy mode ---------------------------------------------------------------


class ToyCritic(nn.Module):
    """Small dense net scoring scalars; used to estimate W1 on 1-D samples."""

    def __init__(self, hidden: tuple[int, ...] = (64, 64)):
        super().__init__()
        layers: list[nn.Module] = []
        prev = 1
        for h in hidden:
            layers += [nn.Linear(prev, h), nn.LeakyReLU(0.2)]
            prev = h
        layers.append(nn.Linear(prev, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 1:
            x = x.unsqueeze(1)
        return self.net(x).squeeze(1)


class ToyGaussianGenerator(nn.Module):
    """Degenerate generator: a learnable 1-D Gaussian (mean, log sigma)."""

    def __init__(self, mean: float = 0.0, log_sigma: float = 0.0):
        super().__init__()
        self.mean = nn.Parameter(torch.tensor(float(mean)))
        self.log_sigma = nn.Parameter(torch.tensor(float(log_sigma)))

    def sample(self, n: int, rng: torch.Generator | None = None) -> torch.Tensor:
        z = torch.randn(n, generator=rng)
        return self.mean + torch.exp(self.log_sigma) * z


@dataclass(frozen=True)
class ToyConfig:
    # gp_lambda is stiffer here than in waveform training: the scalar task
    # converges fast and the estimate's bias scales like 1/lambda.
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    batch_size: int = 256
    steps: int = 2000
    lipschitz_mode: str = "gp"
    gp_lambda: float = 50.0
    clip_value: float = 0.01
    adam_betas: tuple[float, float] = (0.5, 0.9)
    monitor_every: int = 10
    eval_samples: int = 10000
    seed: int = 0


@dataclass
class ToyRun:
    critic: ToyCritic
    rows: list[dict]  # step, w1_estimate
    final_estimate: float


def critic_w1_estimate(critic: ToyCritic, xs, ys) -> float:
    """mean D(xs) - mean D(ys): the critic's view of W1(xs, ys)."""
    with torch.no_grad():
        a = critic(torch.as_tensor(np.asarray(xs), dtype=torch.float32))
        b = critic(torch.as_tensor(np.asarray(ys), dtype=torch.float32))
    return float(a.mean() - b.mean())


def train_toy_critic(sample_p: Callable, sample_q: Callable, cfg: ToyConfig = ToyConfig()) -> ToyRun:
    """Train a dense critic between two 1-D samplers and track its W1 estimate.

    sample_p/sample_q: callables (rng: np.random.Generator, n) -> array.
    Uses the gradient-penalty objective by default: with weight clipping
    alone the critic's scale is not pinned to 1-Lipschitz, so its
    estimate would be off by an unknown constant.
    """
    ss = np.random.SeedSequence(cfg.seed)
    np_rng = np.random.default_rng(ss)
    torch_rng = torch.Generator()
    torch_rng.manual_seed(cfg.seed)

    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        critic = ToyCritic(cfg.hidden)
    opt = torch.optim.Adam(critic.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)

    eval_p = np.asarray(sample_p(np_rng, cfg.eval_samples), dtype=np.float64)
    eval_q = np.asarray(sample_q(np_rng, cfg.eval_samples), dtype=np.float64)

    rows: list[dict] = []
    for step in range(1, cfg.steps + 1):
        xs = torch.as_tensor(sample_p(np_rng, cfg.batch_size), dtype=torch.float32)
        ys = torch.as_tensor(sample_q(np_rng, cfg.batch_size), dtype=torch.float32)
        loss = critic_loss(critic(xs), critic(ys))
        if cfg.lipschitz_mode == "gp":
            loss = loss + gradient_penalty(
                critic, xs.unsqueeze(1), ys.unsqueeze(1), cfg.gp_lambda, torch_rng
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if cfg.lipschitz_mode == "clip":
            enforce_lipschitz(critic, cfg.clip_value)
        if step % cfg.monitor_every == 0:
            rows.append({"step": step, "w1_estimate": critic_w1_estimate(critic, eval_p, eval_q)})

    return ToyRun(critic=critic, rows=rows, final_estimate=critic_w1_estimate(critic, eval_p, eval_q))
