"""Generator and critic networks for single- and dual-critic training.

The generator encodes the short borders (and, in the dual architecture,
the decimated long borders), concatenates the embeddings with a standard
normal latent vector in the bottleneck, and decodes to the gap length
with transposed convolutions. Critics are plain conv stacks ending in a
dense scalar head with no output squashing, identical to each other up
to input length.

Checkpoints are versioned .npz containers of named parameter arrays plus
a JSON metadata blob; see `save_checkpoint` for the exact key schema.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .dataset import SegmentLayout

CHECKPOINT_FORMAT_VERSION = 1

ARCH_SINGLE = "wgan"
ARCH_DUAL = "d2wgan"
ARCHITECTURES = (ARCH_SINGLE, ARCH_DUAL)


class ShapeMismatchError(ValueError):
    """Input tensor shape does not match the configured geometry."""


class CheckpointFormatError(RuntimeError):
    """Checkpoint version or config hash does not match expectations."""


@dataclass(frozen=True)
class LatentSpec:
    """Standard normal latent input."""

    dim: int = 100

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"latent dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class ConvSpec:
    """Channel progression for a strided conv stack."""

    channels: tuple[int, ...]
    kernel: int = 25
    stride: int = 4

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels or any(c < 1 for c in self.channels):
            raise ValueError(f"channels must be non-empty positive ints, got {self.channels}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @property
    def padding(self) -> int:
        return (self.kernel - 1) // 2

    def out_len(self, in_len: int) -> int:
        n = in_len
        for _ in self.channels:
            n = (n - 1) // self.stride + 1
        return n


@dataclass(frozen=True)
class GeneratorConfig:
    layout: SegmentLayout
    latent: LatentSpec
    encoder: ConvSpec
    border_embed: int
    decoder_channels: tuple[int, ...]
    use_long_borders: bool

    def __post_init__(self):
        object.__setattr__(self, "decoder_channels", tuple(self.decoder_channels))
        n_up = len(self.decoder_channels)
        factor = self.encoder.stride**n_up
        if self.layout.gap_len % factor != 0:
            raise ValueError(
                f"gap_len {self.layout.gap_len} must be divisible by stride^layers = {factor}"
            )
        for name, ln in (("border1", self.layout.border1_len), ("border2_ds", self.layout.border2_ds_len)):
            if self.encoder.out_len(ln) < 1:
                raise ValueError(f"{name} length {ln} collapses to nothing in the encoder")

    @property
    def output_len(self) -> int:
        return self.layout.gap_len

    @property
    def seed_len(self) -> int:
        """Time length of the bottleneck feature map feeding the decoder."""
        return self.layout.gap_len // self.encoder.stride ** len(self.decoder_channels)


@dataclass(frozen=True)
class CriticConfig:
    input_len: int
    conv: ConvSpec

    def __post_init__(self):
        if self.input_len < 1:
            raise ValueError(f"input_len must be >= 1, got {self.input_len}")
        if self.conv.out_len(self.input_len) < 1:
            raise ValueError(f"input_len {self.input_len} collapses to nothing in the conv stack")


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild a generator and its critic(s)."""

    layout: SegmentLayout
    arch: str = ARCH_DUAL
    latent: LatentSpec = field(default_factory=LatentSpec)
    encoder: ConvSpec = field(default_factory=lambda: ConvSpec((32, 64, 128, 256)))
    border_embed: int = 256
    decoder_channels: tuple[int, ...] = (256, 128, 64, 32)
    critic: ConvSpec = field(default_factory=lambda: ConvSpec((32, 64, 128, 256, 512)))

    def __post_init__(self):
        object.__setattr__(self, "decoder_channels", tuple(self.decoder_channels))
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        self.generator_config()  # validate geometry eagerly
        self.critic_configs()

    @property
    def is_dual(self) -> bool:
        return self.arch == ARCH_DUAL

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            layout=self.layout,
            latent=self.latent,
            encoder=self.encoder,
            border_embed=self.border_embed,
            decoder_channels=self.decoder_channels,
            use_long_borders=self.is_dual,
        )

    def critic_configs(self) -> tuple[CriticConfig, ...]:
        short = CriticConfig(self.layout.real1_len, self.critic)
        if not self.is_dual:
            return (short,)
        return (short, CriticConfig(self.layout.real2_ds_len, self.critic))


def default_model_config(layout: SegmentLayout | None = None, arch: str = ARCH_DUAL) -> ModelConfig:
    """Full-scale preset."""
    return ModelConfig(layout=layout or SegmentLayout(), arch=arch)


def tiny_model_config(layout: SegmentLayout, arch: str = ARCH_DUAL) -> ModelConfig:
    """Two-layer, eight-channel preset for tests and demos."""
    return ModelConfig(
        layout=layout,
        arch=arch,
        latent=LatentSpec(dim=16),
        encoder=ConvSpec((8, 8)),
        border_embed=32,
        decoder_channels=(8, 8),
        critic=ConvSpec((8, 8)),
    )


# -- networks ----------------------------------------------------------------


class BorderEncoder(nn.Module):
    """Conv stack over a (left, right) border pair, flattened to an embedding."""

    def __init__(self, in_len: int, conv: ConvSpec, embed_dim: int):
        super().__init__()
        self.in_len = in_len
        layers: list[nn.Module] = []
        prev = 2  # left and right border as channels
        for ch in conv.channels:
            layers.append(nn.Conv1d(prev, ch, conv.kernel, stride=conv.stride, padding=conv.padding))
            layers.append(nn.ReLU())
            prev = ch
        self.convs = nn.Sequential(*layers)
        self.flat_dim = prev * conv.out_len(in_len)
        self.project = nn.Linear(self.flat_dim, embed_dim)

    def forward(self, pair: torch.Tensor) -> torch.Tensor:
        h = self.convs(pair)
        return self.project(h.flatten(1))


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        layout = cfg.layout
        self.enc_short = BorderEncoder(layout.border1_len, cfg.encoder, cfg.border_embed)
        self.enc_long = (
            BorderEncoder(layout.border2_ds_len, cfg.encoder, cfg.border_embed)
            if cfg.use_long_borders
            else None
        )
        n_embed = cfg.border_embed * (2 if cfg.use_long_borders else 1)
        c0 = cfg.decoder_channels[0]
        self.seed_channels = c0
        self.project = nn.Linear(n_embed + cfg.latent.dim, c0 * cfg.seed_len)

        chain = list(cfg.decoder_channels) + [1]
        k, s = cfg.encoder.kernel, cfg.encoder.stride
        ups: list[nn.Module] = []
        for i in range(len(chain) - 1):
            ups.append(
                nn.ConvTranspose1d(
                    chain[i], chain[i + 1], k, stride=s, padding=(k - 1) // 2, output_padding=s - 1
                )
            )
            if i < len(chain) - 2:
                ups.append(nn.ReLU())
        self.decoder = nn.Sequential(*ups)

    def forward(
        self,
        borders1: torch.Tensor,
        borders2_ds: torch.Tensor | None,
        z: torch.Tensor,
    ) -> torch.Tensor:
        """borders1: [b, 2, B1]; borders2_ds: [b, 2, B2/ds] or None; z: [b, dim] -> [b, Lg]."""
        cfg = self.cfg
        _expect(borders1, (None, 2, cfg.layout.border1_len), "borders1")
        _expect(z, (borders1.shape[0], cfg.latent.dim), "z")
        parts = [self.enc_short(borders1)]
        if self.enc_long is not None:
            if borders2_ds is None:
                raise ShapeMismatchError("this generator conditions on long borders; borders2_ds is required")
            _expect(borders2_ds, (borders1.shape[0], 2, cfg.layout.border2_ds_len), "borders2_ds")
            parts.append(self.enc_long(borders2_ds))
        elif borders2_ds is not None:
            raise ShapeMismatchError("single-border generator got unexpected borders2_ds")
        parts.append(z)
        h = torch.relu(self.project(torch.cat(parts, dim=1)))
        h = h.view(-1, self.seed_channels, cfg.seed_len)
        return torch.tanh(self.decoder(h)).squeeze(1)


class Critic(nn.Module):
    """Unbounded scalar score per input; no terminal nonlinearity."""

    def __init__(self, cfg: CriticConfig):
        super().__init__()
        self.cfg = cfg
        layers: list[nn.Module] = []
        prev = 1
        for ch in cfg.conv.channels:
            layers.append(nn.Conv1d(prev, ch, cfg.conv.kernel, stride=cfg.conv.stride, padding=cfg.conv.padding))
            layers.append(nn.LeakyReLU(0.2))
            prev = ch
        self.convs = nn.Sequential(*layers)
        self.head = nn.Linear(prev * cfg.conv.out_len(cfg.input_len), 1)

    def forward(self, assembly: torch.Tensor) -> torch.Tensor:
        """[b, input_len] or [b, 1, input_len] -> [b] scores."""
        if assembly.dim() == 2:
            assembly = assembly.unsqueeze(1)
        _expect(assembly, (None, 1, self.cfg.input_len), "assembly")
        h = self.convs(assembly)
        return self.head(h.flatten(1)).squeeze(1)


def _expect(t: torch.Tensor, shape: tuple, name: str) -> None:
    if t.dim() != len(shape) or any(s is not None and t.shape[i] != s for i, s in enumerate(shape)):
        want = tuple("b" if s is None else s for s in shape)
        raise ShapeMismatchError(f"{name}: expected shape {want}, got {tuple(t.shape)}")


def build_models(config: ModelConfig, seed: int = 0) -> tuple[Generator, list[Critic]]:
    """Construct generator and critic(s) with seeded, reproducible init."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        gen = Generator(config.generator_config())
        critics = [Critic(cc) for cc in config.critic_configs()]
        for module in [gen, *critics]:
            for m in module.modules():
                if isinstance(m, (nn.Conv1d, nn.ConvTranspose1d, nn.Linear)):
                    nn.init.normal_(m.weight, 0.0, 0.02)
                    nn.init.zeros_(m.bias)
    return gen, critics


# -- numpy-facing forward wrappers -------------------------------------------


def _pair_to_tensor(pair, expected_len: int, name: str) -> torch.Tensor:
    left = np.atleast_2d(np.asarray(pair[0], dtype=np.float32))
    right = np.atleast_2d(np.asarray(pair[1], dtype=np.float32))
    if left.shape != right.shape or left.shape[1] != expected_len:
        raise ShapeMismatchError(
            f"{name}: expected a pair of length-{expected_len} arrays, got {left.shape} and {right.shape}"
        )
    return torch.from_numpy(np.stack([left, right], axis=1))


def generator_forward(gen: Generator, borders1, borders2_ds, z) -> np.ndarray:
    """Run the generator on numpy border pairs and latent; returns [Lg] or [b, Lg]."""
    layout = gen.cfg.layout
    b1 = _pair_to_tensor(borders1, layout.border1_len, "borders1")
    b2 = None
    if gen.cfg.use_long_borders:
        if borders2_ds is None:
            raise ShapeMismatchError("dual-branch generator requires borders2_ds")
        b2 = _pair_to_tensor(borders2_ds, layout.border2_ds_len, "borders2_ds")
    z_arr = np.atleast_2d(np.asarray(z, dtype=np.float32))
    if z_arr.shape != (b1.shape[0], gen.cfg.latent.dim):
        raise ShapeMismatchError(
            f"z: expected shape ({b1.shape[0]}, {gen.cfg.latent.dim}), got {z_arr.shape}"
        )
    batched = np.asarray(borders1[0]).ndim == 2
    with torch.no_grad():
        out = gen(b1, b2, torch.from_numpy(z_arr)).numpy()
    return out if batched else out[0]


def critic_forward(critic: Critic, assembly) -> float | np.ndarray:
    """Score one assembly (1-D) or a batch (2-D) with the critic."""
    arr = np.asarray(assembly, dtype=np.float32)
    batched = arr.ndim == 2
    arr2 = np.atleast_2d(arr)
    if arr2.shape[1] != critic.cfg.input_len:
        raise ShapeMismatchError(
            f"assembly: expected length {critic.cfg.input_len}, got {arr2.shape[1]}"
        )
    with torch.no_grad():
        scores = critic(torch.from_numpy(arr2)).numpy()
    return scores if batched else float(scores[0])


# -- assemblies ---------------------------------------------------------------


def assemble_fake(seg, gap_fake: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Splice a generated gap into the segment's borders.

    Returns (fake1, fake2_ds): short assembly at full rate, long assembly
    decimated by the layout's long-branch factor.
    """
    layout = seg.layout
    gap_fake = np.asarray(gap_fake, dtype=np.float64)
    if gap_fake.shape != (layout.gap_len,):
        raise ShapeMismatchError(f"gap_fake: expected shape ({layout.gap_len},), got {gap_fake.shape}")
    b1l, b1r = seg.borders1
    b2l, b2r = seg.borders2
    fake1 = np.concatenate([b1l, gap_fake, b1r])
    fake2_ds = np.concatenate([b2l, gap_fake, b2r])[:: layout.long_branch_downsample]
    return fake1, fake2_ds


def assemble_real(seg) -> tuple[np.ndarray, np.ndarray]:
    """Real counterparts of assemble_fake, built from the true gap."""
    return assemble_fake(seg, seg.gap)


def assemble_batch(
    b1l: torch.Tensor,
    b1r: torch.Tensor,
    b2l: torch.Tensor,
    b2r: torch.Tensor,
    gap: torch.Tensor,
    downsample: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Torch batch assembly used in the training loop; differentiable in gap."""
    fake1 = torch.cat([b1l, gap, b1r], dim=1)
    fake2_ds = torch.cat([b2l, gap, b2r], dim=1)[:, ::downsample]
    return fake1, fake2_ds


# -- Lipschitz bound ----------------------------------------------------------


def critic_lipschitz_bound(critic: Critic) -> float:
    """Upper bound on the critic's Lipschitz constant (L2 in, |score| out).

    Each linear/conv layer's operator norm is bounded by the Schur test
    sqrt(max row sum * max col sum) of absolute weights; the conv bound
    sums over all taps, which over-counts and stays a valid upper bound.
    LeakyReLU contributes a factor of 1.
    """
    bound = 1.0
    for m in critic.modules():
        if isinstance(m, nn.Conv1d):
            w = m.weight.detach().abs()
            row = w.sum(dim=(1, 2)).max()
            col = w.sum(dim=(0, 2)).max()
            bound *= float(torch.sqrt(row * col))
        elif isinstance(m, nn.Linear):
            w = m.weight.detach().abs()
            bound *= float(torch.sqrt(w.sum(dim=1).max() * w.sum(dim=0).max()))
    return bound


# -- config serialization and checkpoints -------------------------------------


def config_to_dict(config: ModelConfig) -> dict:
    d = dataclasses.asdict(config)
    return d


def config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        layout=SegmentLayout(**d["layout"]),
        arch=d["arch"],
        latent=LatentSpec(**d["latent"]),
        encoder=ConvSpec(tuple(d["encoder"]["channels"]), d["encoder"]["kernel"], d["encoder"]["stride"]),
        border_embed=d["border_embed"],
        decoder_channels=tuple(d["decoder_channels"]),
        critic=ConvSpec(tuple(d["critic"]["channels"]), d["critic"]["kernel"], d["critic"]["stride"]),
    )


def config_hash(config: ModelConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class Checkpoint:
    step: int
    batches_consumed: int
    config: ModelConfig
    params: dict[str, dict[str, np.ndarray]]
    opt_state: dict | None
    latent_rng_state: np.ndarray | None
    extra: dict
    config_hash: str

    def build(self) -> tuple[Generator, list[Critic]]:
        """Reconstruct the networks with the stored parameters."""
        gen, critics = build_models(self.config, seed=0)
        _load_state(gen, self.params["gen"])
        for i, critic in enumerate(critics):
            _load_state(critic, self.params[f"critic{i}"])
        return gen, critics


def _net_state(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().numpy().copy() for k, v in module.state_dict().items()}


def _load_state(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    module.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})


def optimizer_state_arrays(opt: torch.optim.Optimizer, param_names: list[str]) -> dict:
    """Flatten Adam state into named numpy arrays (exp_avg, exp_avg_sq, step)."""
    sd = opt.state_dict()
    out: dict[str, dict[str, np.ndarray]] = {}
    for idx, state in sd["state"].items():
        name = param_names[idx]
        entry = {}
        for key, val in state.items():
            if isinstance(val, torch.Tensor):
                entry[key] = val.detach().numpy().copy()
            else:
                entry[key] = np.asarray(val, dtype=np.float64)
        out[name] = entry
    return out


def load_optimizer_state(opt: torch.optim.Optimizer, param_names: list[str], arrays: dict) -> None:
    sd = opt.state_dict()
    state = {}
    for idx, name in enumerate(param_names):
        if name in arrays:
            entry = {}
            for key, val in arrays[name].items():
                if key == "step":
                    entry[key] = torch.tensor(float(val))
                else:
                    entry[key] = torch.from_numpy(np.asarray(val).copy())
            state[idx] = entry
    sd["state"] = state
    opt.load_state_dict(sd)


def save_checkpoint(
    path,
    step: int,
    batches_consumed: int,
    config: ModelConfig,
    gen: Generator,
    critics: Sequence[Critic],
    opt_arrays: dict | None = None,
    latent_rng_state: np.ndarray | None = None,
    extra: dict | None = None,
) -> None:
    """Write a versioned .npz checkpoint.

    Keys: param/<net>/<tensor> for parameters, opt/... for flattened
    optimizer state, rng/latent for the torch generator state, and meta
    (uint8 JSON) for step/config/hash bookkeeping.
    """
    arrays: dict[str, np.ndarray] = {}
    for name, arr in _net_state(gen).items():
        arrays[f"param/gen/{name}"] = arr
    for i, critic in enumerate(critics):
        for name, arr in _net_state(critic).items():
            arrays[f"param/critic{i}/{name}"] = arr
    if opt_arrays:
        for net, net_state in opt_arrays.items():
            for pname, entry in net_state.items():
                for key, arr in entry.items():
                    arrays[f"opt/{net}/{pname}/{key}"] = arr
    if latent_rng_state is not None:
        arrays["rng/latent"] = np.asarray(latent_rng_state, dtype=np.uint8)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": step,
        "batches_consumed": batches_consumed,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "n_critics": len(critics),
        "extra": extra or {},
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(bytes(arrays.pop("meta")).decode())
    if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: checkpoint format version {meta['format_version']} != "
            f"supported {CHECKPOINT_FORMAT_VERSION}"
        )
    config = config_from_dict(meta["config"])
    if config_hash(config) != meta["config_hash"]:
        raise CheckpointFormatError(f"{path}: embedded config does not match its recorded hash")

    params: dict[str, dict[str, np.ndarray]] = {}
    opt_state: dict = {}
    latent_rng = None
    for key, arr in arrays.items():
        kind, _, rest = key.partition("/")
        if kind == "param":
            net, _, pname = rest.partition("/")
            params.setdefault(net, {})[pname] = arr
        elif kind == "opt":
            net, _, tail = rest.partition("/")
            pname, _, skey = tail.rpartition("/")
            opt_state.setdefault(net, {}).setdefault(pname, {})[skey] = arr
        elif key == "rng/latent":
            latent_rng = arr
    return Checkpoint(
        step=int(meta["step"]),
        batches_consumed=int(meta["batches_consumed"]),
        config=config,
        params=params,
        opt_state=opt_state or None,
        latent_rng_state=latent_rng,
        extra=meta.get("extra", {}),
        config_hash=meta["config_hash"],
    )
