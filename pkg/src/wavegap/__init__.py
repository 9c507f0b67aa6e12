"""wavegap: adversarial inpainting of long gaps in audio waveforms.

A desk-scale pipeline around single- and dual-critic Wasserstein GANs:
deterministic DSP preprocessing, gap/border segmentation, streaming
batch loading, training with weight clipping or gradient penalty,
reconstruction, objective metrics, and a blind listening-test service.
"""

from .dsp import (
    FirFilter,
    NyquistError,
    Spectrogram,
    Waveform,
    apply_filter,
    design_lowpass,
    downsample,
    normalize,
    stft_magnitude_db,
    to_mono,
)
from .dataset import (
    ArrayCorpus,
    BatchStream,
    DatasetSplit,
    Segment,
    SegmentLayout,
    WavDirCorpus,
    default_layout,
    make_synthetic_corpus,
    segment,
    segment_offsets,
    split_corpus,
    stream_batches,
    tiny_layout,
)
from .divergences import DiscreteDist, EmpiricalSample, js, kl, wasserstein1_empirical
from .model import (
    ARCH_DUAL,
    ARCH_SINGLE,
    Checkpoint,
    CheckpointFormatError,
    ConvSpec,
    Critic,
    CriticConfig,
    Generator,
    GeneratorConfig,
    LatentSpec,
    ModelConfig,
    ShapeMismatchError,
    assemble_fake,
    assemble_real,
    build_models,
    critic_forward,
    default_model_config,
    generator_forward,
    load_checkpoint,
    save_checkpoint,
    tiny_model_config,
)
from .training import (
    TrainConfig,
    TrainRun,
    TrainingDiverged,
    ToyConfig,
    critic_loss,
    enforce_lipschitz,
    generator_loss,
    gradient_penalty,
    resume,
    total_critic_loss,
    train,
    train_toy_critic,
)
from .reconstruct import (
    InpaintRequest,
    PresentationRecord,
    batch_generate_eval_set,
    inpaint,
    read_eval_manifest,
    splice,
)
from .evaluation import (
    GradeRecord,
    ODG_LABELS,
    ODG_SCALE,
    OdgCell,
    OdgTable,
    log_spectral_distance,
    odg_aggregate,
    render_spectrogram_comparison,
    snr,
)

__version__ = "0.1.0"
