"""respeak: unpaired speech style transfer.

Audio is mapped to fixed-size dB spectrogram images, a cycle-consistent
adversarial model translates between two acoustic domains on unpaired
examples, and Griffin-Lim phase retrieval reconstructs audio. A WER harness
with pluggable recognizers measures the intelligibility effect.
"""

__version__ = "0.1.0"

from .audio import Waveform, read_wav, resample, write_wav
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, load_config
from .corpus import Manifest, Utterance, load_manifest, make_batches, split, synth_corpus
from .evaluate import HttpAsrClient, TemplateRecognizer, WerReport, evaluate, wer
from .models import (
    CycleGanModels,
    Discriminator,
    Generator,
    StepLosses,
    TrainingConfig,
    adversarial_loss,
    build_models,
    build_optimizers,
    convert,
    cycle_loss,
    train_step,
)
from .spectro import (
    SpectroImage,
    Spectrogram,
    StftConfig,
    from_image,
    griffin_lim,
    istft_ls,
    read_spim,
    stft,
    to_db,
    to_image,
    write_pgm,
    write_spim,
)
from .tensor import Tensor, backward, no_grad

__all__ = [
    "Config",
    "CycleGanModels",
    "Discriminator",
    "Generator",
    "HttpAsrClient",
    "Manifest",
    "SpectroImage",
    "Spectrogram",
    "StepLosses",
    "StftConfig",
    "TemplateRecognizer",
    "Tensor",
    "TrainingConfig",
    "Utterance",
    "Waveform",
    "WerReport",
    "adversarial_loss",
    "backward",
    "build_models",
    "build_optimizers",
    "convert",
    "cycle_loss",
    "evaluate",
    "from_image",
    "griffin_lim",
    "istft_ls",
    "load_checkpoint",
    "load_config",
    "load_manifest",
    "make_batches",
    "no_grad",
    "read_spim",
    "read_wav",
    "resample",
    "save_checkpoint",
    "split",
    "stft",
    "synth_corpus",
    "to_db",
    "to_image",
    "train_step",
    "wer",
    "write_pgm",
    "write_spim",
    "write_wav",
]
