"""End-to-end compositions of the audio, spectrogram, and model stages.

These are the five pipeline steps wired together: ingest and resample,
analyze to a fixed-size dB image, translate, invert back to magnitudes, and
reconstruct audio by phase retrieval. Each function is deterministic given
its seeds.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .audio import Waveform, resample
from .config import Config
from .corpus import stable_seed
from .models import Generator, convert
from .spectro import SpectroImage, from_image, griffin_lim, stft, to_db, to_image


def image_from_waveform(w: Waveform, cfg: Config, noise_seed: int = 0) -> SpectroImage:
    """Steps 1-2: resample to the canonical rate, analyze, normalize to dB,
    pad/truncate into the fixed image."""
    w = resample(w, cfg.sample_rate)
    spec = stft(w, cfg.stft_config())
    db = to_db(spec, cfg.db_floor)
    return to_image(db, cfg.db_floor, noise_seed, cfg.image_size)


def waveform_from_image(img: SpectroImage, cfg: Config, gl_seed: int = 0) -> Tuple[Waveform, np.ndarray]:
    """Steps 4-5: back to linear magnitudes, then Griffin-Lim phase retrieval.
    Returns the waveform and the per-iteration objective."""
    spec = from_image(img, cfg.stft_config(), cfg.sample_rate)
    return griffin_lim(spec, cfg.gl_iters, gl_seed)


def convert_waveform(w: Waveform, generator: Generator, cfg: Config, tag: str = "") -> Waveform:
    """Full chain: waveform -> image -> generator -> image -> waveform.
    `tag` keys the padding-noise and phase seeds so identical inputs always
    produce identical outputs."""
    img = image_from_waveform(w, cfg, noise_seed=stable_seed("pad", tag))
    translated = convert(img, generator)
    out, _ = waveform_from_image(translated, cfg, gl_seed=stable_seed("phase", tag))
    return out
