"""Flat key = value configuration shared by the CLI commands.

Defaults encode the pipeline constants (512-sample windows, 33% overlap,
128x128 images, 1000 Griffin-Lim iterations, batch size 4, cycle weight 10).
Unknown keys are rejected rather than ignored so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from .errors import ConfigError
from .models import TrainingConfig
from .spectro import StftConfig


@dataclass
class Config:
    sample_rate: int = 16000
    window_len: int = 512
    overlap: float = 0.33
    image_size: int = 128
    db_floor: float = -80.0
    gl_iters: int = 1000
    batch_size: int = 4
    lambda_cyc: float = 10.0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    total_steps: int = 20000
    seed: int = 0
    loss_form: str = "lsgan"
    checkpoint_every: int = 1000
    flip_augmentation: bool = False

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if not 0.0 < self.overlap < 1.0:
            raise ConfigError(f"overlap must be in (0, 1), got {self.overlap}")
        if self.db_floor >= 0:
            raise ConfigError(f"db_floor must be negative, got {self.db_floor}")
        if self.gl_iters < 1:
            raise ConfigError(f"gl_iters must be >= 1, got {self.gl_iters}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8, got {self.image_size}")
        if self.loss_form not in ("lsgan", "log"):
            raise ConfigError(f"loss_form must be lsgan or log, got {self.loss_form!r}")
        if self.total_steps < 0:
            raise ConfigError(f"total_steps must be >= 0, got {self.total_steps}")

    def stft_config(self) -> StftConfig:
        return StftConfig(window_len=self.window_len, overlap_fraction=self.overlap)

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            batch_size=self.batch_size,
            lambda_cyc=self.lambda_cyc,
            lr=self.lr,
            betas=(self.beta1, self.beta2),
            total_steps=self.total_steps,
            seed=self.seed,
            flip_augmentation=self.flip_augmentation,
            checkpoint_every=self.checkpoint_every,
            loss_form=self.loss_form,
        )

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(Config))


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
        if kind in ("bool", bool):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return value.strip()
    except ValueError as exc:
        raise ConfigError(f"config key {key}: {exc}") from exc


def load_config(path) -> Config:
    """Parse a key = value file; '#' starts a comment, blank lines ignored."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return Config(**values)
