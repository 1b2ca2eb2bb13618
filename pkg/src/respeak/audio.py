"""Mono PCM audio I/O and resampling.

The file boundary of the toolkit: everything downstream works on Waveform
values (float32 samples in [-1, 1] plus a sample rate). Only PCM-16 mono
WAV is accepted; stereo or compressed input is rejected rather than
silently downmixed.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import AudioFormatError, UnsupportedFormatError

PathLike = Union[str, Path]

PCM_SCALE = 32768  # int16 full scale; read divides by it, write multiplies


@dataclass
class Waveform:
    """Mono audio: float32 samples in [-1, 1] and a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise AudioFormatError("waveform must be a non-empty 1-D sample array")
        if self.sample_rate <= 0:
            raise AudioFormatError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path: PathLike) -> Waveform:
    """Read a PCM-16 mono RIFF/WAVE file.

    Accepts the canonical 44-byte header and the 18-byte fmt variant.
    Samples are scaled by 1/32768 into [-1, 1).
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise AudioFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if chunk_size not in (16, 18):
                raise UnsupportedFormatError(
                    f"{path}: fmt chunk size {chunk_size} not supported (want 16 or 18)"
                )
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise AudioFormatError(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormatError(f"{path}: audio format {audio_format} is not PCM")
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, only mono supported")
    if bits != 16:
        raise UnsupportedFormatError(f"{path}: {bits}-bit samples, only 16-bit supported")
    if len(data) < 2:
        raise AudioFormatError(f"{path}: empty data chunk")

    ints = np.frombuffer(data[: len(data) - (len(data) % 2)], dtype="<i2")
    samples = ints.astype(np.float32) / PCM_SCALE
    return Waveform(samples, int(sample_rate))


def wav_bytes(w: Waveform) -> bytes:
    """Encode a waveform as PCM-16 mono WAV bytes (canonical 44-byte header)."""
    x = np.clip(w.samples.astype(np.float64), -1.0, 1.0)
    q = np.clip(np.round(x * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1).astype("<i2")
    body = q.tobytes()
    buf = io.BytesIO()
    buf.write(b"RIFF")
    buf.write(struct.pack("<I", 36 + len(body)))
    buf.write(b"WAVE")
    buf.write(b"fmt ")
    buf.write(struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16))
    buf.write(b"data")
    buf.write(struct.pack("<I", len(body)))
    buf.write(body)
    return buf.getvalue()


def write_wav(w: Waveform, path: PathLike) -> None:
    """Write PCM-16 mono WAV; samples are clamped to [-1, 1] then quantized
    round-to-nearest, so the call is total on any finite waveform."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(wav_bytes(w))


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Linear-interpolation resampling to target_rate.

    Output length is round(len * target/source). Adequate for speech at the
    rates used here; swap in a sinc resampler if aliasing ever matters.
    """
    if target_rate <= 0:
        raise AudioFormatError(f"target rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return w
    n = len(w)
    out_len = max(1, int(round(n * target_rate / w.sample_rate)))
    positions = np.arange(out_len, dtype=np.float64) * (w.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n, dtype=np.float64), w.samples.astype(np.float64))
    return Waveform(out.astype(np.float32), target_rate)
