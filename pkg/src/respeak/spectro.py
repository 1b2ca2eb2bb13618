"""Waveform <-> spectrogram-image conversions.

Analysis runs Hann-windowed STFT (512-sample windows, 33% overlap), peak
normalization to dB, and white-noise padding into fixed 128x128 images in
[-1, 1]. Synthesis inverts the image back to linear magnitudes and runs
Griffin-Lim phase retrieval with a least-squares inverse STFT.

All routines are pure functions of their inputs and seeds; internal math is
float64 so the Griffin-Lim objective is monotone to tight tolerance, while
images are stored float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .audio import PathLike, Waveform
from .errors import AudioFormatError, ContractError, SizeError

IMAGE_SIZE = 128
DB_FLOOR = -80.0
NOISE_BAND_DB = 6.0  # padding noise lives within this band above the floor
GL_ITERS = 1000


def hann_periodic(n: int) -> np.ndarray:
    """Periodic Hann window, 0.5*(1 - cos(2*pi*k/n)). The periodic variant
    makes exact-bin sinusoids land on exactly three DFT bins."""
    k = np.arange(n, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 512
    overlap_fraction: float = 0.33
    fft_len: int = 0  # 0 means "same as window_len"

    def __post_init__(self):
        if not 0.0 < self.overlap_fraction < 1.0:
            raise ContractError(f"overlap_fraction must be in (0, 1), got {self.overlap_fraction}")
        if self.fft_len == 0:
            object.__setattr__(self, "fft_len", self.window_len)
        if self.fft_len < self.window_len:
            raise ContractError(f"fft_len {self.fft_len} < window_len {self.window_len}")
        if self.hop < 1:
            raise ContractError("hop must be >= 1")

    @property
    def hop(self) -> int:
        return int(round(self.window_len * (1.0 - self.overlap_fraction)))

    @property
    def bins(self) -> int:
        return self.fft_len // 2 + 1

    def window(self) -> np.ndarray:
        return hann_periodic(self.window_len)


@dataclass
class Spectrogram:
    """STFT matrix [bins x frames]. `mag` holds linear magnitudes after
    stft(), dB values after to_db(); phase is radians or None."""

    mag: np.ndarray
    phase: Optional[np.ndarray]
    config: StftConfig
    sample_rate: int

    @property
    def frames(self) -> int:
        return self.mag.shape[1]


@dataclass
class SpectroImage:
    """128x128 float32 image in [-1, 1]; columns past n_speech_frames are
    white-noise padding, not speech."""

    pixels: np.ndarray
    db_floor: float = DB_FLOOR
    db_ceil: float = 0.0
    n_speech_frames: int = IMAGE_SIZE

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)


def frame_signal(x: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    """Overlapping frames [n_frames x window_len] via stride tricks (copy)."""
    n_frames = (len(x) - window_len) // hop + 1
    shape = (n_frames, window_len)
    strides = (x.strides[0] * hop, x.strides[0])
    return np.lib.stride_tricks.as_strided(x, shape=shape, strides=strides).copy()


def _stft_core(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Complex STFT [bins x frames], float64 in, complex128 out."""
    frames = frame_signal(x, cfg.window_len, cfg.hop)
    frames *= cfg.window()[None, :]
    return np.fft.rfft(frames, n=cfg.fft_len, axis=1).T


def _istft_ls_core(spec: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Least-squares inverse: overlap-add of windowed inverse FFTs divided by
    the summed squared window envelope. Minimizes the Frobenius distance
    between STFT(output) and `spec`, which is what Griffin-Lim needs."""
    window = cfg.window()
    hop = cfg.hop
    n_frames = spec.shape[1]
    out_len = (n_frames - 1) * hop + cfg.window_len
    segments = np.fft.irfft(spec.T, n=cfg.fft_len, axis=1)[:, : cfg.window_len]
    num = np.zeros(out_len, dtype=np.float64)
    den = np.zeros(out_len, dtype=np.float64)
    wsq = window * window
    for t in range(n_frames):
        start = t * hop
        num[start : start + cfg.window_len] += window * segments[t]
        den[start : start + cfg.window_len] += wsq
    out = np.zeros(out_len, dtype=np.float64)
    nz = den > 1e-12
    out[nz] = num[nz] / den[nz]
    return out


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Hann-windowed STFT. Frame t covers samples [t*hop, t*hop + window_len)."""
    if len(w) < cfg.window_len:
        raise SizeError(f"signal of {len(w)} samples shorter than one {cfg.window_len}-sample window")
    spec = _stft_core(w.samples.astype(np.float64), cfg)
    return Spectrogram(mag=np.abs(spec), phase=np.angle(spec), config=cfg, sample_rate=w.sample_rate)


def istft_ls(s: Spectrogram) -> Waveform:
    """Least-squares inverse STFT; output length (frames-1)*hop + window_len."""
    if s.phase is None:
        raise ContractError("istft_ls requires a phase matrix")
    spec = s.mag.astype(np.float64) * np.exp(1j * s.phase.astype(np.float64))
    x = _istft_ls_core(spec, s.config)
    return Waveform(x.astype(np.float32), s.sample_rate)


def to_db(s: Spectrogram, floor_db: float = DB_FLOOR) -> Spectrogram:
    """Peak-normalize magnitudes and convert to dB, clamped below at floor_db.

    The per-utterance peak maps to 0 dB, removing recording-gain variance;
    silent input maps entirely to the floor.
    """
    if floor_db >= 0:
        raise ContractError(f"floor_db must be negative, got {floor_db}")
    peak = float(np.max(s.mag))
    db = np.full(s.mag.shape, floor_db, dtype=np.float64)
    if peak > 0.0:
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(s.mag / peak)
        np.maximum(db, floor_db, out=db)
    return Spectrogram(mag=db, phase=s.phase, config=s.config, sample_rate=s.sample_rate)


def _resize_rows(m: np.ndarray, n_out: int) -> np.ndarray:
    """Linear interpolation along axis 0 from m.shape[0] to n_out rows.
    Identity when the sizes already match."""
    n_in = m.shape[0]
    if n_in == n_out:
        return m.copy()
    pos = np.linspace(0.0, n_in - 1.0, n_out)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (pos - lo)[:, None]
    return (1.0 - frac) * m[lo] + frac * m[hi]


def to_image(
    db_spec: Spectrogram,
    floor_db: float = DB_FLOOR,
    noise_seed: int = 0,
    size: int = IMAGE_SIZE,
) -> SpectroImage:
    """dB spectrogram -> fixed-size image in [-1, 1].

    Frequency axis is resized to `size` rows by linear interpolation (keeps
    the full band rather than cropping). Time axis copies up to `size`
    columns, truncating longer utterances from the right and padding shorter
    ones with seeded uniform noise just above the floor, so variable speech
    length becomes a fixed canvas.
    """
    mat = _resize_rows(np.asarray(db_spec.mag, dtype=np.float64), size)
    n_frames = mat.shape[1]
    n_speech = min(n_frames, size)
    canvas = np.empty((size, size), dtype=np.float64)
    canvas[:, :n_speech] = mat[:, :n_speech]
    if n_speech < size:
        rng = np.random.default_rng(noise_seed)
        canvas[:, n_speech:] = rng.uniform(floor_db, floor_db + NOISE_BAND_DB, (size, size - n_speech))
    pixels = 2.0 * (canvas - floor_db) / (-floor_db) - 1.0
    np.clip(pixels, -1.0, 1.0, out=pixels)
    return SpectroImage(
        pixels=pixels.astype(np.float32),
        db_floor=floor_db,
        db_ceil=0.0,
        n_speech_frames=n_speech,
    )


def from_image(img: SpectroImage, cfg: StftConfig = StftConfig(), sample_rate: int = 16000) -> Spectrogram:
    """Image -> linear-magnitude spectrogram (no phase).

    Inverse of to_image: noise-padding columns are dropped, the frequency
    axis is interpolated back to cfg.bins rows, and dB values at the floor
    map to exact silence.
    """
    pixels = np.asarray(img.pixels, dtype=np.float64)
    speech = pixels[:, : img.n_speech_frames]
    db = img.db_floor * (1.0 - (speech + 1.0) / 2.0)
    db = _resize_rows(db, cfg.bins)
    mag = np.power(10.0, db / 20.0)
    mag[db <= img.db_floor + 1e-6] = 0.0
    return Spectrogram(mag=mag, phase=None, config=cfg, sample_rate=sample_rate)


def griffin_lim(
    mag_spec: Spectrogram,
    iters: int = GL_ITERS,
    seed: int = 0,
) -> Tuple[Waveform, np.ndarray]:
    """Phase retrieval by alternating projection.

    Starts from seeded uniform random phase (zero phase has pathological
    symmetric stationary points), then repeats: synthesize with the current
    phase via the least-squares inverse, re-analyze, keep the new phase.
    Returns the final waveform and the per-iteration objective
    E_k = ||mag - |STFT(x_k)||_F, which is non-increasing.
    """
    if iters < 1:
        raise ContractError(f"iters must be >= 1, got {iters}")
    mag = np.asarray(mag_spec.mag, dtype=np.float64)
    if not np.all(np.isfinite(mag)) or np.any(mag < 0):
        raise ContractError("griffin_lim requires finite, nonnegative magnitudes")
    cfg = mag_spec.config
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, mag.shape)
    objective = np.empty(iters, dtype=np.float64)
    x = np.zeros(1, dtype=np.float64)
    for k in range(iters):
        x = _istft_ls_core(mag * np.exp(1j * phase), cfg)
        spec = _stft_core(x, cfg)
        objective[k] = np.linalg.norm(mag - np.abs(spec))
        phase = np.angle(spec)
    return Waveform(x.astype(np.float32), mag_spec.sample_rate), objective


# ---------------------------------------------------------------------------
# On-disk formats: SPIM (binary float32 image) and PGM (8-bit visualization)
# ---------------------------------------------------------------------------

SPIM_MAGIC = b"SPIM"
SPIM_VERSION = 1


def write_spim(img: SpectroImage, path: PathLike) -> None:
    """SPIM: magic, version u32, rows u32, cols u32, db_floor f32,
    n_speech_frames u32, then row-major little-endian float32 pixels."""
    rows, cols = img.pixels.shape
    header = SPIM_MAGIC + struct.pack(
        "<IIIfI", SPIM_VERSION, rows, cols, float(img.db_floor), int(img.n_speech_frames)
    )
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(header + img.pixels.astype("<f4").tobytes())


def read_spim(path: PathLike) -> SpectroImage:
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:4] != SPIM_MAGIC:
        raise AudioFormatError(f"{path}: not a SPIM file")
    version, rows, cols, db_floor, n_speech = struct.unpack_from("<IIIfI", raw, 4)
    if version != SPIM_VERSION:
        raise AudioFormatError(f"{path}: unsupported SPIM version {version}")
    need = 24 + rows * cols * 4
    if len(raw) < need:
        raise AudioFormatError(f"{path}: truncated SPIM payload")
    pixels = np.frombuffer(raw[24:need], dtype="<f4").reshape(rows, cols)
    return SpectroImage(
        pixels=pixels.copy(), db_floor=float(db_floor), db_ceil=0.0, n_speech_frames=int(n_speech)
    )


def pgm_bytes(pixels: np.ndarray) -> bytes:
    """8-bit binary PGM; pixel = round(255*(v+1)/2). Rows are flipped so low
    frequencies sit at the bottom of the rendered image."""
    arr = np.asarray(pixels, dtype=np.float64)
    gray = np.clip(np.round(255.0 * (arr + 1.0) / 2.0), 0, 255).astype(np.uint8)
    gray = gray[::-1]
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii")
    return header + gray.tobytes()


def write_pgm(img: Union[SpectroImage, np.ndarray], path: PathLike) -> None:
    pixels = img.pixels if isinstance(img, SpectroImage) else img
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(pgm_bytes(pixels))
