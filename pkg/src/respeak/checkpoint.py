"""Binary checkpointing of models plus optimizer state.

Layout: magic "CGCK", version u32, architecture-hash u64, step u64,
tensor count u32, then per tensor: name length u16 + UTF-8 name, rank u8,
dims u32 each, row-major little-endian float32 data. Optimizer moments are
stored under an "opt/" name prefix; model tensors keep their model-qualified
names. The architecture hash covers model tensor names and shapes only, so
a load into a different architecture fails fast with the first mismatch.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .audio import PathLike
from .errors import CheckpointError
from .models import CycleGanModels, Optimizers, TrainingConfig, build_models, build_optimizers

CKPT_MAGIC = b"CGCK"
CKPT_VERSION = 1


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def architecture_hash(models: CycleGanModels) -> int:
    desc = ";".join(f"{name}:{','.join(map(str, p.data.shape))}" for name, p in models.named_params())
    return _fnv1a64(desc.encode("utf-8"))


def _optimizer_tensors(optimizers: Optimizers) -> Dict[str, np.ndarray]:
    out: Dict[str, np.ndarray] = {}
    for tag, opt in (("g", optimizers.gen), ("d", optimizers.dis)):
        out[f"opt/{tag}/t"] = np.array([opt.step_count], dtype=np.float32)
        for name, m in opt.m.items():
            out[f"opt/{tag}/m/{name}"] = m
        for name, v in opt.v.items():
            out[f"opt/{tag}/v/{name}"] = v
    return out


def save_checkpoint(models: CycleGanModels, optimizers: Optimizers, step: int, path: PathLike) -> None:
    tensors: Dict[str, np.ndarray] = {name: p.data for name, p in models.named_params()}
    tensors.update(_optimizer_tensors(optimizers))

    blob = bytearray()
    blob += CKPT_MAGIC
    blob += struct.pack("<IQQ", CKPT_VERSION, architecture_hash(models), int(step))
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded)) + encoded
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(bytes(blob))


def _parse(raw: bytes, path) -> Tuple[int, int, Dict[str, np.ndarray]]:
    if len(raw) < 28 or raw[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (too short or bad magic)")
    version, arch_hash, step = struct.unpack_from("<IQQ", raw, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", raw, 24)
    pos = 28
    tensors: Dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            n_bytes = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
            payload = raw[pos : pos + n_bytes]
            if len(payload) < n_bytes:
                raise CheckpointError(f"{path}: truncated data for tensor {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
            pos += n_bytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    return int(step), int(arch_hash), tensors


def load_checkpoint(
    path: PathLike, cfg: TrainingConfig = None
) -> Tuple[CycleGanModels, Optimizers, int]:
    """Rebuild models and optimizers from a checkpoint.

    Optimizer hyperparameters come from cfg (they are not serialized);
    moments and step counts are restored exactly.
    """
    cfg = cfg or TrainingConfig()
    raw = Path(path).read_bytes()
    step, arch_hash, tensors = _parse(raw, path)

    models = build_models(seed=0)
    expected = dict(models.named_params())
    if arch_hash != architecture_hash(models):
        for name, p in expected.items():
            if name not in tensors:
                raise CheckpointError(f"{path}: architecture mismatch, missing tensor {name}")
            if tensors[name].shape != p.data.shape:
                raise CheckpointError(
                    f"{path}: architecture mismatch at {name}: "
                    f"checkpoint {tensors[name].shape} vs model {p.data.shape}"
                )
        raise CheckpointError(f"{path}: architecture hash mismatch")
    for name, p in expected.items():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name}")
        if tensors[name].shape != p.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch at {name}: {tensors[name].shape} vs {p.data.shape}"
            )
        p.data = tensors[name]

    optimizers = build_optimizers(models, cfg)
    for tag, opt in (("g", optimizers.gen), ("d", optimizers.dis)):
        t_key = f"opt/{tag}/t"
        if t_key in tensors:
            opt.step_count = int(tensors[t_key][0])
        for name in opt.params:
            m_key, v_key = f"opt/{tag}/m/{name}", f"opt/{tag}/v/{name}"
            if m_key in tensors and tensors[m_key].shape == opt.m[name].shape:
                opt.m[name] = tensors[m_key]
            if v_key in tensors and tensors[v_key].shape == opt.v[name].shape:
                opt.v[name] = tensors[v_key]
    return models, optimizers, step
