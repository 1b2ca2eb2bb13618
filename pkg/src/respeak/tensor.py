"""Minimal reverse-mode autodiff engine on numpy arrays.

Dynamic tape: every op records its parents and a closure that maps the
output gradient to parent gradients; backward() walks the tape in reverse
topological order and then releases it. Storage is float32 for training
(float64 for gradient-checking tests); reductions and normalization
statistics accumulate in float64.

Image tensors are channels-last (N, H, W, C): the im2col patch gather then
moves contiguous channel runs, which is what makes the convolutions fast in
numpy. Convolutions run as im2col + BLAS matmul; backward recomputes the
patch matrix instead of caching it, keeping peak memory proportional to the
activations rather than to the much larger unrolled patches.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, ShapeError

_grad_enabled = True
_debug_finite = False


def set_debug_finite(flag: bool) -> None:
    """When on, every op output is checked for NaN/Inf (slow; for debugging)."""
    global _debug_finite
    _debug_finite = bool(flag)


class no_grad:
    """Context manager disabling graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: Tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t._parents = ()
        t._backward = None
        return t

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if _debug_finite and not np.all(np.isfinite(data)):
        raise ContractError("non-finite values produced by an op")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / reduction ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(a.data + b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(a.data * b.data, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.data.shape} x {b.data.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def bw(g):
        return (g * (a.data > 0),)

    return _make(out_data, (a,), bw)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    out_data = np.where(a.data >= 0, a.data, a.data * a.dtype.type(slope))

    def bw(g):
        return (np.where(a.data >= 0, g, g * a.dtype.type(slope)),)

    return _make(out_data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out_data * out_data),)

    return _make(out_data, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        return (g * out_data * (1.0 - out_data),)

    return _make(out_data, (a,), bw)


def abs_(a: Tensor) -> Tensor:
    def bw(g):
        return (g * np.sign(a.data),)

    return _make(np.abs(a.data), (a,), bw)


def log(a: Tensor) -> Tensor:
    def bw(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), bw)


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = np.asarray(a.data.mean(dtype=np.float64), dtype=a.dtype)

    def bw(g):
        return (np.broadcast_to(g / n, a.data.shape).astype(a.dtype, copy=False),)

    return _make(out_data, (a,), bw)


def sum_(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum(dtype=np.float64), dtype=a.dtype)

    def bw(g):
        return (np.broadcast_to(g, a.data.shape).astype(a.dtype, copy=False),)

    return _make(out_data, (a,), bw)


# ---------------------------------------------------------------------------
# convolution machinery (channels-last)
# ---------------------------------------------------------------------------

def _pad_input(x: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return x
    if mode == "zero":
        return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    if mode == "reflect":
        return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)), mode="reflect")
    raise ContractError(f"unknown pad mode {mode!r}")


def _fold_axis_reflect(d: np.ndarray, pad: int, axis: int) -> np.ndarray:
    """Fold gradients of reflect padding back onto source positions along one axis."""
    n = d.shape[axis] - 2 * pad
    sl = [slice(None)] * d.ndim

    def take(idx):
        s = list(sl)
        s[axis] = idx
        return d[tuple(s)]

    core = np.ascontiguousarray(take(slice(pad, pad + n)))
    for j in range(pad):
        cs = [slice(None)] * d.ndim
        cs[axis] = pad - j
        core[tuple(cs)] += take(j)
        cs[axis] = n - 2 - j
        core[tuple(cs)] += take(n + pad + j)
    return core


def _unpad_grad(dxp: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return dxp
    if mode == "zero":
        return dxp[:, pad:-pad, pad:-pad, :]
    d = _fold_axis_reflect(dxp, pad, axis=1)
    return _fold_axis_reflect(d, pad, axis=2)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """(N, Hp, Wp, C) -> (N*oh*ow, kh*kw*C) patch matrix; channel runs stay
    contiguous so the gather is a fast copy."""
    n, _, _, c = xp.shape
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, oh, ow, kh, kw, c),
        strides=(s0, s1 * stride, s2 * stride, s1, s2, s3),
    )
    return np.ascontiguousarray(view).reshape(n * oh * ow, kh * kw * c)


def _col2im(dcol: np.ndarray, xp_shape, kh, kw, stride, oh, ow) -> np.ndarray:
    """Scatter-add inverse of _im2col."""
    n, _, _, c = xp_shape
    d6 = dcol.reshape(n, oh, ow, kh, kw, c)
    dxp = np.zeros(xp_shape, dtype=dcol.dtype)
    for ky in range(kh):
        for kx in range(kw):
            dxp[:, ky : ky + oh * stride : stride, kx : kx + ow * stride : stride, :] += (
                d6[:, :, :, ky, kx, :]
            )
    return dxp


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    pad_mode: str = "zero",
) -> Tensor:
    """2-D convolution (cross-correlation): input (N, H, W, C_in), weight
    (kh, kw, C_in, C_out), optional bias (C_out,).

    Two equivalent evaluation routes: the classic im2col patch matrix, and a
    dual "tap" route (per-pixel channel gemm, then one shifted accumulation
    per kernel tap) that never materializes patches. The tap route wins for
    stride-1 layers where patches would be large, e.g. wide-kernel layers
    with few output channels.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[3] != w.data.shape[2]:
        raise ShapeError(f"conv2d shapes incompatible: input {x.data.shape}, weight {w.data.shape}")
    n, h, wid, c_in = x.data.shape
    kh, kw, _, c_out = w.data.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wid + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d output would be empty: input {x.data.shape}, weight {w.data.shape}")

    hp, wp = h + 2 * padding, wid + 2 * padding
    pad_shape = (n, hp, wp, c_in)
    col_cells = n * oh * ow * kh * kw * c_in
    tap_cells = n * hp * wp * kh * kw * c_out
    use_taps = stride == 1 and tap_cells <= 2 * col_cells
    parents = (x, w) if b is None else (x, w, b)

    if use_taps:
        xp = _pad_input(x.data, padding, pad_mode)
        xp_mat = xp.reshape(n * hp * wp, c_in)
        w_taps = np.ascontiguousarray(w.data.transpose(2, 0, 1, 3)).reshape(c_in, kh * kw * c_out)
        taps = (xp_mat @ w_taps).reshape(n, hp, wp, kh, kw, c_out)
        out_data = np.zeros((n, oh, ow, c_out), dtype=x.dtype)
        for ky in range(kh):
            for kx in range(kw):
                out_data += taps[:, ky : ky + oh, kx : kx + ow, ky, kx, :]
        if b is not None:
            out_data += b.data
        del taps, xp

        def bw(g):
            d_taps = np.zeros((n, hp, wp, kh, kw, c_out), dtype=g.dtype)
            for ky in range(kh):
                for kx in range(kw):
                    d_taps[:, ky : ky + oh, kx : kx + ow, ky, kx, :] = g
            d_mat = d_taps.reshape(n * hp * wp, kh * kw * c_out)
            dw = None
            if w.requires_grad:
                xp2_mat = _pad_input(x.data, padding, pad_mode).reshape(n * hp * wp, c_in)
                dw = np.ascontiguousarray(
                    (xp2_mat.T @ d_mat).reshape(c_in, kh, kw, c_out).transpose(1, 2, 0, 3)
                )
            dx = None
            if x.requires_grad:
                dxp = (d_mat @ w_taps.T).reshape(pad_shape)
                dx = _unpad_grad(dxp, padding, pad_mode)
            if b is None:
                return dx, dw
            db = g.sum(axis=(0, 1, 2), dtype=np.float64).astype(g.dtype) if b.requires_grad else None
            return dx, dw, db

        return _make(out_data, parents, bw)

    xp = _pad_input(x.data, padding, pad_mode)
    col = _im2col(xp, kh, kw, stride, oh, ow)
    w_mat = w.data.reshape(kh * kw * c_in, c_out)
    out_mat = col @ w_mat
    if b is not None:
        out_mat += b.data
    out_data = out_mat.reshape(n, oh, ow, c_out)
    del col, xp  # recomputed in backward; do not hold patch memory on the tape

    def bw(g):
        g_mat = g.reshape(n * oh * ow, c_out)
        dw = None
        if w.requires_grad:
            col2 = _im2col(_pad_input(x.data, padding, pad_mode), kh, kw, stride, oh, ow)
            dw = (col2.T @ g_mat).reshape(w.data.shape)
            del col2
        dx = None
        if x.requires_grad:
            dcol = g_mat @ w_mat.T
            dxp = _col2im(dcol, pad_shape, kh, kw, stride, oh, ow)
            dx = _unpad_grad(dxp, padding, pad_mode)
        if b is None:
            return dx, dw
        db = g_mat.sum(axis=0, dtype=np.float64).astype(g.dtype) if b.requires_grad else None
        return dx, dw, db

    return _make(out_data, parents, bw)


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Transposed convolution: input (N, H, W, C_in), weight
    (C_in, kh, kw, C_out); zero padding. Output spatial size is
    (H-1)*stride - 2*padding + kh + output_padding."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[3] != w.data.shape[0]:
        raise ShapeError(
            f"conv_transpose2d shapes incompatible: input {x.data.shape}, weight {w.data.shape}"
        )
    n, h, wid, c_in = x.data.shape
    _, kh, kw, c_out = w.data.shape
    h_full = (h - 1) * stride + kh + output_padding
    w_full = (wid - 1) * stride + kw + output_padding
    oh = h_full - 2 * padding
    ow = w_full - 2 * padding
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv_transpose2d output would be empty for input {x.data.shape}")

    x_mat = x.data.reshape(n * h * wid, c_in)
    w_mat = w.data.reshape(c_in, kh * kw * c_out)
    col = (x_mat @ w_mat).reshape(n, h, wid, kh, kw, c_out)
    y_full = np.zeros((n, h_full, w_full, c_out), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            y_full[:, ky : ky + h * stride : stride, kx : kx + wid * stride : stride, :] += (
                col[:, :, :, ky, kx, :]
            )
    out_data = np.ascontiguousarray(y_full[:, padding : h_full - padding, padding : w_full - padding, :])
    if b is not None:
        out_data += b.data
    del col

    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g_full = np.zeros((n, h_full, w_full, c_out), dtype=g.dtype)
        g_full[:, padding : padding + oh, padding : padding + ow, :] = g
        gcol = _im2col(g_full, kh, kw, stride, h, wid)  # (n*h*wid, kh*kw*c_out)
        dw = None
        if w.requires_grad:
            # weight index order (c_in, kh, kw, c_out) matches x_mat.T @ gcol
            dw = (x_mat.T @ gcol).reshape(w.data.shape)
        dx = None
        if x.requires_grad:
            w_flat = w.data.reshape(c_in, kh * kw * c_out)
            dx = (gcol @ w_flat.T).reshape(n, h, wid, c_in)
        if b is None:
            return dx, dw
        db = g.sum(axis=(0, 1, 2), dtype=np.float64).astype(g.dtype) if b.requires_grad else None
        return dx, dw, db

    return _make(out_data, parents, bw)


def instance_norm(x: Tensor, scale: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over the spatial axes, with a
    learnable channel scale and offset."""
    if x.data.ndim != 4:
        raise ShapeError(f"instance_norm expects (N, H, W, C) input, got shape {x.data.shape}")
    c = x.data.shape[3]
    if scale.data.shape != (c,) or offset.data.shape != (c,):
        raise ShapeError(
            f"instance_norm affine shapes {scale.data.shape}/{offset.data.shape} do not match {c} channels"
        )
    mu64 = x.data.mean(axis=(1, 2), keepdims=True, dtype=np.float64)
    sq = np.square(x.data).mean(axis=(1, 2), keepdims=True, dtype=np.float64)
    var = np.maximum(sq - mu64 * mu64, 0.0)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    mu = mu64.astype(x.dtype)
    xhat = (x.data - mu) * inv
    out_data = scale.data * xhat + offset.data

    def bw(g):
        # gradient statistics reduce in native dtype: these feed SGD noise,
        # not the forward invariants, and the native reduce is much faster
        xh = (x.data - mu) * inv  # recomputed; cheaper than keeping it on the tape
        dxhat = g * scale.data
        gxh = g * xh
        dscale = gxh.sum(axis=(0, 1, 2))
        doffset = g.sum(axis=(0, 1, 2))
        m1 = dxhat.mean(axis=(1, 2), keepdims=True)
        np.multiply(dxhat, xh, out=gxh)
        m2 = gxh.mean(axis=(1, 2), keepdims=True)
        xh *= m2
        np.subtract(dxhat, xh, out=dxhat)
        dxhat -= m1
        dxhat *= inv
        return dxhat, dscale, doffset

    return _make(out_data, (x, scale, offset), bw)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into .grad of every
    reachable gradient-tracking tensor and releases the graph. Gradients of
    interior nodes are freed as soon as they have been consumed; leaves
    (parameters, inputs) keep theirs for the optimizer."""
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not require grad; no graph to traverse")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g
        node._parents = ()
        node._backward = None
        node.grad = None  # interior node: consumed, release the memory
