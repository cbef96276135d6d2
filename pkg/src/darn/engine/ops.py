"""Differentiable operators.

Every function takes :class:`Tensor` (or array-like) operands and returns a
new :class:`Tensor`. Activations are laid out as ``(batch, channels, height,
width)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .tensor import ShapeError, Tensor, as_tensor

DIV_FLOOR = 1e-3
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _make(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward=backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary_operands(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"operand shapes {a.shape} and {b.shape} do not broadcast") from exc
    return a, b


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b, floor: float = DIV_FLOOR) -> Tensor:
    """Elementwise ``a / b``; ``|b|`` must not drop below ``floor``."""
    a, b = _binary_operands(a, b)
    if np.any(np.abs(b.data) < floor):
        raise FloatingPointError(
            f"denominator magnitude {np.abs(b.data).min():.3g} below floor {floor:g}; "
            "apply a positivity map before dividing"
        )
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise FloatingPointError("log of a non-positive value")

    def backward(g):
        return (g / x.data,)

    return _make(np.log(x.data), (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), backward)


def softplus_shifted(x, shift: float = DIV_FLOOR) -> Tensor:
    """``log(1 + exp(x)) + shift``, computed without overflow."""
    x = as_tensor(x)
    out = np.logaddexp(0, x.data) + x.dtype.type(shift)

    def backward(g):
        return (g * expit(x.data),)

    return _make(out.astype(x.dtype, copy=False), (x,), backward)


def square(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (2.0 * g * x.data,)

    return _make(x.data * x.data, (x,), backward)


def clip_min(x, floor: float) -> Tensor:
    """``max(x, floor)``; gradient is zero where the floor is active."""
    x = as_tensor(x)
    keep = x.data >= floor

    def backward(g):
        return (g * keep,)

    return _make(np.where(keep, x.data, x.dtype.type(floor)), (x,), backward)


# -- shape -----------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (g.reshape(x.shape),)

    return _make(x.data.reshape(shape), (x,), backward)


def getitem(x, index) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), backward)


def pad(x, widths) -> Tensor:
    """Zero padding; ``widths`` follows ``np.pad``."""
    x = as_tensor(x)
    slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))

    def backward(g):
        return (g[slices],)

    return _make(np.pad(x.data, widths), (x,), backward)


# -- reductions ---------------------------------------------------------------------

def reduce(x, op: str = "sum") -> Tensor:
    x = as_tensor(x)
    if op == "sum":
        out = x.data.sum()
        scale = 1.0
    elif op == "mean":
        out = x.data.mean()
        scale = 1.0 / x.size
    else:
        raise ValueError(f"unknown reduction {op!r}")

    def backward(g):
        return (np.full(x.shape, g * scale, dtype=x.dtype),)

    return _make(np.asarray(out, dtype=x.dtype), (x,), backward)


def mean_per_sample(x) -> Tensor:
    """Mean over every axis but the first: ``(B, ...) -> (B,)``."""
    x = as_tensor(x)
    n = x.size // x.shape[0]

    def backward(g):
        return (np.broadcast_to((g / n).reshape((-1,) + (1,) * (x.ndim - 1)), x.shape).astype(x.dtype),)

    return _make(x.data.reshape(x.shape[0], -1).mean(axis=1), (x,), backward)


# -- layers -----------------------------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    b, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # B,C,H,W,kh,kw
    h, w = win.shape[2:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, c * kh * kw)


def conv2d(x, kernel, bias=None, padding: Optional[int] = None) -> Tensor:
    """Stride-1 cross-correlation. ``padding=None`` means same-size output."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernel")
    b, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ShapeError(f"input has {cin} channels but kernel expects {kcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("kernel extents must be odd")
    if padding is None:
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    else:
        ph = pw = int(padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    ho, wo = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError("kernel larger than padded input")
    cols = _im2col(xp, kh, kw)
    wmat = kernel.data.reshape(cout, -1)
    out = cols @ wmat.T
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"bias shape {bias.shape} != ({cout},)")
        out = out + bias.data
        parents.append(bias)
    out = out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gk = (g2.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(b, ho, wo, cin, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + ho, j:j + wo] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, ph:ph + h, pw:pw + w]
        grads = [gx, gk]
        if bias is not None:
            grads.append(g2.sum(axis=0) if bias.requires_grad else None)
        return grads

    return _make(np.ascontiguousarray(out), tuple(parents), backward)


@dataclass
class RunningStats:
    """Exponential moving averages of per-channel batch statistics."""

    mean: Optional[np.ndarray] = None
    var: Optional[np.ndarray] = None
    momentum: float = BN_MOMENTUM

    @property
    def initialized(self) -> bool:
        return self.mean is not None

    def reset(self, channels: int, dtype=np.float64):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def update(self, mean: np.ndarray, var: np.ndarray):
        if not self.initialized:
            self.reset(mean.shape[0], mean.dtype)
        m = self.momentum
        self.mean = m * self.mean + (1 - m) * mean
        self.var = m * self.var + (1 - m) * var


def batch_norm(
    x,
    gamma,
    beta,
    training: bool = True,
    running: Optional[RunningStats] = None,
    eps: float = BN_EPS,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel normalization over batch and spatial axes."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running is not None and update_stats:
            running.update(mean, var)
    else:
        if running is None or not running.initialized:
            raise RuntimeError("batch_norm in eval mode needs initialized running statistics")
        mean, var = running.mean.astype(x.dtype), running.var.astype(x.dtype)

    invstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(bshape)) * invstd.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    n = x.size // c

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(bshape)
        if training:
            gx = (invstd.reshape(bshape) / n) * (
                n * gxhat
                - gxhat.sum(axis=axes).reshape(bshape)
                - xhat * (gxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = gxhat * invstd.reshape(bshape)
        return gx, gg, gb

    return _make(out, (x, gamma, beta), backward)


def max_pool(x, window: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping max pooling.

    Odd spatial extents are padded on the right/bottom by replicating the
    last row/column. The gradient of each window goes to the first maximum
    in row-major scan order.
    """
    x = as_tensor(x)
    if window != stride:
        raise ValueError("only window == stride is supported")
    b, c, h, w = x.shape
    if h < window or w < window:
        raise ShapeError(f"pool window {window} larger than input {h}x{w}")
    ph, pw = (-h) % stride, (-w) % stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge") if (ph or pw) else x.data
    H, W = xp.shape[2] // window, xp.shape[3] // window
    blocks = xp.reshape(b, c, H, window, W, window).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, H, W, -1)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gblocks = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gblocks, idx[..., None], g[..., None], axis=-1)
        gxp = gblocks.reshape(b, c, H, W, window, window).transpose(0, 1, 2, 4, 3, 5).reshape(xp.shape)
        gx = gxp[:, :, :h, :w].copy()
        if ph:
            gx[:, :, h - 1, :] += gxp[:, :, h:, :w].sum(axis=2)
        if pw:
            gx[:, :, :, w - 1] += gxp[:, :, :h, w:].sum(axis=3)
        if ph and pw:
            gx[:, :, h - 1, w - 1] += gxp[:, :, h:, w:].sum(axis=(2, 3))
        return (gx,)

    return _make(out, (x,), backward)


def affine(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` for ``x`` of shape ``(B, D)``."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"affine: input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"affine: bias {bias.shape} != ({weight.shape[1]},)")

    def backward(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return _make(x.data @ weight.data + bias.data, (x, weight, bias), backward)


def flatten(x) -> Tensor:
    x = as_tensor(x)
    return reshape(x, (x.shape[0], -1))
