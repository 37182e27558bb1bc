"""Differentiable layer operations on :class:`Tensor`.

Convolutions work on NCHW tensors with square kernels. ``conv2d`` gathers
strided windows and contracts them with the kernel in one ``tensordot``;
its input gradient scatters back tap by tap. ``conv_transpose2d`` is the
exact adjoint: its forward pass is the scatter, its input gradient the
gather.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from evnat.errors import NonIntegralOutputError, ShapeMismatchError
from evnat.nn.tensor import Tensor, as_tensor
from evnat.rng import make_rng

BCE_EPS = 1e-7


# -- convolution plumbing --------------------------------------------------


def _gather(xp: np.ndarray, k: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Strided k x k windows of ``xp``: shape (N, C, out_h, out_w, k, k)."""
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, : (out_h - 1) * stride + 1 : stride, : (out_w - 1) * stride + 1 : stride]


def _scatter(cols: np.ndarray, out_shape: tuple, k: int, stride: int) -> np.ndarray:
    """Adjoint of :func:`_gather`. ``cols`` has shape (N, h, w, C, k, k)."""
    out = np.zeros(out_shape, dtype=cols.dtype)
    h, w = cols.shape[1], cols.shape[2]
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + (h - 1) * stride + 1 : stride, j : j + (w - 1) * stride + 1 : stride] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return out


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x


def _crop(x: np.ndarray, p: int) -> np.ndarray:
    return x[:, :, p : x.shape[2] - p, p : x.shape[3] - p] if p else x


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise NonIntegralOutputError(
            f"(size {size} + 2*{padding} - {k}) is not a non-negative multiple of stride {stride}"
        )
    return span // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation. ``weight`` is (out_channels, in_channels, k, k)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatchError("conv2d expects NCHW input and OCkk weight")
    n, c, h, w = x.shape
    o, wc, k, k2 = weight.shape
    if wc != c or k != k2:
        raise ShapeMismatchError(f"weight {weight.shape} incompatible with input {x.shape}")
    if bias is not None and bias.shape != (o,):
        raise ShapeMismatchError(f"bias shape {bias.shape} != ({o},)")
    oh = conv_output_size(h, k, stride, padding)
    ow = conv_output_size(w, k, stride, padding)
    xp = _pad(x.data, padding)
    win = _gather(xp, k, stride, oh, ow)
    wd = weight.data
    out = np.tensordot(win, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def back(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        cols = np.tensordot(g, wd, axes=([1], [0]))
        gx = _crop(_scatter(cols, xp.shape, k, stride), padding)
        gb = g.sum(axis=(0, 2, 3), dtype=np.float64) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, back, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Fractionally-strided convolution. ``weight`` is (in_channels, out_channels, k, k).

    Output side is ``(size - 1) * stride - 2 * padding + k``; the forward pass
    equals the input gradient of :func:`conv2d` with the same weight and
    configuration.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatchError("conv_transpose2d expects NCHW input and ICkk weight")
    n, c, h, w = x.shape
    wc, o, k, k2 = weight.shape
    if wc != c or k != k2:
        raise ShapeMismatchError(f"weight {weight.shape} incompatible with input {x.shape}")
    if bias is not None and bias.shape != (o,):
        raise ShapeMismatchError(f"bias shape {bias.shape} != ({o},)")
    full = (n, o, (h - 1) * stride + k, (w - 1) * stride + k)
    if full[2] - 2 * padding < 1 or full[3] - 2 * padding < 1:
        raise ShapeMismatchError("padding removes the whole output")
    wd = weight.data
    xd = x.data
    cols = np.tensordot(xd, wd, axes=([1], [0]))
    out = _crop(_scatter(cols, full, k, stride), padding)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def back(g):
        win = _gather(_pad(g, padding), k, stride, h, w)
        gx = np.tensordot(win, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(xd, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3), dtype=np.float64) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, back, "conv_transpose2d")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Dense layer as a 1x1 convolution over flattened features.

    ``x`` is (N, F); ``weight`` is (out, F, 1, 1).
    """
    n, f = x.shape
    out = conv2d(x.reshape(n, f, 1, 1), weight, bias)
    return out.reshape(n, weight.shape[0])


# -- normalisation -----------------------------------------------------------


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalisation over (N, H, W).

    In training mode the batch statistics normalise the input and the
    running estimates are updated in place (unbiased variance), matching
    the usual convention.
    """
    if x.ndim != 4:
        raise ShapeMismatchError("batch_norm expects NCHW input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,) or running_mean.shape != (c,) or running_var.shape != (c,):
        raise ShapeMismatchError(f"per-channel parameters must have shape ({c},)")
    xd = x.data
    dtype = xd.dtype
    axes = (0, 2, 3)
    if training:
        m = xd.size // c
        mean = xd.mean(axis=axes, dtype=np.float64)
        var = ((xd - mean[None, :, None, None].astype(dtype)) ** 2).mean(axis=axes, dtype=np.float64)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(dtype)[None, :, None, None]
    xhat = (xd - mean.astype(dtype)[None, :, None, None]) * inv_std
    gd = gamma.data[None, :, None, None]
    out = xhat * gd + beta.data[None, :, None, None]

    def back(g):
        gg = (g * xhat).sum(axis=axes, dtype=np.float64)
        gb = g.sum(axis=axes, dtype=np.float64)
        if training:
            m = xd.size // c
            gx = (gd * inv_std / m) * (
                m * g - gb.astype(dtype)[None, :, None, None] - xhat * gg.astype(dtype)[None, :, None, None]
            )
        else:
            gx = g * gd * inv_std
        return gx, gg, gb

    return Tensor._from_op(out, (x, gamma, beta), back, "batch_norm")


# -- activations -------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """Derivative at exactly 0 is ``slope``."""
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return Tensor._from_op(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * (1 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(xd))
    y = np.where(xd >= 0, 1 / (1 + e), e / (1 + e)).astype(xd.dtype)
    return Tensor._from_op(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


# -- pooling / dropout -------------------------------------------------------


def max_pool2d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    """Max pooling; the gradient goes to the first maximum in row-major order."""
    stride = stride or k
    n, c, h, w = x.shape
    oh = conv_output_size(h, k, stride, 0)
    ow = conv_output_size(w, k, stride, 0)
    win = _gather(x.data, k, stride, oh, ow).reshape(n, c, oh, ow, k * k)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        for t in range(k * k):
            i, j = divmod(t, k)
            gx[:, :, i : i + (oh - 1) * stride + 1 : stride, j : j + (ow - 1) * stride + 1 : stride] += g * (arg == t)
        return (gx,)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), back, "max_pool2d")


def dropout(x: Tensor, p: float, rng: np.random.Generator | int | None = None, training: bool = True) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``; identity when not training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(0 if rng is None else rng)
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1 - p)
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# -- losses ------------------------------------------------------------------


def bce(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7]."""
    target = as_tensor(target, pred.dtype)
    t = np.broadcast_to(target.data, pred.shape) if target.data.ndim == 0 else target.data
    if t.shape != pred.shape:
        raise ShapeMismatchError(f"target {t.shape} vs prediction {pred.shape}")
    pd = pred.data.astype(np.float64)
    clipped = np.clip(pd, BCE_EPS, 1 - BCE_EPS)
    td = t.astype(np.float64)
    loss = -np.mean(td * np.log(clipped) + (1 - td) * np.log(1 - clipped))
    n = pd.size
    inside = (pd >= BCE_EPS) & (pd <= 1 - BCE_EPS)

    def back(g):
        gp = (-td / clipped + (1 - td) / (1 - clipped)) * inside / n
        return (float(g) * gp,)

    return Tensor._from_op(np.asarray(loss, dtype=pred.dtype), (pred,), back, "bce")


def l1(a: Tensor, b) -> Tensor:
    """Mean absolute difference; sub-gradient 0 where the inputs are equal."""
    b = as_tensor(b, a.dtype)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"l1 operands {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    sign = np.sign(diff) / diff.size
    loss = np.abs(diff).mean()
    return Tensor._from_op(
        np.asarray(loss, dtype=a.dtype), (a, b), lambda g: (float(g) * sign, -float(g) * sign), "l1"
    )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits)))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``), logits (N, K)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"logits {logits.shape} vs labels {labels.shape}")
    logp = log_softmax(logits.data)
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()

    def back(g):
        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1.0
        return (float(g) * grad / n,)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), back, "softmax_cross_entropy")
