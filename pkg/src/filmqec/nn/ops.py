"""Differentiable ops used by the decoder.

All ops accept an optional leading batch dimension. Reductions accumulate in
float64 and cast back to the input dtype.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import EmptyGraph, ShapeMismatch
from .tensor import Tensor, as_tensor, make

LOGIT_CLAMP = 30.0


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def total(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype)
    return make(s, (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.data.dtype),))


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """``x[index]`` along axis 0; the backward pass scatter-adds."""
    x = as_tensor(x)
    index = np.asarray(index)

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return make(x.data[index], (x,), back)


def take_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """``x[..., start:stop]``."""
    x = as_tensor(x)

    def back(g):
        out = np.zeros_like(x.data)
        out[..., start:stop] = g
        return (out,)

    return make(x.data[..., start:stop], (x,), back)


def cast(x: Tensor, dtype) -> Tensor:
    """Change precision; the gradient is cast back to the input dtype."""
    x = as_tensor(x)
    return make(x.data.astype(dtype), (x,), lambda g: (g.astype(x.data.dtype),))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function on logits clamped to ``[-30, 30]``."""
    x = as_tensor(x)
    inside = np.abs(x.data) <= LOGIT_CLAMP
    p = 1.0 / (1.0 + np.exp(-np.clip(x.data, -LOGIT_CLAMP, LOGIT_CLAMP)))
    return make(p, (x,), lambda g: (g * p * (1.0 - p) * inside,))


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` of shape (in, out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(f"affine: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = x.data @ weight.data
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents = (x, weight, bias)

    def back(g):
        gx = g @ weight.data.T
        x2 = x.data.reshape(-1, x.shape[-1])
        gw = x2.T @ g.reshape(-1, g.shape[-1])
        if bias is None:
            return gx, gw
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return make(out, parents, back)


# -- convolution ----------------------------------------------------------

def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B*H*W, C*9) patches of the zero-padded input."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, c * 9)


def _col2im(cols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    b, c, h, w = shape
    cols = cols.reshape(b, h, w, c, 3, 3)
    xp = np.zeros((b, c, h + 2, w + 2), dtype=cols.dtype)
    for di in range(3):
        for dj in range(3):
            xp[:, :, di:di + h, dj:dj + w] += cols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return xp[:, :, 1:-1, 1:-1]


def conv2d_3x3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation with zero padding 1; spatial size is preserved.

    ``x`` is (C_in, H, W) or (B, C_in, H, W); ``weight`` is (C_out, C_in, 3, 3).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    unbatched = x.data.ndim == 3
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 4 or weight.shape[1:] != (xd.shape[1], 3, 3) or bias.shape != (weight.shape[0],):
        raise ShapeMismatch(f"conv2d_3x3: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    b, c, h, w = xd.shape
    co = weight.shape[0]
    cols = _im2col(xd)
    wmat = weight.data.reshape(co, c * 9)
    out = (cols @ wmat.T + bias.data).reshape(b, h, w, co).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if unbatched:
        out = out[0]

    def back(g):
        g4 = g[None] if unbatched else g
        gmat = g4.transpose(0, 2, 3, 1).reshape(b * h * w, co)
        gw = (gmat.T @ cols).reshape(weight.shape)
        gb = gmat.sum(axis=0)
        gx = _col2im(gmat @ wmat, (b, c, h, w)) if x.requires_grad else None
        if gx is not None and unbatched:
            gx = gx[0]
        return gx, gw, gb

    return make(out, (x, weight, bias), back)


# -- graph ops ------------------------------------------------------------

def normalized_adjacency(a: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` for a weighted adjacency (N, N) or (G, N, N)."""
    a = np.asarray(a, dtype=np.float64)
    a_hat = a + np.eye(a.shape[-1])
    deg = a_hat.sum(axis=-1)
    inv = 1.0 / np.sqrt(deg)
    return a_hat * inv[..., :, None] * inv[..., None, :]


def gcn_layer(x: Tensor, a_norm: np.ndarray, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Graph convolution ``A_norm X W (+ b)``; activation is left to the caller.

    ``x`` is (N, F_in) or (G, N, F_in); ``a_norm`` the matching normalized
    adjacency from ``normalized_adjacency`` (treated as a constant).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    a_norm = np.asarray(a_norm, dtype=x.data.dtype)
    if a_norm.shape[-1] != x.shape[-2] or x.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(f"gcn_layer: features {x.shape}, adjacency {a_norm.shape}, weight {weight.shape}")
    agg = a_norm @ x.data
    out = agg @ weight.data
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents = (x, weight, bias)

    def back(g):
        gx = np.swapaxes(a_norm, -1, -2) @ (g @ weight.data.T)
        gw = agg.reshape(-1, agg.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        if bias is None:
            return gx, gw
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return make(out, parents, back)


def global_mean_pool(x: Tensor) -> Tensor:
    """Mean over the node axis (-2)."""
    x = as_tensor(x)
    n = x.shape[-2]
    if n == 0:
        raise EmptyGraph("cannot pool an empty graph")
    out = x.data.mean(axis=-2, dtype=np.float64).astype(x.data.dtype)
    return make(out, (x,), lambda g: (np.repeat(np.expand_dims(g / n, -2), n, axis=-2),))


# -- conditioning and loss -----------------------------------------------

def film(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Channel-wise ``gamma * x + beta`` broadcast over the spatial axes.

    ``x`` is (C, H, W) or (B, C, H, W); ``gamma``/``beta`` are (C,) or (B, C).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-3]
    if gamma.shape[-1] != c or beta.shape != gamma.shape:
        raise ShapeMismatch(f"film: features {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    gb = gamma.data[..., None, None]
    out = gb * x.data + beta.data[..., None, None]

    def back(g):
        gx = g * gb
        gg = (g * x.data).sum(axis=(-1, -2))
        gbeta = g.sum(axis=(-1, -2))
        return gx, _unbroadcast(gg, gamma.shape), _unbroadcast(gbeta, beta.shape)

    return make(out, (x, gamma, beta), back)


def bce_loss(pred: Tensor, target: np.ndarray, weight: np.ndarray | None = None) -> Tensor:
    """Binary cross-entropy averaged over qubits, then over shots.

    ``pred`` holds probabilities from ``sigmoid`` (so they are bounded away
    from 0 and 1 by the logit clamp). ``target`` may be fractional. With
    ``weight`` (one non-negative number per row) the shot average becomes
    the weighted sum ``sum_i w_i * mean_j BCE_ij``.
    """
    pred = as_tensor(pred)
    p = pred.data.astype(np.float64)
    y = np.asarray(target, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeMismatch(f"bce_loss: predictions {p.shape}, targets {y.shape}")
    per = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    if weight is None:
        scale = np.full(p.shape, 1.0 / p.size)
    else:
        w = np.asarray(weight, dtype=np.float64)
        if w.shape != p.shape[:1]:
            raise ShapeMismatch(f"bce_loss: {len(w)} weights for {p.shape[0]} rows")
        scale = np.broadcast_to((w / (p.size // p.shape[0]))[:, None], p.shape)
    loss = np.sum(per * scale)

    def back(g):
        return ((g * scale * (p - y) / (p * (1 - p))).astype(pred.data.dtype),)

    return make(np.asarray(loss), (pred,), back)
