"""Forward-only neural network primitives on float32 numpy arrays.

Everything here is deterministic: same inputs and weights give bit-identical
outputs across runs.  There is no autograd; training is out of scope and
gradients are only ever probed by finite differences.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

F32 = np.float32


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """2D convolution of a single image x (Cin, H, W) with w (Cout, Cin, kh, kw)."""
    cout, cin, kh, kw = w.shape
    if x.shape[0] != cin:
        raise ValueError(f"conv2d channel mismatch: input {x.shape[0]}, kernel {cin}")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    _, ho, wo, _, _ = win.shape
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * kh * kw)
    out = cols @ w.reshape(cout, -1).T          # (ho*wo, Cout)
    out = out.T.reshape(cout, ho, wo)
    if b is not None:
        out = out + b[:, None, None]
    return np.ascontiguousarray(out, dtype=F32)


def instance_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                  eps: float = 1e-5) -> np.ndarray:
    """Per-channel spatial normalization of x (C, H, W)."""
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    y = (x - mu) / np.sqrt(var + F32(eps))
    return (y * gain[:, None, None] + bias[:, None, None]).astype(F32, copy=False)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               eps: float = 1e-5) -> np.ndarray:
    """Normalize the last axis of x."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    y = (x - mu) / np.sqrt(var + F32(eps))
    return (y * gain + bias).astype(F32, copy=False)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Affine map over the last axis: x (..., Cin) @ w (Cout, Cin)^T + b."""
    out = x @ w.T
    if b is not None:
        out = out + b
    return out.astype(F32, copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, F32(0.0))


_GELU_C = F32(np.sqrt(2.0 / np.pi))


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh-form GELU (smooth everywhere)."""
    x = x.astype(F32, copy=False)
    inner = _GELU_C * (x + F32(0.044715) * x * x * x)
    return (F32(0.5) * x * (F32(1.0) + np.tanh(inner))).astype(F32, copy=False)


def avg_pool2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling with stride 2 over the last two axes.

    Odd trailing rows/columns are dropped (output size floors), so even
    inputs conserve the global mean exactly.
    """
    h, w = x.shape[-2], x.shape[-1]
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"cannot pool spatial dims ({h}, {w})")
    y = x[..., : 2 * h2, : 2 * w2]
    y = y.reshape(x.shape[:-2] + (h2, 2, w2, 2))
    return y.mean(axis=(-3, -1)).astype(x.dtype, copy=False)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction)."""
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype, copy=False)
