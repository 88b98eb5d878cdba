"""Transformer update network.

The concatenated per-point features are projected to the model width,
summed with temporal and spatial sinusoidal encodings, refined by
alternating attention blocks (over a trajectory's frames, then over the
point set at each frame), and decoded into position and template residuals.

Bit-exact permutation equivariance over the point axis is guaranteed by
reordering points into a canonical (byte-lexicographic) order internally:
any permutation of the inputs reaches the identical internal computation,
so outputs are exactly the permuted outputs of the original input.
"""

from __future__ import annotations

import numpy as np

from . import nnops
from .config import RunConfig
from .errors import BadChannelCount, OddChannelCount, ShapeMismatch
from .weights import WeightStore

F32 = np.float32


def sin_encoding_1d(coord, channels: int) -> np.ndarray:
    """Sinusoidal encoding of scalar coordinates.

    Channel 2i is sin(coord / 10000^(2i/channels)), channel 2i+1 the
    matching cosine.  coord may be any array; one channel axis is appended.
    """
    if channels % 2 != 0:
        raise OddChannelCount(f"1D encoding needs an even channel count, got {channels}")
    coord = np.asarray(coord, dtype=np.float64)[..., None]
    i2 = np.arange(0, channels, 2, dtype=np.float64)
    freq = coord / np.power(10000.0, i2 / channels)
    out = np.empty(coord.shape[:-1] + (channels,), dtype=F32)
    out[..., 0::2] = np.sin(freq)
    out[..., 1::2] = np.cos(freq)
    return out


def sin_encoding_2d(u, v, channels: int) -> np.ndarray:
    """Encoding of (u, v) pairs: 1D encodings of each axis, concatenated."""
    if channels % 4 != 0:
        raise BadChannelCount(f"2D encoding needs channels divisible by 4, got {channels}")
    half = channels // 2
    return np.concatenate([sin_encoding_1d(u, half), sin_encoding_1d(v, half)], axis=-1)


def build_positional(p: np.ndarray, channels: int) -> tuple:
    """Temporal and spatial encodings for trajectories p (N, S, 3).

    Temporal coordinates are window-relative (1..S), so two windows of the
    same length share identical temporal encodings.  Spatial encodings use
    each trajectory's first-frame uv and are constant along its frames.
    """
    p = np.asarray(p)
    n, s, _ = p.shape
    eta_time = sin_encoding_1d(np.arange(1, s + 1, dtype=np.float64), channels)  # (S, c)
    eta_space = sin_encoding_2d(p[:, 0, 0], p[:, 0, 1], channels)                # (N, c)
    return eta_time, eta_space


def _canonical_order(p: np.ndarray, x_in: np.ndarray) -> np.ndarray:
    """Deterministic point ordering from the inputs alone.

    Points with identical bytes tie, which is harmless: their rows are
    identical so any tie order produces the same internal tensor.
    """
    pb = np.ascontiguousarray(p)
    xb = np.ascontiguousarray(x_in)
    keys = [pb[i].tobytes() + xb[i].tobytes() for i in range(p.shape[0])]
    return np.array(sorted(range(p.shape[0]), key=keys.__getitem__), dtype=np.intp)


def _attention(x: np.ndarray, weights: WeightStore, prefix: str, heads: int,
               trace: dict | None) -> np.ndarray:
    """Multi-head self-attention over x (B, L, C)."""
    b, l, c = x.shape
    dh = c // heads
    qkv = nnops.linear(x, weights.get(f"{prefix}.qkv.w"), weights.get(f"{prefix}.qkv.b"))
    qkv = qkv.reshape(b, l, 3, heads, dh).transpose(2, 0, 3, 1, 4)  # (3, B, H, L, dh)
    q, k, v = qkv[0], qkv[1], qkv[2]
    logits = (q @ k.transpose(0, 1, 3, 2)) * F32(1.0 / np.sqrt(dh))  # (B, H, L, L)
    attn = nnops.softmax(logits, axis=-1)
    if trace is not None:
        trace.setdefault("attention", []).append(attn)
    out = attn @ v                                                   # (B, H, L, dh)
    out = out.transpose(0, 2, 1, 3).reshape(b, l, c)
    return nnops.linear(out, weights.get(f"{prefix}.proj.w"), weights.get(f"{prefix}.proj.b"))


def _block(x: np.ndarray, weights: WeightStore, prefix: str, heads: int,
           trace: dict | None) -> np.ndarray:
    h = nnops.layer_norm(x, weights.get(f"{prefix}.ln1.g"), weights.get(f"{prefix}.ln1.b"))
    x = x + _attention(h, weights, prefix, heads, trace)
    h = nnops.layer_norm(x, weights.get(f"{prefix}.ln2.g"), weights.get(f"{prefix}.ln2.b"))
    h = nnops.gelu(nnops.linear(h, weights.get(f"{prefix}.mlp1.w"), weights.get(f"{prefix}.mlp1.b")))
    h = nnops.linear(h, weights.get(f"{prefix}.mlp2.w"), weights.get(f"{prefix}.mlp2.b"))
    return (x + h).astype(F32, copy=False)


def updater_forward(x_in: np.ndarray, p: np.ndarray, weights: WeightStore,
                    cfg: RunConfig, trace: dict | None = None) -> tuple:
    """Predict residuals from assembled features.

    Args:
        x_in: (N, S, input_width) concatenated correlation / depth residual /
            motion features.
        p: (N, S, 3) current downscaled trajectories (provides reference
            coordinates for the positional encodings).
        trace: optional dict collecting 'attention' softmax maps.

    Returns:
        (delta_p, delta_q): (N, S, 3) trajectory residuals and
        (N, S, feat_channels) template residuals, float32.
    """
    x_in = np.asarray(x_in, dtype=F32)
    p = np.asarray(p, dtype=F32)
    if x_in.ndim != 3 or x_in.shape[2] != cfg.input_width:
        raise ShapeMismatch(
            f"expected x_in (N, S, {cfg.input_width}), got {x_in.shape}"
        )
    if p.shape != x_in.shape[:2] + (3,):
        raise ShapeMismatch(f"p {p.shape} does not match x_in {x_in.shape}")
    n, s, _ = x_in.shape

    order = _canonical_order(p, x_in)
    x_in = x_in[order]
    p = p[order]

    x = nnops.linear(x_in, weights.get("updater.in_proj.w"), weights.get("updater.in_proj.b"))
    eta_time, eta_space = build_positional(p, cfg.model_channels)
    x = (x + eta_time[None, :, :] + eta_space[:, None, :]).astype(F32, copy=False)

    for i in range(2 * cfg.num_block_pairs):
        prefix = f"updater.blk{i:02d}"
        if i % 2 == 0:
            # cross-time: each trajectory attends over its S frames
            x = _block(x, weights, prefix, cfg.heads, trace)
        else:
            # cross-space: each frame's N points attend to each other
            xt = np.ascontiguousarray(x.transpose(1, 0, 2))   # (S, N, c)
            xt = _block(xt, weights, prefix, cfg.heads, trace)
            x = np.ascontiguousarray(xt.transpose(1, 0, 2))

    head = nnops.linear(x, weights.get("updater.head.out.w"), weights.get("updater.head.out.b"))
    delta_p = head[:, :, :3]
    inter = head[:, :, 3:]
    h = nnops.layer_norm(inter, weights.get("updater.head.dq_ln.g"),
                         weights.get("updater.head.dq_ln.b"))
    delta_q = nnops.gelu(nnops.linear(h, weights.get("updater.head.dq.w"),
                                      weights.get("updater.head.dq.b")))

    out_p = np.empty_like(delta_p)
    out_q = np.empty_like(delta_q)
    out_p[order] = delta_p
    out_q[order] = delta_q
    return out_p, out_q
