"""Convolutional frame encoder and depth-map downsampling.

The encoder maps each RGB frame (3, H, W) to a feature map
(feat_channels, H/8, W/8): a stride-2 stem followed by four residual
stages of two blocks each with strides (1, 2, 2, 1), instance
normalization inside the blocks, and a 1x1 output convolution.  Overall
stride is fixed at 8 so coarse-grid coordinates are exactly uv / 8.
"""

from __future__ import annotations

import numpy as np

from . import nnops
from .config import RunConfig
from .errors import ShapeMismatch
from .geometry import bilinear_sample
from .weights import ENCODER_STAGES, WeightStore


def _res_block(x: np.ndarray, weights: WeightStore, prefix: str, stride: int,
               project: bool) -> np.ndarray:
    y = nnops.conv2d(x, weights.get(f"{prefix}.conv1.w"), stride=stride, padding=1)
    y = nnops.instance_norm(y, weights.get(f"{prefix}.norm1.g"), weights.get(f"{prefix}.norm1.b"))
    y = nnops.relu(y)
    y = nnops.conv2d(y, weights.get(f"{prefix}.conv2.w"), stride=1, padding=1)
    y = nnops.instance_norm(y, weights.get(f"{prefix}.norm2.g"), weights.get(f"{prefix}.norm2.b"))
    if project:
        sc = nnops.conv2d(x, weights.get(f"{prefix}.down.w"), stride=stride, padding=0)
        sc = nnops.instance_norm(sc, weights.get(f"{prefix}.down_norm.g"),
                                 weights.get(f"{prefix}.down_norm.b"))
    else:
        sc = x
    return nnops.relu(y + sc)


def encode_frame(frame: np.ndarray, weights: WeightStore, cfg: RunConfig) -> np.ndarray:
    """Encode one (3, H, W) frame to (feat_channels, H/8, W/8)."""
    x = nnops.conv2d(frame.astype(np.float32, copy=False),
                     weights.get("encoder.stem.conv.w"), stride=2, padding=3)
    x = nnops.instance_norm(x, weights.get("encoder.stem.norm.g"),
                            weights.get("encoder.stem.norm.b"))
    x = nnops.relu(x)
    for i, (cin, cout, stride) in enumerate(ENCODER_STAGES):
        for j in range(2):
            bstride = stride if j == 0 else 1
            project = j == 0 and (stride != 1 or cin != cout)
            x = _res_block(x, weights, f"encoder.stage{i}.block{j}", bstride, project)
    return nnops.conv2d(x, weights.get("encoder.out.w"), weights.get("encoder.out.b"))


def encode_frames(frames: np.ndarray, weights: WeightStore, cfg: RunConfig) -> np.ndarray:
    """Encode frames (S, 3, H, W) to feature maps (S, feat_channels, H/8, W/8).

    Frames are processed independently, so the result does not depend on
    how the video is batched into windows.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ShapeMismatch(f"expected frames (S, 3, H, W), got {frames.shape}")
    s, _, h, w = frames.shape
    if h % cfg.stride or w % cfg.stride:
        raise ShapeMismatch(
            f"frame size {h}x{w} is not divisible by the stride {cfg.stride}"
        )
    out = np.empty((s, cfg.feat_channels, h // cfg.stride, w // cfg.stride), dtype=np.float32)
    for t in range(s):
        out[t] = encode_frame(frames[t], weights, cfg)
    return out


def downsample_depth(depths: np.ndarray, s: int) -> np.ndarray:
    """Bilinearly resample depth maps (S, 1, H, W) to (S, 1, H/s, W/s).

    Coarse pixel (i, j) samples the full-resolution map at (i*s, j*s) so
    that coarse grid coordinates line up with downscaled trajectory
    coordinates uv / s.
    """
    d = np.asarray(depths)
    if d.ndim != 4 or d.shape[1] != 1:
        raise ShapeMismatch(f"expected depths (S, 1, H, W), got {d.shape}")
    frames, _, h, w = d.shape
    if h % s or w % s:
        raise ShapeMismatch(f"depth size {h}x{w} is not divisible by the factor {s}")
    hh, ww = h // s, w // s
    us = np.arange(ww, dtype=np.float64) * s
    vs = np.arange(hh, dtype=np.float64) * s
    uu, vv = np.meshgrid(us, vs)
    out = np.empty((frames, 1, hh, ww), dtype=d.dtype)
    for t in range(frames):
        out[t, 0] = bilinear_sample(d[t, 0], uu, vv).astype(d.dtype)
    return out
