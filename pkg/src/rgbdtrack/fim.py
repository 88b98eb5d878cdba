"""Single refinement iteration: feature assembly plus residual updates.

Each iteration correlates the current template against the frame features,
samples the depth maps along the current trajectories, encodes the motion
relative to the window's first frame, feeds everything through the update
network, and applies the predicted residuals.  Updated depths are floored
at eps_depth so inverse depths stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .correlation import build_pyramid, lookup
from .errors import NonPositivePrediction, ShapeMismatch
from .geometry import bilinear_sample_batched
from .updater import sin_encoding_2d, updater_forward
from .weights import WeightStore


@dataclass
class WindowState:
    """Per-window tracking state after `iteration` refinement steps."""

    q: np.ndarray        # (N, S, c_f) template feature
    p_uvd: np.ndarray    # (N, S, 3) downscaled uv + depth
    iteration: int = 0


@dataclass
class DepthResidualFeature:
    values: np.ndarray   # (N, S, 1) inverse-depth difference, zeroed where invalid
    valid: np.ndarray    # (N, S) bool, False where the sampled depth was unusable


@dataclass
class MotionFeatures:
    o_uv: np.ndarray     # (N, S, 2 + c_o): raw uv displacement plus encoding
    o_d: np.ndarray      # (N, S, 1): depth displacement


def depth_residual(p_uv: np.ndarray, p_d: np.ndarray,
                   depths: np.ndarray) -> DepthResidualFeature:
    """Inverse-depth difference between measurement and prediction.

    Samples the downsampled depth maps (S, 1, h, w) at p_uv (N, S, 2) and
    returns 1/sampled - 1/predicted.  Sampled depths <= 0 or non-finite
    (outlier sentinels, or blends with them) contribute zero and are
    flagged invalid instead of raising: noisy inputs must flow through.
    """
    p_uv = np.asarray(p_uv, dtype=np.float64)
    p_d = np.asarray(p_d, dtype=np.float64)
    if p_uv.ndim != 3 or p_uv.shape[2] != 2:
        raise ShapeMismatch(f"expected p_uv (N, S, 2), got {p_uv.shape}")
    if p_d.shape != p_uv.shape[:2] + (1,):
        raise ShapeMismatch(f"expected p_d (N, S, 1), got {p_d.shape}")
    if np.any(p_d <= 0):
        raise NonPositivePrediction("predicted depths must be positive")
    n, s, _ = p_uv.shape
    if depths.shape[0] != s:
        raise ShapeMismatch(
            f"depth maps cover {depths.shape[0]} frames, trajectories have {s}"
        )

    fields = np.asarray(depths, dtype=np.float64)[:, 0]            # (S, h, w)
    u = np.ascontiguousarray(p_uv[:, :, 0].T)                      # (S, N)
    v = np.ascontiguousarray(p_uv[:, :, 1].T)
    sampled = bilinear_sample_batched(fields, u, v).T              # (N, S)

    valid = np.isfinite(sampled) & (sampled > 0)
    values = np.zeros((n, s, 1), dtype=np.float32)
    inv_diff = 1.0 / np.where(valid, sampled, 1.0) - 1.0 / p_d[:, :, 0]
    values[:, :, 0] = np.where(valid, inv_diff, 0.0).astype(np.float32)
    return DepthResidualFeature(values, valid)


def motion_features(p: np.ndarray, motion_channels: int) -> MotionFeatures:
    """Displacements relative to the window's first frame, plus encoding."""
    p = np.asarray(p, dtype=np.float32)
    d_uv = p[:, :, :2] - p[:, :1, :2]                               # (N, S, 2)
    d_d = p[:, :, 2:3] - p[:, :1, 2:3]                              # (N, S, 1)
    enc = sin_encoding_2d(d_uv[:, :, 0], d_uv[:, :, 1], motion_channels)
    o_uv = np.concatenate([d_uv, enc], axis=2).astype(np.float32)
    return MotionFeatures(o_uv, d_d.astype(np.float32))


def assemble_input(state: WindowState, feats: np.ndarray, depths: np.ndarray,
                   cfg: RunConfig) -> np.ndarray:
    """Concatenate correlation, depth residual, and motion features."""
    pyr = build_pyramid(state.q, feats, cfg.corr_levels)
    c_uv = lookup(pyr, state.p_uvd[:, :, :2], cfg.corr_radius)
    res = depth_residual(state.p_uvd[:, :, :2], state.p_uvd[:, :, 2:3], depths)
    mot = motion_features(state.p_uvd, cfg.motion_channels)
    return np.concatenate([c_uv, res.values, mot.o_uv, mot.o_d], axis=2)


def fim_iterate(state: WindowState, feats: np.ndarray, depths: np.ndarray,
                weights: WeightStore, cfg: RunConfig,
                trace: dict | None = None) -> WindowState:
    """One refinement iteration; returns a new WindowState."""
    x_in = assemble_input(state, feats, depths, cfg)
    delta_p, delta_q = updater_forward(x_in, state.p_uvd, weights, cfg, trace)
    q = state.q + delta_q
    p = state.p_uvd + delta_p
    p[:, :, 2] = np.maximum(p[:, :, 2], np.float32(cfg.eps_depth))
    return WindowState(q=q, p_uvd=p, iteration=state.iteration + 1)
