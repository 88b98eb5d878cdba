"""Appearance correlation pyramid and neighborhood lookup.

Level 1 holds the raw dot product between every template vector and every
feature-map position of its frame; deeper levels are 2x2 average poolings.
Lookups bilinearly sample a (2r+1)^2 neighborhood around each trajectory
point at every level and concatenate, giving levels * (2r+1)^2 channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .geometry import bilinear_sample_batched
from .nnops import avg_pool2


@dataclass
class CorrelationPyramid:
    """levels[i] has shape (N, S, h / 2^i, w / 2^i) (floored)."""

    levels: list

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def level_shapes(self) -> list:
        return [lv.shape[2:] for lv in self.levels]


def build_pyramid(q: np.ndarray, f: np.ndarray, num_levels: int = 4) -> CorrelationPyramid:
    """Correlate templates q (N, S, c) against feature maps f (S, c, h, w).

    level1[n, t, y, x] = <q[n, t, :], f[t, :, y, x]>, no normalization;
    subsequent levels are 2x2 average poolings of the previous one.
    """
    q = np.asarray(q, dtype=np.float32)
    f = np.asarray(f, dtype=np.float32)
    if q.ndim != 3 or f.ndim != 4:
        raise ShapeMismatch(f"expected q (N, S, c) and f (S, c, h, w), got {q.shape}, {f.shape}")
    if q.shape[1] != f.shape[0] or q.shape[2] != f.shape[1]:
        raise ShapeMismatch(
            f"template {q.shape} and features {f.shape} disagree on frames/channels"
        )
    level = np.einsum("nsc,schw->nshw", q, f, optimize=True).astype(np.float32)
    levels = [level]
    for _ in range(num_levels - 1):
        level = avg_pool2(level)
        levels.append(level)
    return CorrelationPyramid(levels)


def lookup(pyr: CorrelationPyramid, p_uv: np.ndarray, radius: int) -> np.ndarray:
    """Sample the pyramid around coarse-grid trajectory points.

    p_uv is (N, S, 2) in level-1 coordinates; level i is sampled at
    p_uv / 2^i plus integer offsets in [-radius, radius]^2 (dy outer, dx
    inner), border-clamped.  Returns (N, S, levels * (2*radius+1)^2)
    float32 with the levels concatenated in order.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    p_uv = np.asarray(p_uv, dtype=np.float64)
    if p_uv.ndim != 3 or p_uv.shape[2] != 2:
        raise ShapeMismatch(f"expected p_uv (N, S, 2), got {p_uv.shape}")
    n, s, _ = p_uv.shape
    side = 2 * radius + 1
    dy, dx = np.mgrid[-radius: radius + 1, -radius: radius + 1]
    dx = dx.reshape(-1).astype(np.float64)
    dy = dy.reshape(-1).astype(np.float64)

    chunks = []
    for i, level in enumerate(pyr.levels):
        if level.shape[:2] != (n, s):
            raise ShapeMismatch(
                f"pyramid level {i} batch {level.shape[:2]} does not match points {(n, s)}"
            )
        centers = p_uv / float(2 ** i)
        u = centers[:, :, 0].reshape(n * s, 1) + dx[None, :]   # (N*S, K)
        v = centers[:, :, 1].reshape(n * s, 1) + dy[None, :]
        fields = level.reshape(n * s, *level.shape[2:])
        vals = bilinear_sample_batched(fields, u, v)           # (N*S, K)
        chunks.append(vals.reshape(n, s, side * side))
    return np.concatenate(chunks, axis=2).astype(np.float32)
