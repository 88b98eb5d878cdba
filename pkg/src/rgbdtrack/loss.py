"""Training objective over refinement iterates, plus a finite-difference probe.

The loss sums, over windows and refinement iterations, a geometrically
discounted combination of the L1 image-plane error and an alpha-weighted L1
inverse-depth error.  No optimizer lives here; the finite-difference helper
exists so the analytic subgradient structure can be verified numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyList, KinkProximity, NonPositiveDepth


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.8     # discount of earlier iterations
    alpha: float = 250.0   # weight of the inverse-depth term

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def window_loss(iterates: list, gt_uv: np.ndarray, gt_d: np.ndarray,
                cfg: LossConfig = LossConfig(),
                valid: np.ndarray | None = None) -> float:
    """Discounted loss of one window's refinement iterates.

    iterates is the list of per-iteration (N, S, 3) uvd predictions, first
    to last; iteration i of n receives weight gamma^(n-i).  Terms are plain
    sums over points and frames; an optional (N, S) mask zeroes masked
    entries (for unsupervised/occluded ground truth).
    """
    if not iterates:
        raise EmptyList("window_loss needs at least one iterate")
    gt_uv = np.asarray(gt_uv, dtype=np.float64)
    gt_d = np.asarray(gt_d, dtype=np.float64)
    if np.any(gt_d <= 0):
        raise NonPositiveDepth("ground-truth depths must be positive")
    if valid is None:
        mask = np.ones(gt_uv.shape[:2], dtype=np.float64)
    else:
        mask = np.asarray(valid, dtype=np.float64)

    n = len(iterates)
    total = 0.0
    for i, it in enumerate(iterates, start=1):
        it = np.asarray(it, dtype=np.float64)
        if np.any(it[..., 2] <= 0):
            raise NonPositiveDepth(f"iterate {i} contains non-positive depths")
        uv_term = (np.abs(it[..., :2] - gt_uv).sum(axis=2) * mask).sum()
        d_term = (np.abs(1.0 / it[..., 2] - 1.0 / gt_d[..., 0]) * mask).sum()
        total += cfg.gamma ** (n - i) * (uv_term + cfg.alpha * d_term)
    return float(total)


def total_loss(per_window_losses: list) -> float:
    """Sum the per-window losses of a video."""
    if not per_window_losses:
        raise EmptyList("total_loss needs at least one window")
    return float(np.sum(per_window_losses))


def fd_gradient(iterates: list, gt_uv: np.ndarray, gt_d: np.ndarray,
                which: tuple, h: float = 1e-4,
                cfg: LossConfig = LossConfig(),
                valid: np.ndarray | None = None) -> float:
    """Central finite difference of window_loss w.r.t. one prediction entry.

    which = (iteration index, point, frame, coord) with coord 0/1 the uv
    components and 2 the depth.  The probe refuses points closer than 10*h
    to the L1 kink of the perturbed coordinate (where the derivative does
    not exist), raising KinkProximity.
    """
    i, p, f, c = which
    base = np.asarray(iterates[i], dtype=np.float64)
    if c in (0, 1):
        residual = base[p, f, c] - np.asarray(gt_uv, dtype=np.float64)[p, f, c]
    elif c == 2:
        residual = base[p, f, 2] - np.asarray(gt_d, dtype=np.float64)[p, f, 0]
    else:
        raise ValueError(f"coord must be 0, 1 or 2, got {c}")
    if abs(residual) <= 10.0 * h:
        raise KinkProximity(
            f"residual {residual:+.3e} at {which} is within 10*h={10 * h:.1e} of the kink"
        )

    def evaluate(delta: float) -> float:
        its = [np.array(x, dtype=np.float64, copy=True) for x in iterates]
        its[i][p, f, c] += delta
        return window_loss(its, gt_uv, gt_d, cfg, valid)

    return (evaluate(+h) - evaluate(-h)) / (2.0 * h)
