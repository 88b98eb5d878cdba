"""2D and 3D trajectory evaluation.

2D metrics are computed on image-plane projections rescaled to a 256x256
normalized resolution; 3D metrics on camera-frame positions in meters.
Every statistic ignores entries whose validity mask is false.  Aggregation
conventions (pinned here so numbers are reproducible): the survival rate is
computed per trajectory and averaged unweighted; the median trajectory
error pools all valid point-frame errors, with even counts taking the
midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrajectorySet
from .errors import NoValidPoints, ShapeMismatch
from .geometry import CameraIntrinsics

NORMALIZED_SIZE = 256.0
THRESHOLDS_2D = (1.0, 2.0, 4.0, 8.0, 16.0)      # pixels, normalized frame
THRESHOLDS_3D = (0.10, 0.20, 0.40, 0.80)        # meters
SURVIVAL_THRESHOLD_2D = 16.0                    # pixels, normalized frame
SURVIVAL_THRESHOLD_3D = 0.50                    # meters


@dataclass(frozen=True)
class EvalReport:
    delta_2d_avg: float
    survival_2d_16: float
    mae_2d: float
    delta_3d: tuple                 # one entry per THRESHOLDS_3D
    delta_3d_avg: float
    survival_3d_0_50: float
    mae_3d: float
    epe_3d: float

    def to_dict(self) -> dict:
        d = {
            "delta_2d_avg": self.delta_2d_avg,
            "survival_2d_16": self.survival_2d_16,
            "mae_2d": self.mae_2d,
        }
        for thr, val in zip(THRESHOLDS_3D, self.delta_3d):
            d[f"delta_3d_{thr:.2f}"] = val
        d.update({
            "delta_3d_avg": self.delta_3d_avg,
            "survival_3d_0.50": self.survival_3d_0_50,
            "mae_3d": self.mae_3d,
            "epe_3d": self.epe_3d,
        })
        return d


def report_text(report: EvalReport) -> str:
    """Flat key-value rendering with fixed key order and 9 significant digits."""
    lines = [f"{key} {value:.9g}" for key, value in report.to_dict().items()]
    return "\n".join(lines) + "\n"


def normalize_2d(uv: np.ndarray, resolution: tuple) -> np.ndarray:
    """Rescale uv from a (H, W) image into the 256x256 normalized frame."""
    h, w = resolution
    if h <= 0 or w <= 0:
        raise ValueError(f"resolution must be positive, got {(h, w)}")
    out = np.array(uv, dtype=np.float64, copy=True)
    out[..., 0] *= NORMALIZED_SIZE / w
    out[..., 1] *= NORMALIZED_SIZE / h
    return out


def denormalize_2d(uv: np.ndarray, resolution: tuple) -> np.ndarray:
    """Inverse of normalize_2d."""
    h, w = resolution
    if h <= 0 or w <= 0:
        raise ValueError(f"resolution must be positive, got {(h, w)}")
    out = np.array(uv, dtype=np.float64, copy=True)
    out[..., 0] *= w / NORMALIZED_SIZE
    out[..., 1] *= h / NORMALIZED_SIZE
    return out


def _errors(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1)


def _checked_valid(valid: np.ndarray, shape: tuple) -> np.ndarray:
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != shape:
        raise ShapeMismatch(f"valid mask {valid.shape} does not match entries {shape}")
    if not valid.any():
        raise NoValidPoints("every entry is masked out")
    return valid


def delta_avg(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray,
              thresholds: tuple) -> float:
    """Percent of valid entries with error strictly below each threshold,
    averaged over the thresholds."""
    err = _errors(pred, gt)
    valid = _checked_valid(valid, err.shape)
    e = err[valid]
    return float(np.mean([100.0 * np.mean(e < thr) for thr in thresholds]))


def survival(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray,
             fail_threshold: float) -> float:
    """Mean percentage of frames before each trajectory's first failure.

    A trajectory that first exceeds the threshold at (1-based) frame j
    survives (j - 1) / T of the video; one that never exceeds it scores
    100.  Invalid entries cannot fail.  Trajectories with no valid entry
    are excluded from the mean.
    """
    err = _errors(pred, gt)
    valid = _checked_valid(valid, err.shape)
    n, num_frames = err.shape
    rates = []
    for i in range(n):
        if not valid[i].any():
            continue
        exceed = valid[i] & (err[i] > fail_threshold)
        if exceed.any():
            j = int(np.argmax(exceed))                # 0-based first failure
            rates.append(100.0 * j / num_frames)
        else:
            rates.append(100.0)
    return float(np.mean(rates))


def mae(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> float:
    """Median error over the pooled valid point-frame entries."""
    err = _errors(pred, gt)
    valid = _checked_valid(valid, err.shape)
    return float(np.median(err[valid]))


def epe_3d(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> float:
    """Mean Euclidean distance over the valid entries."""
    err = _errors(pred, gt)
    valid = _checked_valid(valid, err.shape)
    return float(np.mean(err[valid]))


def _project_uv(xyz: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Projection for metric purposes; z floored so wild estimates still score."""
    z = np.maximum(xyz[..., 2], 1e-9)
    return np.stack([k.fx * xyz[..., 0] / z + k.cx,
                     k.fy * xyz[..., 1] / z + k.cy], axis=-1)


def evaluate(pred: TrajectorySet, gt: TrajectorySet, k: CameraIntrinsics,
             resolution: tuple, depth_cap: float | None = None) -> EvalReport:
    """Full report for a prediction / ground-truth pair of camera-xyz sets.

    resolution is the source image (H, W) used for 2D normalization.  With
    depth_cap set, only entries whose ground-truth depth is below the cap
    (meters) enter any statistic.
    """
    pred = pred.to_xyz(k)
    gt = gt.to_xyz(k)
    if pred.positions.shape != gt.positions.shape:
        raise ShapeMismatch(
            f"prediction {pred.positions.shape} vs ground truth {gt.positions.shape}"
        )
    valid = pred.valid & gt.valid
    if depth_cap is not None:
        valid = valid & (gt.positions[..., 2] < depth_cap)
    if not valid.any():
        raise NoValidPoints("no valid entries remain after masking/depth cap")

    uv_pred = normalize_2d(_project_uv(pred.positions, k), resolution)
    uv_gt = normalize_2d(_project_uv(gt.positions, k), resolution)

    d3 = tuple(delta_avg(pred.positions, gt.positions, valid, (thr,))
               for thr in THRESHOLDS_3D)
    return EvalReport(
        delta_2d_avg=delta_avg(uv_pred, uv_gt, valid, THRESHOLDS_2D),
        survival_2d_16=survival(uv_pred, uv_gt, valid, SURVIVAL_THRESHOLD_2D),
        mae_2d=mae(uv_pred, uv_gt, valid),
        delta_3d=d3,
        delta_3d_avg=float(np.mean(d3)),
        survival_3d_0_50=survival(pred.positions, gt.positions, valid,
                                  SURVIVAL_THRESHOLD_3D),
        mae_3d=mae(pred.positions, gt.positions, valid),
        epe_3d=epe_3d(pred.positions, gt.positions, valid),
    )
