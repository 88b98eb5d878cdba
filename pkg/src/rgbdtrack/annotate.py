"""Trajectory annotation from vehicle poses, boxes, and stereo disparities.

Static background points ride the inverse ego motion; rigid-object points
additionally ride their tracked 3D box; pedestrian-style points come from a
refined image trajectory plus a disparity sequence.  Sparse depths are
densified by nearest neighbor, and occlusion masks compare trajectory
depths against the densified maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TrajectorySet
from .errors import (EmptySparseSet, FrameOutOfRange, NonPositiveDisparity,
                     ShapeMismatch, UnknownBox)
from .geometry import CameraIntrinsics, RigidTransform, uvd_to_xyz


@dataclass
class PoseLog:
    """Per-frame ego-to-world transforms, plus world-to-box transforms per
    tracked object.  Frames are 1-based."""

    ego: dict = field(default_factory=dict)          # frame -> RigidTransform
    boxes: dict = field(default_factory=dict)        # box id -> {frame -> RigidTransform}

    def ego_at(self, t: int) -> RigidTransform:
        if t not in self.ego:
            raise FrameOutOfRange(f"no ego pose for frame {t}")
        return self.ego[t]

    def box_at(self, box_id: str, t: int) -> RigidTransform:
        if box_id not in self.boxes:
            raise UnknownBox(f"no box {box_id!r} in the pose log")
        if t not in self.boxes[box_id]:
            raise FrameOutOfRange(f"no pose for box {box_id!r} at frame {t}")
        return self.boxes[box_id][t]

    @property
    def frames(self) -> list:
        return sorted(self.ego)


def parse_pose_text(text: str) -> PoseLog:
    """Parse the plain-text pose format.

    Group header ``frame <t> ego`` or ``frame <t> box <id>`` followed by
    four lines of four numbers (row-major 4x4).  Blank lines and lines
    starting with '#' are ignored.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    log = PoseLog()
    i = 0
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "frame" or len(head) not in (3, 4):
            raise ValueError(f"pose file: bad group header {lines[i]!r}")
        try:
            t = int(head[1])
        except ValueError as e:
            raise ValueError(f"pose file: bad frame index in {lines[i]!r}") from e
        rows = []
        for j in range(1, 5):
            if i + j >= len(lines):
                raise ValueError(f"pose file: truncated matrix for {lines[i]!r}")
            vals = lines[i + j].split()
            if len(vals) != 4:
                raise ValueError(f"pose file: expected 4 numbers, got {lines[i + j]!r}")
            rows.append([float(v) for v in vals])
        tf = RigidTransform(np.array(rows))
        if head[2] == "ego":
            log.ego[t] = tf
        elif head[2] == "box" and len(head) == 4:
            log.boxes.setdefault(head[3], {})[t] = tf
        else:
            raise ValueError(f"pose file: bad group header {lines[i]!r}")
        i += 5
    return log


def project_background(x, poses: PoseLog, t: int) -> np.ndarray:
    """Move a static world point given in frame-1 ego coordinates to frame t.

    The point is fixed in the world; only the ego moves:
    x_t = W_t^-1 (W_1 x).
    """
    w1 = poses.ego_at(1)
    wt = poses.ego_at(t)
    return wt.inverse().apply(w1.apply(x))


def project_vehicle(x, poses: PoseLog, box_id: str, t: int) -> np.ndarray:
    """Move a point riding a tracked box from frame-1 ego coordinates to
    frame t: x_t = W_t^-1 B_t^-1 (B_1 W_1 x)."""
    w1 = poses.ego_at(1)
    b1 = poses.box_at(box_id, 1)
    bt = poses.box_at(box_id, t)
    wt = poses.ego_at(t)
    box_local = b1.apply(w1.apply(x))
    return wt.inverse().apply(bt.inverse().apply(box_local))


def disparity_to_depth(fx: float, baseline_m: float, disparity_px) -> np.ndarray:
    """Depth from rectified-stereo disparity: d = fx * b / c."""
    c = np.asarray(disparity_px, dtype=np.float64)
    if np.any(c <= 0):
        raise NonPositiveDisparity("disparities must be strictly positive")
    return fx * baseline_m / c


def assemble_pedestrian_trajectory(left_uv: np.ndarray, disparities: np.ndarray,
                                   baseline_m: float,
                                   k: CameraIntrinsics) -> TrajectorySet:
    """3D trajectory of one point from its left-view track and disparities.

    left_uv is (T, 2), disparities (T,).  Frames whose disparity is not
    strictly positive are marked invalid instead of raising, since real
    disparity tracks have gaps.
    """
    left_uv = np.asarray(left_uv, dtype=np.float64)
    disparities = np.asarray(disparities, dtype=np.float64)
    if left_uv.ndim != 2 or left_uv.shape[1] != 2:
        raise ShapeMismatch(f"left_uv must be (T, 2), got {left_uv.shape}")
    if disparities.shape != (left_uv.shape[0],):
        raise ShapeMismatch(
            f"disparities {disparities.shape} do not match trajectory {left_uv.shape}"
        )
    num_frames = left_uv.shape[0]
    valid = disparities > 0
    positions = np.zeros((1, num_frames, 3), dtype=np.float64)
    if valid.any():
        depth = disparity_to_depth(k.fx, baseline_m, disparities[valid])
        uvd = np.concatenate([left_uv[valid], depth[:, None]], axis=1)
        positions[0, valid] = uvd_to_xyz(uvd, k)
    return TrajectorySet(positions, valid[None, :], "xyz")


def densify_depth(sparse: np.ndarray, size: tuple, chunk_rows: int = 64) -> np.ndarray:
    """Dense (H, W) depth map by nearest-neighbor from (u, v, depth) rows.

    Distances are Euclidean in pixel space; exact ties go to the source
    with the smallest (v, u), which keeps the result bit-reproducible.
    """
    sparse = np.asarray(sparse, dtype=np.float64)
    if sparse.ndim != 2 or sparse.shape[1] != 3 or sparse.shape[0] == 0:
        raise EmptySparseSet(f"need a non-empty (P, 3) sparse set, got {sparse.shape}")
    h, w = size
    # canonical source order so argmin's first-hit rule implements the tie-break
    order = np.lexsort((sparse[:, 0], sparse[:, 1]))
    su, sv, sd = sparse[order, 0], sparse[order, 1], sparse[order, 2]

    out = np.empty((h, w), dtype=np.float64)
    us = np.arange(w, dtype=np.float64)
    for r0 in range(0, h, chunk_rows):
        r1 = min(r0 + chunk_rows, h)
        vs = np.arange(r0, r1, dtype=np.float64)
        d2 = (us[None, :, None] - su[None, None, :]) ** 2 \
            + (vs[:, None, None] - sv[None, None, :]) ** 2     # (rows, W, P)
        out[r0:r1] = sd[np.argmin(d2, axis=2)]
    return out


def occlusion_mask(dense_depths: np.ndarray, traj: TrajectorySet,
                   k: CameraIntrinsics, tau_occ: float = 0.2) -> np.ndarray:
    """Validity mask (N, T): in-frame and depth-consistent within tau_occ.

    dense_depths is (T, H, W); an entry is valid iff its projection lands
    inside the image and the indexed depth agrees with the trajectory's z
    to within tau_occ meters.
    """
    from .geometry import bilinear_sample

    xyz = traj.to_xyz(k).positions
    n, num_frames, _ = xyz.shape
    if dense_depths.shape[0] != num_frames:
        raise ShapeMismatch(
            f"depth maps cover {dense_depths.shape[0]} frames, trajectories {num_frames}"
        )
    h, w = dense_depths.shape[1:]
    valid = np.zeros((n, num_frames), dtype=bool)
    for t in range(num_frames):
        z = xyz[:, t, 2]
        front = z > 0
        u = np.where(front, k.fx * xyz[:, t, 0] / np.where(front, z, 1.0) + k.cx, -1.0)
        v = np.where(front, k.fy * xyz[:, t, 1] / np.where(front, z, 1.0) + k.cy, -1.0)
        inb = front & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
        if np.any(inb):
            sampled = bilinear_sample(np.asarray(dense_depths[t], dtype=np.float64),
                                      u[inb], v[inb])
            ok = np.abs(sampled - z[inb]) < tau_occ
            idx = np.flatnonzero(inb)
            valid[idx[ok], t] = True
    return valid
