"""Core data carriers: RGB-D videos and trajectory sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .errors import ShapeMismatch
from .geometry import CameraIntrinsics, uvd_to_xyz, xyz_to_uvd


@dataclass
class RgbdVideo:
    """T frames of RGB in [0, 1] plus metric depth maps and intrinsics."""

    rgb: np.ndarray        # (T, 3, H, W) float32
    depth: np.ndarray      # (T, 1, H, W) float32, meters; <= 0 marks outliers
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if self.rgb.ndim != 4 or self.rgb.shape[1] != 3:
            raise ShapeMismatch(f"rgb must be (T, 3, H, W), got {self.rgb.shape}")
        if self.depth.shape != (self.rgb.shape[0], 1) + self.rgb.shape[2:]:
            raise ShapeMismatch(
                f"depth {self.depth.shape} does not match rgb {self.rgb.shape}"
            )

    @property
    def num_frames(self) -> int:
        return self.rgb.shape[0]

    @property
    def height(self) -> int:
        return self.rgb.shape[2]

    @property
    def width(self) -> int:
        return self.rgb.shape[3]


@dataclass
class TrajectorySet:
    """N x T x 3 positions with a per-entry validity mask.

    `frame` records the coordinate system: 'xyz' (camera, meters) or 'uvd'
    (pixels + depth).
    """

    positions: np.ndarray              # (N, T, 3) float64
    valid: np.ndarray = None           # (N, T) bool
    frame: str = "xyz"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ShapeMismatch(f"positions must be (N, T, 3), got {self.positions.shape}")
        if self.valid is None:
            self.valid = np.ones(self.positions.shape[:2], dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.positions.shape[:2]:
            raise ShapeMismatch(
                f"valid mask {self.valid.shape} does not match positions {self.positions.shape}"
            )
        if self.frame not in ("xyz", "uvd"):
            raise ValueError(f"frame must be 'xyz' or 'uvd', got {self.frame!r}")

    @property
    def num_points(self) -> int:
        return self.positions.shape[0]

    @property
    def num_frames(self) -> int:
        return self.positions.shape[1]

    def to_xyz(self, k: CameraIntrinsics) -> "TrajectorySet":
        if self.frame == "xyz":
            return self
        return TrajectorySet(uvd_to_xyz(self.positions, k), self.valid.copy(), "xyz")

    def to_uvd(self, k: CameraIntrinsics) -> "TrajectorySet":
        if self.frame == "uvd":
            return self
        return TrajectorySet(xyz_to_uvd(self.positions, k), self.valid.copy(), "uvd")


def write_trajectories(path, traj: TrajectorySet, k: CameraIntrinsics,
                       resolution: tuple, extra_meta: dict | None = None) -> None:
    """Persist a TrajectorySet (with intrinsics and source resolution)."""
    h, w = resolution
    meta = {"frame": traj.frame, "height": str(int(h)), "width": str(int(w))}
    meta.update(extra_meta or {})
    write_container(path, {
        "positions": traj.positions,
        "valid": traj.valid.astype(np.uint8),
        "intrinsics": k.as_array(),
    }, meta)


def read_trajectories(path) -> tuple:
    """Load (TrajectorySet, CameraIntrinsics, (H, W), meta)."""
    tensors, meta = read_container(path)
    for key in ("positions", "valid", "intrinsics"):
        if key not in tensors:
            raise ShapeMismatch(f"trajectory container at {path} lacks tensor {key!r}")
    traj = TrajectorySet(tensors["positions"], tensors["valid"].astype(bool),
                         meta.get("frame", "xyz"))
    k = CameraIntrinsics.from_array(tensors["intrinsics"])
    res = (int(meta["height"]), int(meta["width"]))
    return traj, k, res, meta
