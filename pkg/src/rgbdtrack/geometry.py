"""Pinhole camera algebra, rigid transforms, and bilinear sampling.

Conventions used throughout the package:
  - Camera frame: x right, y down, z forward (meters).
  - Image frame: u right, v down (pixels); integer coordinates address
    pixel centers.
  - uvd coordinates: (u, v) pixel position plus metric depth d = z.
  - All geometry runs in double precision; network tensors elsewhere are
    single precision.

Sampling outside the image rectangle is clamped to the border, which keeps
lookups total when iterated trajectories drift out of frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics (focal lengths and principal point, pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(vals)):
            raise ValueError(f"intrinsics must be finite, got {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "CameraIntrinsics":
        fx, fy, cx, cy = np.asarray(a, dtype=np.float64).reshape(4)
        return cls(float(fx), float(fy), float(cx), float(cy))


class RigidTransform:
    """4x4 homogeneous rigid transform (orthonormal rotation + translation)."""

    __slots__ = ("matrix",)

    def __init__(self, matrix, check: bool = True):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got shape {m.shape}")
        if check:
            _check_rigid(m)
        self.matrix = m

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(4), check=False)

    @classmethod
    def from_rt(cls, rotation, translation) -> "RigidTransform":
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=np.float64)
        m[:3, 3] = np.asarray(translation, dtype=np.float64)
        return cls(m)

    @classmethod
    def translation(cls, t) -> "RigidTransform":
        return cls.from_rt(np.eye(3), t)

    @classmethod
    def rotation(cls, axis, angle_rad: float) -> "RigidTransform":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0:
            return cls.identity()
        return cls.from_rt(_rodrigues(axis / n, angle_rad), np.zeros(3))

    @property
    def rot(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def trans(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other)(p) = self(other(p))."""
        return RigidTransform(self.matrix @ other.matrix, check=False)

    def inverse(self) -> "RigidTransform":
        rt = self.rot.T
        m = np.eye(4)
        m[:3, :3] = rt
        m[:3, 3] = -rt @ self.trans
        return RigidTransform(m, check=False)

    def apply(self, points) -> np.ndarray:
        """Apply to points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rot.T + self.trans


def _check_rigid(m: np.ndarray, tol: float = 1e-9) -> None:
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=tol):
        raise ValueError("bottom row of rigid transform must be (0, 0, 0, 1)")
    r = m[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=tol):
        raise ValueError("rotation block is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("rotation block must have determinant +1")


def _rodrigues(unit_axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = unit_axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def apply_transform(t: RigidTransform, points) -> np.ndarray:
    return t.apply(points)


def xyz_to_uvd(points, k: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points (..., 3) to (u, v, d).

    u = fx * x / z + cx, v = fy * y / z + cy, d = z.  Raises
    NonPositiveDepth when any z <= 0.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0) or not np.all(np.isfinite(z)):
        raise NonPositiveDepth("projection needs z > 0 for every point")
    out = np.empty_like(p)
    out[..., 0] = k.fx * p[..., 0] / z + k.cx
    out[..., 1] = k.fy * p[..., 1] / z + k.cy
    out[..., 2] = z
    return out


def uvd_to_xyz(uvd, k: CameraIntrinsics) -> np.ndarray:
    """Inverse of xyz_to_uvd; input (..., 3) with d > 0."""
    q = np.asarray(uvd, dtype=np.float64)
    d = q[..., 2]
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NonPositiveDepth("backprojection needs d > 0 for every point")
    out = np.empty_like(q)
    out[..., 0] = (q[..., 0] - k.cx) * d / k.fx
    out[..., 1] = (q[..., 1] - k.cy) * d / k.fy
    out[..., 2] = d
    return out


def downscale_uvd(uvd, s: float) -> np.ndarray:
    """Divide the uv components by s; depth is untouched."""
    if s <= 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    q = np.array(uvd, copy=True)
    q[..., 0] = q[..., 0] / s
    q[..., 1] = q[..., 1] / s
    return q


def upscale_uvd(uvd, s: float) -> np.ndarray:
    """Multiply the uv components by s; depth is untouched."""
    if s <= 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    q = np.array(uvd, copy=True)
    q[..., 0] = q[..., 0] * s
    q[..., 1] = q[..., 1] * s
    return q


def bilinear_sample(field, u, v) -> np.ndarray:
    """Sample a (h, w) scalar field at continuous (u, v), border-clamped.

    u indexes the last (width) axis, v the height axis.  Exact at integer
    grid coordinates.  Outputs are float64.
    """
    f = np.asarray(field)
    if f.ndim != 2 or f.size == 0:
        raise ValueError(f"expected a non-empty (h, w) field, got shape {f.shape}")
    h, w = f.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)

    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uc).astype(np.intp)
    y0 = np.floor(vc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = uc - x0
    wy = vc - y0

    top = (1.0 - wx) * f[y0, x0] + wx * f[y0, x1]
    bot = (1.0 - wx) * f[y1, x0] + wx * f[y1, x1]
    return (1.0 - wy) * top + wy * bot


def bilinear_sample_batched(fields, u, v) -> np.ndarray:
    """Sample fields (B, h, w) at per-field coords u, v of shape (B, ...).

    Field b is sampled at (u[b], v[b]); same clamping and conventions as
    bilinear_sample.  Returns float64 of shape (B, ...).
    """
    f = np.asarray(fields)
    if f.ndim != 3 or f.size == 0:
        raise ValueError(f"expected non-empty (B, h, w) fields, got shape {f.shape}")
    b, h, w = f.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape[0] != b or v.shape != u.shape:
        raise ValueError(f"coordinate batch {u.shape} does not match fields {f.shape}")

    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uc).astype(np.intp)
    y0 = np.floor(vc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = uc - x0
    wy = vc - y0

    bidx = np.arange(b, dtype=np.intp).reshape((b,) + (1,) * (u.ndim - 1))
    top = (1.0 - wx) * f[bidx, y0, x0] + wx * f[bidx, y0, x1]
    bot = (1.0 - wx) * f[bidx, y1, x0] + wx * f[bidx, y1, x1]
    return (1.0 - wy) * top + wy * bot
