"""Deterministic synthetic RGB-D scenes with exact 3D ground truth.

Scenes are lists of rigid textured bodies (planar patches and ellipsoids)
moving on constant-velocity tracks (or explicit per-frame poses) in front
of a moving pinhole camera.  Rendering is analytic ray casting with a
nearest-surface z-buffer at supersampled resolution, box-filtered down, so
depth edges stay crisp.  Every derived quantity (query points, ground-truth
trajectories, dense two-frame flow, validity masks) comes from the same
rigid-motion algebra, and a seed fully determines the output.

Depth outliers emulate sensor noise: a seeded fraction of depth pixels per
frame is overwritten with the sentinel value 0, which real geometry can
never produce.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .data import RgbdVideo, TrajectorySet
from .errors import DegenerateSpec, FrameOutOfRange, ShapeMismatch
from .geometry import CameraIntrinsics, RigidTransform, xyz_to_uvd, bilinear_sample

DEPTH_SENTINEL = 0.0
DEPTH_CONSISTENCY_TOL = 1e-3   # meters; validity requires |rendered - gt z| below this


@dataclass
class BodySpec:
    """One rigid textured body.

    kind 'plane': a rectangle in the body's local z=0 plane with half
    extents size=(ex, ey).  kind 'ellipsoid': radii size=(rx, ry, rz).
    Motion is position + velocity*(t-1) and a spin of angular_rate rad per
    frame about angular_axis, applied on top of the base orientation
    (axis-angle rotvec); explicit per-frame poses override all of that.
    Occluders render normally but are never sampled for query points.
    """

    kind: str
    size: tuple
    position: tuple = (0.0, 0.0, 2.0)
    orientation: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    angular_axis: tuple = (0.0, 0.0, 1.0)
    angular_rate: float = 0.0
    occluder: bool = False
    texture_scale: float = 18.0
    poses: np.ndarray | None = None     # (T, 4, 4) body-to-world, optional

    def __post_init__(self):
        if self.kind not in ("plane", "ellipsoid"):
            raise DegenerateSpec(f"unknown body kind {self.kind!r}")
        need = 2 if self.kind == "plane" else 3
        if len(self.size) != need or any(s <= 0 for s in self.size):
            raise DegenerateSpec(
                f"{self.kind} size needs {need} positive entries, got {self.size}"
            )


@dataclass
class CameraMotion:
    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    angular_axis: tuple = (0.0, 0.0, 1.0)
    angular_rate: float = 0.0
    poses: np.ndarray | None = None     # (T, 4, 4) camera-to-world, optional


@dataclass
class SceneSpec:
    seed: int
    height: int
    width: int
    frames: int
    intrinsics: CameraIntrinsics
    bodies: list
    camera: CameraMotion = field(default_factory=CameraMotion)
    num_queries: int = 8
    outlier_fraction: float = 0.0
    supersample: int = 4

    def __post_init__(self):
        if self.frames < 1:
            raise DegenerateSpec(f"frames must be >= 1, got {self.frames}")
        if self.height < 1 or self.width < 1:
            raise DegenerateSpec(f"bad image size {self.height}x{self.width}")
        if not self.bodies:
            raise DegenerateSpec("scene needs at least one body")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise DegenerateSpec(
                f"outlier_fraction must be in [0, 1), got {self.outlier_fraction}"
            )
        if self.supersample < 1:
            raise DegenerateSpec(f"supersample must be >= 1, got {self.supersample}")


@dataclass
class SampleRecord:
    """A rendered scene together with all of its ground truth."""

    video: RgbdVideo
    queries: np.ndarray          # (N, 1, 3) float64, camera frame at t=1
    gt: TrajectorySet            # xyz, (N, T, 3) with validity mask
    flows: np.ndarray            # (T-1, 3, H, W) float64, frame t -> t+1
    seed: int = 0


def _rotvec_matrix(rotvec) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=np.float64)
    angle = float(np.linalg.norm(rotvec))
    if angle == 0.0:
        return np.eye(3)
    return RigidTransform.rotation(rotvec / angle, angle).rot


def _pose_track(position, orientation, velocity, angular_axis, angular_rate,
                frames: int, poses: np.ndarray | None) -> np.ndarray:
    """Resolve per-frame 4x4 poses (local-to-world) for a moving body/camera."""
    if poses is not None:
        p = np.asarray(poses, dtype=np.float64)
        if p.shape != (frames, 4, 4):
            raise DegenerateSpec(f"explicit poses must be ({frames}, 4, 4), got {p.shape}")
        for t in range(frames):
            RigidTransform(p[t])     # validates rigidity
        return p
    base_r = _rotvec_matrix(orientation)
    out = np.empty((frames, 4, 4), dtype=np.float64)
    for t in range(frames):
        spin = RigidTransform.rotation(angular_axis, angular_rate * t).rot
        m = np.eye(4)
        m[:3, :3] = spin @ base_r
        m[:3, 3] = np.asarray(position, dtype=np.float64) + np.asarray(velocity) * t
        out[t] = m
    return out


def _ray_dirs(k: CameraIntrinsics, width: int, height: int, ss: int) -> np.ndarray:
    """Camera-frame ray directions (3, height*ss * width*ss), z = 1."""
    u = (np.arange(width * ss, dtype=np.float64) + 0.5) / ss - 0.5
    v = (np.arange(height * ss, dtype=np.float64) + 0.5) / ss - 0.5
    uu, vv = np.meshgrid(u, v)
    d = np.empty((3, uu.size), dtype=np.float64)
    d[0] = ((uu - k.cx) / k.fx).ravel()
    d[1] = ((vv - k.cy) / k.fy).ravel()
    d[2] = 1.0
    return d


def _cast(dirs: np.ndarray, cam_to_world: np.ndarray, body_mats: list,
          bodies: list) -> tuple:
    """Nearest-hit ray cast; returns (depth, body index, body-local points).

    dirs are camera-frame with unit z component, so the ray parameter of a
    hit equals its camera-frame depth.  Misses get depth inf and index -1.
    """
    n = dirs.shape[1]
    z = np.full(n, np.inf)
    idx = np.full(n, -1, dtype=np.int64)
    local = np.zeros((n, 3), dtype=np.float64)
    for b, (body, mat) in enumerate(zip(bodies, body_mats)):
        m = np.linalg.inv(mat) @ cam_to_world      # camera -> body local
        o = m[:3, 3]
        d = m[:3, :3] @ dirs                        # (3, n)
        if body.kind == "plane":
            dz = d[2]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(np.abs(dz) > 1e-12, -o[2] / dz, np.inf)
            px = o[0] + t * d[0]
            py = o[1] + t * d[1]
            ex, ey = body.size
            hit = (t > 1e-9) & (np.abs(px) <= ex) & (np.abs(py) <= ey)
            pts = np.stack([px, py, np.zeros_like(px)], axis=1)
        else:
            r = np.asarray(body.size, dtype=np.float64)
            os_ = o / r
            ds = d / r[:, None]
            a = np.einsum("ij,ij->j", ds, ds)
            bq = 2.0 * (os_ @ ds)
            c = float(os_ @ os_) - 1.0
            disc = bq * bq - 4.0 * a * c
            ok = disc >= 0.0
            sq = np.sqrt(np.where(ok, disc, 0.0))
            t1 = (-bq - sq) / (2.0 * a)
            t2 = (-bq + sq) / (2.0 * a)
            t = np.where(t1 > 1e-9, t1, t2)
            hit = ok & (t > 1e-9)
            pts = (o[None, :] + t[:, None] * d.T)
        better = hit & (t < z)
        z[better] = t[better]
        idx[better] = b
        local[better] = pts[better]
    return z, idx, local


def _texture_colors(body_index: int, seed: int, scale: float,
                    points: np.ndarray) -> np.ndarray:
    """Band-limited noise texture; points (M, 3) body-local -> colors (M, 3)."""
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([seed, 1000 + body_index])))
    waves = 8
    omega = rng.uniform(-scale, scale, size=(waves, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(waves, 3))
    amp = rng.uniform(0.05, 0.22, size=(waves, 3))
    args = points @ omega.T                         # (M, waves)
    colors = np.full((points.shape[0], 3), 0.5)
    for w in range(waves):
        colors += amp[w] * np.sin(args[:, w:w + 1] + phase[w])
    return np.clip(colors, 0.0, 1.0)


def generate(spec: SceneSpec) -> SampleRecord:
    """Render a scene spec into a SampleRecord (pure function of the spec)."""
    k = spec.intrinsics
    T, H, W, ss = spec.frames, spec.height, spec.width, spec.supersample

    cam_poses = _pose_track(spec.camera.position, spec.camera.orientation,
                            spec.camera.velocity, spec.camera.angular_axis,
                            spec.camera.angular_rate, T, spec.camera.poses)
    body_poses = [
        _pose_track(b.position, b.orientation, b.velocity, b.angular_axis,
                    b.angular_rate, T, b.poses)
        for b in spec.bodies
    ]

    # a body origin behind the camera makes the scene unrenderable
    for bi, poses in enumerate(body_poses):
        for t in range(T):
            origin_cam = np.linalg.inv(cam_poses[t]) @ np.append(poses[t][:3, 3], 1.0)
            if origin_cam[2] <= 0:
                raise DegenerateSpec(
                    f"bodies[{bi}] sits behind the camera at frame {t + 1}"
                )

    dirs_ss = _ray_dirs(k, W, H, ss)
    dirs_c = _ray_dirs(k, W, H, 1)

    rgb = np.empty((T, 3, H, W), dtype=np.float32)
    depth = np.empty((T, 1, H, W), dtype=np.float32)
    center_idx = np.empty((T, H * W), dtype=np.int64)
    center_local = np.empty((T, H * W, 3), dtype=np.float64)

    for t in range(T):
        mats = [poses[t] for poses in body_poses]
        z, idx, local = _cast(dirs_ss, cam_poses[t], mats, spec.bodies)

        color = np.zeros((z.size, 3), dtype=np.float64)
        for b in range(len(spec.bodies)):
            sel = idx == b
            if np.any(sel):
                color[sel] = _texture_colors(b, spec.seed,
                                             spec.bodies[b].texture_scale, local[sel])
        hit = idx >= 0
        zs = np.where(hit, z, 0.0).reshape(H, ss, W, ss)
        hits = hit.reshape(H, ss, W, ss)
        counts = hits.sum(axis=(1, 3))
        zsum = zs.sum(axis=(1, 3))
        with np.errstate(invalid="ignore"):
            dpix = np.where(counts > 0, zsum / np.maximum(counts, 1), DEPTH_SENTINEL)
        depth[t, 0] = dpix.astype(np.float32)
        cpix = color.reshape(H, ss, W, ss, 3).mean(axis=(1, 3))
        rgb[t] = cpix.transpose(2, 0, 1).astype(np.float32)

        zc, ic, lc = _cast(dirs_c, cam_poses[t], mats, spec.bodies)
        center_idx[t] = ic
        center_local[t] = lc

    # query points: interior (non-edge) pixels of non-occluder bodies at frame 1
    occ = np.array([b.occluder for b in spec.bodies])
    idx_map = center_idx[0].reshape(H, W)
    eligible = (idx_map >= 0) & ~occ[np.clip(idx_map, 0, None)]
    interior = eligible.copy()
    interior[1:, :] &= idx_map[1:, :] == idx_map[:-1, :]
    interior[:-1, :] &= idx_map[:-1, :] == idx_map[1:, :]
    interior[:, 1:] &= idx_map[:, 1:] == idx_map[:, :-1]
    interior[:, :-1] &= idx_map[:, :-1] == idx_map[:, 1:]
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    flat = np.flatnonzero(interior.ravel())
    if flat.size < spec.num_queries:
        raise DegenerateSpec(
            f"only {flat.size} interior surface pixels available for "
            f"{spec.num_queries} query points"
        )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, 1])))
    chosen = np.sort(rng.choice(flat, size=spec.num_queries, replace=False))

    q_body = center_idx[0][chosen]
    q_local = center_local[0][chosen]                       # (N, 3)
    n = spec.num_queries

    # ground-truth trajectories: rigid chain body-local -> world -> camera
    gt_pos = np.empty((n, T, 3), dtype=np.float64)
    for t in range(T):
        world_from_cam = cam_poses[t]
        cam_from_world = np.linalg.inv(world_from_cam)
        for b in range(len(spec.bodies)):
            sel = q_body == b
            if not np.any(sel):
                continue
            m = cam_from_world @ body_poses[b][t]
            gt_pos[sel, t] = q_local[sel] @ m[:3, :3].T + m[:3, 3]
    queries = gt_pos[:, :1, :].copy()                        # (N, 1, 3)

    # depth outliers: fixed seeded count per frame, sentinel value 0
    if spec.outlier_fraction > 0:
        orng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([spec.seed, 2])))
        count = int(round(spec.outlier_fraction * H * W))
        for t in range(T):
            pix = orng.choice(H * W, size=count, replace=False)
            depth[t, 0].ravel()[pix] = DEPTH_SENTINEL

    # validity: in frame, in front of the camera, and depth-consistent
    valid = np.zeros((n, T), dtype=bool)
    for t in range(T):
        z = gt_pos[:, t, 2]
        front = z > 0
        uv = np.zeros((n, 2))
        uv[front, 0] = k.fx * gt_pos[front, t, 0] / z[front] + k.cx
        uv[front, 1] = k.fy * gt_pos[front, t, 1] / z[front] + k.cy
        inb = front & (uv[:, 0] >= 0) & (uv[:, 0] <= W - 1) \
            & (uv[:, 1] >= 0) & (uv[:, 1] <= H - 1)
        if np.any(inb):
            rendered = bilinear_sample(depth[t, 0].astype(np.float64),
                                       uv[inb, 0], uv[inb, 1])
            ok = np.abs(rendered - z[inb]) < DEPTH_CONSISTENCY_TOL
            sub = np.flatnonzero(inb)
            valid[sub[ok], t] = True

    # dense two-frame flow from the center-ray surface points
    flows = np.zeros((max(T - 1, 0), 3, H, W), dtype=np.float64)
    for t in range(T - 1):
        cur = np.linalg.inv(cam_poses[t])
        nxt = np.linalg.inv(cam_poses[t + 1])
        for b in range(len(spec.bodies)):
            sel = center_idx[t] == b
            if not np.any(sel):
                continue
            m_cur = cur @ body_poses[b][t]
            m_nxt = nxt @ body_poses[b][t + 1]
            pts = center_local[t][sel]
            disp = (pts @ m_nxt[:3, :3].T + m_nxt[:3, 3]) \
                - (pts @ m_cur[:3, :3].T + m_cur[:3, 3])
            flows[t].reshape(3, -1)[:, sel] = disp.T

    video = RgbdVideo(rgb=rgb, depth=depth, intrinsics=k)
    gt = TrajectorySet(positions=gt_pos, valid=valid, frame="xyz")
    return SampleRecord(video=video, queries=queries, gt=gt, flows=flows,
                        seed=spec.seed)


def gt_flow(record: SampleRecord, t: int) -> np.ndarray:
    """Dense camera-frame flow from frame t to t+1 (t is 1-based)."""
    if not 1 <= t <= record.flows.shape[0]:
        raise FrameOutOfRange(
            f"flow frame {t} outside [1, {record.flows.shape[0]}]"
        )
    return record.flows[t - 1]


def write_sample(record: SampleRecord, path) -> None:
    """Persist a SampleRecord to a container directory (bit-exact round trip)."""
    v = record.video
    write_container(path, {
        "rgb": v.rgb,
        "depth": v.depth,
        "intrinsics": v.intrinsics.as_array(),
        "queries": record.queries,
        "gt_positions": record.gt.positions,
        "gt_valid": record.gt.valid.astype(np.uint8),
        "flows": record.flows,
    }, {
        "kind": "sample",
        "seed": str(record.seed),
        "frames": str(v.num_frames),
        "height": str(v.height),
        "width": str(v.width),
        "num_queries": str(record.queries.shape[0]),
    })


def read_sample(path) -> SampleRecord:
    tensors, meta = read_container(path)
    for key in ("rgb", "depth", "intrinsics", "queries", "gt_positions",
                "gt_valid", "flows"):
        if key not in tensors:
            raise ShapeMismatch(f"sample container at {path} lacks tensor {key!r}")
    video = RgbdVideo(
        rgb=tensors["rgb"].astype(np.float32),
        depth=tensors["depth"].astype(np.float32),
        intrinsics=CameraIntrinsics.from_array(tensors["intrinsics"]),
    )
    gt = TrajectorySet(tensors["gt_positions"], tensors["gt_valid"].astype(bool), "xyz")
    return SampleRecord(video=video, queries=tensors["queries"], gt=gt,
                        flows=tensors["flows"], seed=int(meta.get("seed", "0")))


def spec_from_dict(d: dict, where: str = "scene") -> SceneSpec:
    """Build a SceneSpec from parsed JSON, with field-level diagnostics."""
    if not isinstance(d, dict):
        raise DegenerateSpec(f"{where}: expected an object")

    def need(key, typ):
        if key not in d:
            raise DegenerateSpec(f"{where}: missing field {key!r}")
        return d[key]

    ki = need("intrinsics", dict)
    try:
        intr = CameraIntrinsics(float(ki["fx"]), float(ki["fy"]),
                                float(ki["cx"]), float(ki["cy"]))
    except (KeyError, TypeError, ValueError) as e:
        raise DegenerateSpec(f"{where}.intrinsics: {e}") from e

    bodies = []
    raw_bodies = need("bodies", list)
    if not isinstance(raw_bodies, list):
        raise DegenerateSpec(f"{where}.bodies: expected a list")
    for i, rb in enumerate(raw_bodies):
        loc = f"{where}.bodies[{i}]"
        if not isinstance(rb, dict) or "kind" not in rb:
            raise DegenerateSpec(f"{loc}: expected an object with a 'kind'")
        try:
            bodies.append(BodySpec(
                kind=rb["kind"],
                size=tuple(rb.get("extents") or rb.get("radii") or rb.get("size") or ()),
                position=tuple(rb.get("position", (0.0, 0.0, 2.0))),
                orientation=tuple(rb.get("orientation", (0.0, 0.0, 0.0))),
                velocity=tuple(rb.get("velocity", (0.0, 0.0, 0.0))),
                angular_axis=tuple(rb.get("angular_axis", (0.0, 0.0, 1.0))),
                angular_rate=float(rb.get("angular_rate", 0.0)),
                occluder=bool(rb.get("occluder", False)),
                texture_scale=float(rb.get("texture_scale", 18.0)),
                poses=np.asarray(rb["poses"], dtype=np.float64).reshape(-1, 4, 4)
                if "poses" in rb else None,
            ))
        except DegenerateSpec:
            raise
        except (TypeError, ValueError) as e:
            raise DegenerateSpec(f"{loc}: {e}") from e

    cam = d.get("camera", {})
    if not isinstance(cam, dict):
        raise DegenerateSpec(f"{where}.camera: expected an object")
    camera = CameraMotion(
        position=tuple(cam.get("position", (0.0, 0.0, 0.0))),
        orientation=tuple(cam.get("orientation", (0.0, 0.0, 0.0))),
        velocity=tuple(cam.get("velocity", (0.0, 0.0, 0.0))),
        angular_axis=tuple(cam.get("angular_axis", (0.0, 0.0, 1.0))),
        angular_rate=float(cam.get("angular_rate", 0.0)),
        poses=np.asarray(cam["poses"], dtype=np.float64).reshape(-1, 4, 4)
        if "poses" in cam else None,
    )

    try:
        return SceneSpec(
            seed=int(need("seed", int)),
            height=int(need("height", int)),
            width=int(need("width", int)),
            frames=int(need("frames", int)),
            intrinsics=intr,
            bodies=bodies,
            camera=camera,
            num_queries=int(d.get("num_queries", 8)),
            outlier_fraction=float(d.get("outlier_fraction", 0.0)),
            supersample=int(d.get("supersample", 4)),
        )
    except (TypeError, ValueError) as e:
        raise DegenerateSpec(f"{where}: {e}") from e
