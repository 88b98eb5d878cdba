"""End-to-end tracking: windowing, initialization, inference, baselines.

A video of T frames is split into S-frame windows sliding by S/2 (frames
are 1-based here, matching the window plan's start/end fields).  Each
window refines trajectories initialized from its predecessor; chained
outputs take the later window on overlaps.  The template feature is
sampled once from frame 1 of the video and shared by every window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fim as fim_mod
from .config import RunConfig
from .data import RgbdVideo, TrajectorySet
from .errors import MissingPrevious, NonPositiveDepth, VideoTooShort
from .features import downsample_depth, encode_frames
from .geometry import (CameraIntrinsics, bilinear_sample, downscale_uvd,
                       upscale_uvd, uvd_to_xyz, xyz_to_uvd)
from .weights import WeightStore


@dataclass(frozen=True)
class WindowPlan:
    """Inclusive 1-based (start, end) frame ranges of each window."""

    window_size: int
    step: int
    windows: tuple

    def slices(self) -> list:
        """0-based python slices matching the windows."""
        return [slice(a - 1, b) for a, b in self.windows]


def plan_windows(num_frames: int, window_size: int) -> WindowPlan:
    """Partition frames 1..T into S-frame windows sliding by S/2.

    The final window is anchored at T-S+1, so when T-S is not a multiple
    of S/2 it overlaps its predecessor by more than S/2; chaining resolves
    the duplicate frames in favor of the later window either way.
    """
    if window_size < 2 or window_size % 2 != 0:
        raise ValueError(f"window size must be even and >= 2, got {window_size}")
    if num_frames < window_size:
        raise VideoTooShort(
            f"video has {num_frames} frames, needs at least {window_size}"
        )
    step = window_size // 2
    starts = list(range(1, num_frames - window_size + 2, step))
    if starts[-1] != num_frames - window_size + 1:
        starts.append(num_frames - window_size + 1)
    windows = tuple((s, s + window_size - 1) for s in starts)
    return WindowPlan(window_size=window_size, step=step, windows=windows)


def init_window(plan: WindowPlan, index: int, prev_result: np.ndarray | None,
                queries: np.ndarray) -> np.ndarray:
    """Initialize one window's trajectories (N, S, 3) in camera xyz.

    The first window replicates the query positions.  Later windows copy
    the previous window's estimates for the frames the two windows share
    and replicate the previous window's final frame beyond it.
    """
    queries = np.asarray(queries, dtype=np.float64)
    n = queries.shape[0]
    s = plan.window_size
    start, _ = plan.windows[index]
    if index == 0:
        return np.repeat(queries.reshape(n, 1, 3), s, axis=1)
    if prev_result is None:
        raise MissingPrevious(f"window {index} needs the previous window's result")
    prev_start, prev_end = plan.windows[index - 1]
    out = np.empty((n, s, 3), dtype=np.float64)
    for j in range(s):
        frame = start + j
        if frame <= prev_end:
            out[:, j] = prev_result[:, frame - prev_start]
        else:
            out[:, j] = prev_result[:, prev_end - prev_start]
    return out


def chain_windows(plan: WindowPlan, window_results: list) -> np.ndarray:
    """Merge per-window (N, S, 3) results into (N, T, 3).

    Overlapping frames take the result of the later window.  Chaining an
    already-chained result re-split along the plan is the identity.
    """
    n = window_results[0].shape[0]
    num_frames = plan.windows[-1][1]
    out = np.empty((n, num_frames, 3), dtype=np.float64)
    for (start, end), seg in zip(plan.windows, window_results):
        out[:, start - 1: end] = seg
    return out


def sample_template(feats0: np.ndarray, q_uv_coarse: np.ndarray,
                    window_size: int) -> np.ndarray:
    """Template feature: frame-1 features sampled at the query points,
    replicated along the window's frames.  (N, S, c_f) float32."""
    c = feats0.shape[0]
    n = q_uv_coarse.shape[0]
    q0 = np.empty((n, c), dtype=np.float32)
    for ch in range(c):
        q0[:, ch] = bilinear_sample(feats0[ch], q_uv_coarse[:, 0], q_uv_coarse[:, 1])
    return np.repeat(q0[:, None, :], window_size, axis=1)


def track(video: RgbdVideo, queries: np.ndarray, weights: WeightStore,
          cfg: RunConfig, trace: dict | None = None,
          iterate_fn=None) -> TrajectorySet:
    """Track query points (N, 1, 3) through the whole video.

    Returns camera-xyz trajectories (N, T, 3); validity is all-true since
    no occlusion state is predicted.  `trace`, when given, records the
    per-window template feature under 'template' and window count under
    'windows'.  `iterate_fn` substitutes the refinement iteration (used by
    tests to plant distinguishable window outputs).
    """
    k = video.intrinsics
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 1, 3)
    if np.any(queries[:, 0, 2] <= 0):
        raise NonPositiveDepth("query points must have z > 0")
    plan = plan_windows(video.num_frames, cfg.window_size)
    iterate = iterate_fn if iterate_fn is not None else fim_mod.fim_iterate

    feats = encode_frames(video.rgb, weights, cfg)          # (T, c_f, h, w)
    depths = downsample_depth(video.depth, cfg.stride)      # (T, 1, h, w)

    # template: frame-1 features at the query uv, shared by all windows
    q_uvd = xyz_to_uvd(queries[:, 0, :], k)
    q_uv_coarse = downscale_uvd(q_uvd, cfg.stride)[:, :2]
    q0 = sample_template(feats[0], q_uv_coarse, cfg.window_size)

    results = []
    prev = None
    for w, sl in enumerate(plan.slices()):
        init_xyz = init_window(plan, w, prev, queries)
        p0 = downscale_uvd(xyz_to_uvd(init_xyz, k), cfg.stride).astype(np.float32)
        state = fim_mod.WindowState(q=q0.copy(), p_uvd=p0, iteration=0)
        if trace is not None:
            trace.setdefault("template", []).append(state.q.copy())
        for _ in range(cfg.num_iterations):
            state = iterate(state, feats[sl], depths[sl], weights, cfg, trace)
        uvd = upscale_uvd(state.p_uvd.astype(np.float64), cfg.stride)
        prev = uvd_to_xyz(uvd, k)
        results.append(prev)
    if trace is not None:
        trace["windows"] = len(results)

    whole = chain_windows(plan, results)
    return TrajectorySet(positions=whole, frame="xyz")


def sample_support_points(queries: np.ndarray, k: CameraIntrinsics,
                          depth0: np.ndarray, image_size: tuple,
                          mode: str, eps_depth: float = 1e-3,
                          grid: int = 6, local_window: float = 50.0) -> np.ndarray:
    """Auxiliary query points giving the point-axis attention more context.

    mode 'global' lays a grid x grid lattice over the whole image (half-cell
    inset); 'local' lays one lattice over each query's local_window-pixel
    square neighborhood, clamped to the image; 'both' concatenates global
    then local.  Depths come from the frame-1 depth map (floored at
    eps_depth so degenerate samples stay usable).  Returns (M, 1, 3) xyz;
    callers discard the support rows of the tracked output.
    """
    if mode not in ("local", "global", "both"):
        raise ValueError(f"support mode must be local/global/both, got {mode!r}")
    h, w = image_size
    pts = []

    def backproject(uu, vv):
        uu = np.clip(uu, 0.0, w - 1.0)
        vv = np.clip(vv, 0.0, h - 1.0)
        d = bilinear_sample(depth0, uu, vv)
        d = np.maximum(d, eps_depth)
        uvd = np.stack([uu, vv, d], axis=-1)
        return uvd_to_xyz(uvd, k).reshape(-1, 1, 3)

    if mode in ("global", "both"):
        gu = (np.arange(grid) + 0.5) * w / grid
        gv = (np.arange(grid) + 0.5) * h / grid
        uu, vv = np.meshgrid(gu, gv)
        pts.append(backproject(uu.ravel(), vv.ravel()))

    if mode in ("local", "both"):
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 1, 3)
        q_uv = xyz_to_uvd(queries[:, 0, :], k)[:, :2]
        off = -local_window / 2.0 + (np.arange(grid) + 0.5) * local_window / grid
        ou, ov = np.meshgrid(off, off)
        for i in range(q_uv.shape[0]):
            pts.append(backproject(q_uv[i, 0] + ou.ravel(), q_uv[i, 1] + ov.ravel()))

    return np.concatenate(pts, axis=0)


def run_inference(video: RgbdVideo, queries: np.ndarray, weights: WeightStore,
                  cfg: RunConfig, trace: dict | None = None) -> TrajectorySet:
    """Track honoring the config's inference mode and support points.

    'all' tracks every query (plus supports) jointly; 'one' tracks each
    query in a separate pass (with its own supports).  Support rows are
    dropped from the returned set.
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 1, 3)
    n = queries.shape[0]
    support_mode = None
    if cfg.support:
        support_mode = ("both" if {"local", "global"} <= set(cfg.support)
                        else ("local" if "local" in cfg.support else "global"))

    image_size = (video.height, video.width)

    def augmented(qs):
        if support_mode is None:
            return qs
        extra = sample_support_points(qs, video.intrinsics, video.depth[0, 0],
                                      image_size, support_mode, cfg.eps_depth)
        return np.concatenate([qs, extra], axis=0)

    if cfg.mode == "all":
        full = augmented(queries)
        out = track(video, full, weights, cfg, trace)
        return TrajectorySet(out.positions[:n], out.valid[:n], out.frame)

    rows = []
    for i in range(n):
        full = augmented(queries[i: i + 1])
        out = track(video, full, weights, cfg, trace)
        rows.append(out.positions[:1])
    return TrajectorySet(np.concatenate(rows, axis=0), frame="xyz")


def baseline_tap(video: RgbdVideo, queries: np.ndarray, weights: WeightStore,
                 cfg: RunConfig) -> TrajectorySet:
    """Image-plane tracking lifted to 3D by indexing the depth maps.

    Runs the full tracker, keeps only its uv projections, and replaces
    every depth with the per-frame bilinearly indexed full-resolution
    depth (floored at eps_depth), so depth noise passes straight through.
    """
    k = video.intrinsics
    out = track(video, queries, weights, cfg)
    uvd = xyz_to_uvd(out.positions, k)                 # (N, T, 3)
    n, num_frames, _ = uvd.shape
    for t in range(num_frames):
        d = bilinear_sample(video.depth[t, 0].astype(np.float64),
                            uvd[:, t, 0], uvd[:, t, 1])
        uvd[:, t, 2] = np.maximum(d, cfg.eps_depth)
    return TrajectorySet(uvd_to_xyz(uvd, k), out.valid.copy(), "xyz")


def baseline_sf_chain(video: RgbdVideo, queries: np.ndarray, flow_fn,
                      eps_depth: float = 1e-3) -> TrajectorySet:
    """Chain per-frame-pair 3D flow into long trajectories.

    flow_fn(t) must return the dense (3, H, W) camera-frame flow from
    frame t to t+1 (t is 1-based), sampled on frame t's pixel grid.  Each
    step displaces the current 3D estimate by the flow sampled at its
    image position, reprojects, and re-indexes the next frame's depth map,
    so occlusions poison all subsequent frames (no recovery mechanism).
    """
    k = video.intrinsics
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 1, 3)
    n = queries.shape[0]
    num_frames = video.num_frames
    out = np.empty((n, num_frames, 3), dtype=np.float64)
    out[:, 0] = queries[:, 0, :]
    for t in range(num_frames - 1):
        cur = out[:, t]
        uv = xyz_to_uvd(cur, k)[:, :2]
        flow = np.asarray(flow_fn(t + 1), dtype=np.float64)
        disp = np.stack(
            [bilinear_sample(flow[c], uv[:, 0], uv[:, 1]) for c in range(3)],
            axis=1,
        )
        moved = cur + disp
        moved[:, 2] = np.maximum(moved[:, 2], eps_depth)
        uvd_next = xyz_to_uvd(moved, k)
        d = bilinear_sample(video.depth[t + 1, 0].astype(np.float64),
                            uvd_next[:, 0], uvd_next[:, 1])
        uvd_next[:, 2] = np.maximum(d, eps_depth)
        out[:, t + 1] = uvd_to_xyz(uvd_next, k)
    return TrajectorySet(out, frame="xyz")
