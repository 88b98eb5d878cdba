"""RGB-D long-range 3D point tracking, synthetic data, and evaluation."""

from .config import RunConfig
from .data import RgbdVideo, TrajectorySet
from .geometry import CameraIntrinsics, RigidTransform
from .metrics import EvalReport, evaluate
from .synthdata import SampleRecord, SceneSpec, generate
from .tracker import baseline_sf_chain, baseline_tap, run_inference, track
from .weights import WeightStore, init_weights

__all__ = [
    "CameraIntrinsics",
    "EvalReport",
    "RgbdVideo",
    "RigidTransform",
    "RunConfig",
    "SampleRecord",
    "SceneSpec",
    "TrajectorySet",
    "WeightStore",
    "baseline_sf_chain",
    "baseline_tap",
    "evaluate",
    "generate",
    "init_weights",
    "run_inference",
    "track",
]

__version__ = "0.1.0"
