"""Run configuration: every knob of the tracker in one dataclass."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    """Tracker hyperparameters.

    window_size is the sliding-window length S (stride S/2), stride the
    feature downsampling factor, corr_radius/corr_levels the correlation
    lookup geometry.  Channel widths: feat_channels for the encoder and
    template, motion_channels for the displacement encoding,
    inter_channels for the update head's intermediate feature,
    model_channels for the transformer width.
    """

    window_size: int = 16          # S
    stride: int = 8                # s
    corr_radius: int = 3           # r
    corr_levels: int = 4           # l
    feat_channels: int = 128       # c_f
    motion_channels: int = 128     # c_o
    inter_channels: int = 128      # c_i
    model_channels: int = 384      # c_t
    num_block_pairs: int = 6       # M (cross-time + cross-space per pair)
    heads: int = 8
    mlp_ratio: int = 4
    num_iterations: int = 4        # refinement iterations per window
    gamma: float = 0.8             # per-iteration loss discount
    alpha: float = 250.0           # inverse-depth loss weight
    eps_depth: float = 1e-3        # depth floor, meters
    mode: str = "all"              # 'one' | 'all'
    support: tuple = ()            # subset of {'local', 'global'}
    seed: int = 0

    def __post_init__(self):
        if self.window_size < 2 or self.window_size % 2 != 0:
            raise ConfigError(f"window_size must be even and >= 2, got {self.window_size}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.corr_radius < 0:
            raise ConfigError(f"corr_radius must be >= 0, got {self.corr_radius}")
        if self.corr_levels < 1:
            raise ConfigError(f"corr_levels must be >= 1, got {self.corr_levels}")
        if self.model_channels % self.heads != 0:
            raise ConfigError("model_channels must be divisible by heads")
        if self.model_channels % 4 != 0:
            raise ConfigError("model_channels must be divisible by 4 for uv encodings")
        if self.motion_channels % 4 != 0:
            raise ConfigError("motion_channels must be divisible by 4")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.num_iterations < 1:
            raise ConfigError(f"num_iterations must be >= 1, got {self.num_iterations}")
        if self.mode not in ("one", "all"):
            raise ConfigError(f"mode must be 'one' or 'all', got {self.mode!r}")
        bad = set(self.support) - {"local", "global"}
        if bad:
            raise ConfigError(f"unknown support kinds {sorted(bad)}")

    @property
    def corr_feature_width(self) -> int:
        """c_a = l * (2r + 1)^2, the correlation lookup width."""
        return self.corr_levels * (2 * self.corr_radius + 1) ** 2

    @property
    def input_width(self) -> int:
        """Concat width fed to the updater: correlation + depth residual +
        uv motion (raw + encoded) + depth motion."""
        return self.corr_feature_width + 1 + (2 + self.motion_channels) + 1

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = dict(d)
        if "support" in kw:
            kw["support"] = tuple(kw["support"])
        return cls(**kw)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def config_hash(self) -> str:
        """Stable digest of every field, used to tag weight files."""
        items = sorted(self.to_dict().items())
        blob = ";".join(f"{k}={v!r}" for k, v in items).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
