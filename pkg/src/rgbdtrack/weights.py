"""Named weight store for the encoder and updater networks.

Weights are float32 tensors addressed by dotted names.  Random
initialization draws every tensor from its own PRNG stream keyed by
(seed, tensor name), so a seed fully determines the model and adding or
reordering tensors never perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .config import RunConfig
from .container import read_container, write_container
from .errors import MissingWeight, ShapeMismatch

# (in_channels, out_channels, stride) per residual stage; two blocks each.
ENCODER_STAGES = ((64, 64, 1), (64, 96, 2), (96, 128, 2), (128, 128, 1))
ENCODER_STEM_CHANNELS = 64


class WeightStore:
    """Immutable-by-convention mapping from tensor name to float32 array."""

    def __init__(self, tensors: dict, meta: dict | None = None):
        self._tensors = {k: np.asarray(v, dtype=np.float32) for k, v in tensors.items()}
        self.meta = dict(meta or {})

    def get(self, name: str) -> np.ndarray:
        try:
            return self._tensors[name]
        except KeyError:
            raise MissingWeight(f"weight tensor {name!r} is not in the store") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list:
        return list(self._tensors)

    def set(self, name: str, value: np.ndarray) -> None:
        self._tensors[name] = np.asarray(value, dtype=np.float32)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self._tensors.values()))

    def save(self, path) -> None:
        write_container(path, self._tensors, self.meta)

    @classmethod
    def load(cls, path, cfg: RunConfig | None = None) -> "WeightStore":
        tensors, meta = read_container(path)
        store = cls(tensors, meta)
        if cfg is not None:
            validate_weights(store, cfg)
        return store


def encoder_weight_shapes(cfg: RunConfig) -> dict:
    shapes = {
        "encoder.stem.conv.w": (ENCODER_STEM_CHANNELS, 3, 7, 7),
        "encoder.stem.norm.g": (ENCODER_STEM_CHANNELS,),
        "encoder.stem.norm.b": (ENCODER_STEM_CHANNELS,),
    }
    for i, (cin, cout, stride) in enumerate(ENCODER_STAGES):
        for j in range(2):
            bcin = cin if j == 0 else cout
            bstride = stride if j == 0 else 1
            p = f"encoder.stage{i}.block{j}"
            shapes[f"{p}.conv1.w"] = (cout, bcin, 3, 3)
            shapes[f"{p}.norm1.g"] = (cout,)
            shapes[f"{p}.norm1.b"] = (cout,)
            shapes[f"{p}.conv2.w"] = (cout, cout, 3, 3)
            shapes[f"{p}.norm2.g"] = (cout,)
            shapes[f"{p}.norm2.b"] = (cout,)
            if bstride != 1 or bcin != cout:
                shapes[f"{p}.down.w"] = (cout, bcin, 1, 1)
                shapes[f"{p}.down_norm.g"] = (cout,)
                shapes[f"{p}.down_norm.b"] = (cout,)
    last = ENCODER_STAGES[-1][1]
    shapes["encoder.out.w"] = (cfg.feat_channels, last, 1, 1)
    shapes["encoder.out.b"] = (cfg.feat_channels,)
    return shapes


def updater_weight_shapes(cfg: RunConfig) -> dict:
    ct, ci, cf = cfg.model_channels, cfg.inter_channels, cfg.feat_channels
    hidden = cfg.mlp_ratio * ct
    shapes = {
        "updater.in_proj.w": (ct, cfg.input_width),
        "updater.in_proj.b": (ct,),
    }
    for i in range(2 * cfg.num_block_pairs):
        p = f"updater.blk{i:02d}"
        shapes[f"{p}.ln1.g"] = (ct,)
        shapes[f"{p}.ln1.b"] = (ct,)
        shapes[f"{p}.qkv.w"] = (3 * ct, ct)
        shapes[f"{p}.qkv.b"] = (3 * ct,)
        shapes[f"{p}.proj.w"] = (ct, ct)
        shapes[f"{p}.proj.b"] = (ct,)
        shapes[f"{p}.ln2.g"] = (ct,)
        shapes[f"{p}.ln2.b"] = (ct,)
        shapes[f"{p}.mlp1.w"] = (hidden, ct)
        shapes[f"{p}.mlp1.b"] = (hidden,)
        shapes[f"{p}.mlp2.w"] = (ct, hidden)
        shapes[f"{p}.mlp2.b"] = (ct,)
    shapes["updater.head.out.w"] = (3 + ci, ct)
    shapes["updater.head.out.b"] = (3 + ci,)
    shapes["updater.head.dq_ln.g"] = (ci,)
    shapes["updater.head.dq_ln.b"] = (ci,)
    shapes["updater.head.dq.w"] = (cf, ci)
    shapes["updater.head.dq.b"] = (cf,)
    return shapes


def model_weight_shapes(cfg: RunConfig) -> dict:
    shapes = encoder_weight_shapes(cfg)
    shapes.update(updater_weight_shapes(cfg))
    return shapes


def _stream(seed: int, name: str) -> np.random.Generator:
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag])))


def _fan_in(shape: tuple) -> int:
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[-1]


def init_weights(cfg: RunConfig, seed: int) -> WeightStore:
    """Seeded random initialization: weights uniform in +/-sqrt(1/fan_in),
    norm gains one, every bias zero."""
    tensors = {}
    for name, shape in model_weight_shapes(cfg).items():
        if name.endswith(".w"):
            bound = float(np.sqrt(1.0 / _fan_in(shape)))
            rng = _stream(seed, name)
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        elif name.endswith(".g"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    meta = {"seed": str(seed), "config_hash": cfg.config_hash()}
    return WeightStore(tensors, meta)


def validate_weights(store: WeightStore, cfg: RunConfig) -> None:
    """Check that the store carries exactly the tensors the config needs."""
    shapes = model_weight_shapes(cfg)
    for name, shape in shapes.items():
        if name not in store:
            raise MissingWeight(f"weight tensor {name!r} missing from store")
        got = store.get(name).shape
        if tuple(got) != tuple(shape):
            raise ShapeMismatch(
                f"weight tensor {name!r} has shape {tuple(got)}, config needs {tuple(shape)}"
            )
    extra = set(store.names()) - set(shapes)
    if extra:
        raise ShapeMismatch(f"unexpected weight tensors {sorted(extra)[:4]}")


def zero_update_heads(store: WeightStore) -> WeightStore:
    """Zero the residual output heads so every update is a no-op.

    Useful as a fixed-point reference: with zeroed heads the tracker must
    return its initialization unchanged.
    """
    for name in ("updater.head.out.w", "updater.head.out.b",
                 "updater.head.dq.w", "updater.head.dq.b"):
        store.set(name, np.zeros_like(store.get(name)))
    return store
