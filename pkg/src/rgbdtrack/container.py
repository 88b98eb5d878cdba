"""Manifest + binary tensor container.

One directory per artifact holding two files:

  manifest     UTF-8 text: format line, endianness tag, meta lines, and one
               line per tensor (name, dtype, shape, byte offset, byte count)
  tensors.bin  little-endian, row-major payloads concatenated in manifest
               order

The same container carries synthetic samples, model weights, and trajectory
sets, so the round trip is required to be bit-exact.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import CorruptManifest, IoError

FORMAT_LINE = "format rgbdtrack-container 1"

_DTYPES = {
    "float32": np.dtype("<f4"),
    "float64": np.dtype("<f8"),
    "uint8": np.dtype("u1"),
    "int64": np.dtype("<i8"),
    "bool": np.dtype("?"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


def _dtype_name(a: np.ndarray) -> str:
    key = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
    for name, dt in _DTYPES.items():
        if key == dt:
            return name
    raise ValueError(f"unsupported dtype {a.dtype} for container payloads")


def write_container(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named tensors plus string metadata to a container directory."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create container directory {path}: {e}") from e

    lines = [FORMAT_LINE, "endian little"]
    for key, value in (meta or {}).items():
        _check_token(str(key))
        value = str(value)
        if "\n" in value:
            raise ValueError(f"meta value for {key!r} must be single-line")
        lines.append(f"meta {key} {value}")

    offset = 0
    payloads = []
    for name, arr in tensors.items():
        _check_token(name)
        a = np.ascontiguousarray(arr)
        dname = _dtype_name(a)
        a = a.astype(_DTYPES[dname], copy=False)
        shape = ",".join(str(d) for d in a.shape) if a.ndim else "1"
        nbytes = a.nbytes
        lines.append(f"tensor {name} {dname} {shape} {offset} {nbytes}")
        payloads.append(a.tobytes())
        offset += nbytes

    try:
        (path / "manifest").write_text("\n".join(lines) + "\n", encoding="utf-8")
        with open(path / "tensors.bin", "wb") as fh:
            for blob in payloads:
                fh.write(blob)
    except OSError as e:
        raise IoError(f"cannot write container at {path}: {e}") from e


def read_container(path) -> tuple[dict, dict]:
    """Read a container directory back into ({name: array}, {meta})."""
    path = Path(path)
    man_path = path / "manifest"
    bin_path = path / "tensors.bin"
    if not man_path.is_file() or not bin_path.is_file():
        raise IoError(f"no container at {path} (need manifest and tensors.bin)")
    try:
        text = man_path.read_text(encoding="utf-8")
        payload = bin_path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read container at {path}: {e}") from e

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FORMAT_LINE:
        raise CorruptManifest(f"{man_path}: missing or unknown format line")
    if len(lines) < 2 or lines[1] != "endian little":
        raise CorruptManifest(f"{man_path}: missing endianness tag")

    meta: dict = {}
    tensors: dict = {}
    expected_offset = 0
    for ln in lines[2:]:
        parts = ln.split(" ")
        if parts[0] == "meta":
            if len(parts) < 3:
                raise CorruptManifest(f"{man_path}: malformed meta line {ln!r}")
            meta[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "tensor":
            if len(parts) != 6:
                raise CorruptManifest(f"{man_path}: malformed tensor line {ln!r}")
            name, dname, shape_s, off_s, nbytes_s = parts[1:]
            if dname not in _DTYPES:
                raise CorruptManifest(f"{man_path}: unknown dtype {dname!r}")
            try:
                shape = tuple(int(d) for d in shape_s.split(","))
                off, nbytes = int(off_s), int(nbytes_s)
            except ValueError as e:
                raise CorruptManifest(f"{man_path}: bad numbers in {ln!r}") from e
            dt = _DTYPES[dname]
            count = int(np.prod(shape)) if shape else 1
            if any(d < 0 for d in shape) or count * dt.itemsize != nbytes:
                raise CorruptManifest(
                    f"{man_path}: shape {shape} disagrees with byte count for {name!r}"
                )
            if off != expected_offset:
                raise CorruptManifest(f"{man_path}: non-contiguous offset for {name!r}")
            if off + nbytes > len(payload):
                raise CorruptManifest(
                    f"{man_path}: payload truncated, {name!r} needs bytes "
                    f"[{off}, {off + nbytes}) of {len(payload)}"
                )
            if name in tensors:
                raise CorruptManifest(f"{man_path}: duplicate tensor {name!r}")
            arr = np.frombuffer(payload, dtype=dt, count=count, offset=off)
            tensors[name] = arr.reshape(shape).copy()
            expected_offset = off + nbytes
        else:
            raise CorruptManifest(f"{man_path}: unknown directive {parts[0]!r}")

    if expected_offset != len(payload):
        raise CorruptManifest(
            f"{man_path}: payload has {len(payload)} bytes, manifest covers "
            f"{expected_offset}"
        )
    return tensors, meta


def _check_token(name: str) -> None:
    if not name or any(c.isspace() for c in name):
        raise ValueError(f"container names must be non-empty and space-free: {name!r}")


def container_exists(path) -> bool:
    path = Path(path)
    return (path / "manifest").is_file() and (path / "tensors.bin").is_file()


def files_of(path) -> list[str]:
    """Relative file names making up a container (for byte comparisons)."""
    return [os.path.join(str(path), "manifest"), os.path.join(str(path), "tensors.bin")]
