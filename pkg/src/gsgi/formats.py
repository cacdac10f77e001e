"""On-disk formats. Everything here is deterministic bytes so golden-file
tests stay portable:

  * PPM (P6) images, zero dependencies
  * plain-text tensors: first line is the shape, then row-major values,
    one spatial row per line, 17 significant digits (exact float64
    round trip)
  * density maps: one row of space-separated decimals per grid row
  * weight container "MAA3C-W1": text header manifest (name, dtype, dims,
    byte offset) followed by raw little-endian float64 arrays
"""

from __future__ import annotations

import hashlib
import json
from typing import Optional

import numpy as np

from .errors import WeightFormatError
from .env import DensityMap

WEIGHT_MAGIC = "MAA3C-W1"

_FLOAT_FMT = "%.17g"


def write_ppm(path, image: np.ndarray) -> None:
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM image must be (H, W, 3) uint8")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError(f"{path}: not a P6/255 PPM written by this package")
    w, h = (int(x) for x in parts[1].split())
    data = parts[3][: w * h * 3]
    if len(data) != w * h * 3:
        raise ValueError(f"{path}: truncated PPM payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def render_tensor_text(arr) -> str:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 0:
        raise ValueError("tensor text needs at least one dimension")
    lines = [" ".join(str(d) for d in a.shape)]
    rows = a.reshape(-1, a.shape[-1])
    for row in rows:
        lines.append(" ".join(_FLOAT_FMT % v for v in row))
    return "\n".join(lines) + "\n"


def parse_tensor_text(text: str) -> np.ndarray:
    lines = text.strip("\n").split("\n")
    shape = tuple(int(t) for t in lines[0].split())
    values = [float(t) for line in lines[1:] for t in line.split()]
    expected = int(np.prod(shape))
    if len(values) != expected:
        raise ValueError(f"tensor text holds {len(values)} values, shape needs {expected}")
    return np.array(values, dtype=np.float64).reshape(shape)


def save_tensor_text(path, arr) -> None:
    with open(path, "w") as f:
        f.write(render_tensor_text(arr))


def load_tensor_text(path) -> np.ndarray:
    with open(path) as f:
        return parse_tensor_text(f.read())


def save_density(path, density: DensityMap) -> None:
    with open(path, "w") as f:
        for row in density.p_attack:
            f.write(" ".join(_FLOAT_FMT % v for v in row) + "\n")


def load_density(path) -> DensityMap:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(t) for t in line.split()])
    return DensityMap(np.array(rows, dtype=np.float64))


def arrays_checksum(arrays: dict) -> str:
    """sha256 over (name, shape, raw bytes) in the given key order."""
    h = hashlib.sha256()
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        h.update(name.encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def write_weights(path, config: dict, arrays: dict) -> None:
    """Weight container: text manifest, then concatenated raw arrays."""
    header = [WEIGHT_MAGIC, "config " + json.dumps(config, sort_keys=True)]
    header.append(f"layers {len(arrays)}")
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        dims = " ".join(str(d) for d in a.shape)
        header.append(f"{name} f8 {a.ndim} {dims} {offset}")
        blobs.append(a.tobytes())
        offset += a.nbytes
    header.append("end")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        for blob in blobs:
            f.write(blob)


def read_weights(path) -> tuple:
    """Returns (config dict, {name: float64 array}). Raises WeightFormatError
    naming the offending layer on truncation or manifest damage."""
    with open(path, "rb") as f:
        blob = f.read()
    lines = []
    pos = 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise WeightFormatError(f"{path}: header never terminated with 'end'")
        line = blob[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: missing {WEIGHT_MAGIC} magic")
    if len(lines) < 3 or not lines[1].startswith("config ") or not lines[2].startswith("layers "):
        raise WeightFormatError(f"{path}: malformed header")
    config = json.loads(lines[1][len("config ") :])
    n_layers = int(lines[2].split()[1])
    manifest = lines[3:]
    if len(manifest) != n_layers:
        raise WeightFormatError(
            f"{path}: manifest lists {len(manifest)} layers, header says {n_layers}"
        )
    payload = blob[pos:]
    arrays = {}
    for entry in manifest:
        tokens = entry.split()
        if len(tokens) < 4:
            raise WeightFormatError(f"{path}: bad manifest line {entry!r}")
        name, dtype, ndim = tokens[0], tokens[1], int(tokens[2])
        if dtype != "f8" or len(tokens) != 3 + ndim + 1:
            raise WeightFormatError(f"{path}: bad manifest line {entry!r}")
        dims = tuple(int(t) for t in tokens[3 : 3 + ndim])
        offset = int(tokens[3 + ndim])
        count = int(np.prod(dims)) if dims else 1
        end = offset + count * 8
        if end > len(payload):
            raise WeightFormatError(
                f"{path}: truncated payload for layer {name!r} "
                f"(needs bytes up to {end}, have {len(payload)})"
            )
        arrays[name] = (
            np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            .reshape(dims)
            .copy()
        )
    return config, arrays
