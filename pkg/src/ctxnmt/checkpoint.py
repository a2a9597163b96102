"""Versioned flat checkpoint container and key=value config files.

Checkpoint layout (version 1): the ASCII magic line ``NMTCKPT1``, a line
with the entry count, then per entry one directory line
``name<TAB>dtype<TAB>dim0,dim1,...`` followed immediately by the raw
little-endian values. Save/load round-trips are bit-exact.
"""
from __future__ import annotations

import os
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"NMTCKPT1\n"


def save_checkpoint(path: str | os.PathLike, params: Mapping[str, "Tensor | np.ndarray"]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(params)}\n".encode("ascii"))
        for name, value in params.items():
            arr = np.ascontiguousarray(
                value.data if isinstance(value, Tensor) else np.asarray(value), dtype="<f8"
            )
            if "\t" in name or "\n" in name:
                raise ValueError(f"parameter name contains forbidden whitespace: {name!r}")
            dims = ",".join(str(d) for d in arr.shape)
            fh.write(f"{name}\t<f8\t{dims}\n".encode("utf-8"))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise ValueError(f"{path}: not a version-1 checkpoint (magic {magic!r})")
        count = int(fh.readline().decode("ascii").strip())
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            header = fh.readline().decode("utf-8").rstrip("\n")
            name, dtype, dims = header.split("\t")
            shape = tuple(int(d) for d in dims.split(",")) if dims else ()
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(n * np.dtype(dtype).itemsize)
            if len(raw) != n * np.dtype(dtype).itemsize:
                raise ValueError(f"{path}: truncated values for entry {name!r}")
            out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(np.float64)
        return out


def save_kv(path: str | os.PathLike, values: Mapping[str, object]) -> None:
    """Write a key=value text file (one pair per line, '#' comments allowed)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")


def load_kv(path: str | os.PathLike) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
