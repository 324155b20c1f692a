"""File formats: binary complex matrices, CSV tables, JSON documents.

Matrix file layout (all little-endian)::

    8 bytes   magic b"LOCBMAT\\0"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON header (kind, n, seed, config, final_s, ...)
    N*N*16    row-major complex matrix as (re, im) float64 pairs
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"LOCBMAT\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


class FormatError(ValueError):
    pass


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_matrix(path, matrix: np.ndarray, header: dict) -> None:
    m = np.asarray(matrix, dtype="<c16")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("only square matrices are stored")
    head = {"format_version": FORMAT_VERSION, "n": m.shape[0], **header}
    blob = json.dumps(head, sort_keys=True).encode("utf-8")
    data = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)) + blob + np.ascontiguousarray(m).tobytes()
    atomic_write_bytes(Path(path), data)


def load_matrix(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise FormatError(f"{path}: truncated file")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header") from exc
    n = int(header["n"])
    body = raw[_PREFIX.size + hlen:]
    if len(body) != n * n * 16:
        raise FormatError(f"{path}: expected {n * n * 16} payload bytes, got {len(body)}")
    m = np.frombuffer(body, dtype="<c16").reshape(n, n).astype(np.complex128)
    return m, header


def write_csv(path, columns: dict[str, np.ndarray | list], fmt: str = "{:.12g}") -> None:
    """Comma-separated table whose header row names each quantity and unit."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(
            str(int(v)) if np.issubdtype(type(v), np.integer) else fmt.format(float(v))
            for v in row))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    names = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(names))
    return {name: data[:, i] for i, name in enumerate(names)}


def write_json(path, doc) -> None:
    atomic_write_text(Path(path), json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
