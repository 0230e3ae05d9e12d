"""File formats: DPDPF matrices, symbol corpora, alignments and key-value manifests.

A DPDPF file is the 6 magic bytes ``DPDPF\\0``, then little-endian ``u32``
rows and ``u32`` cols, then ``rows * cols`` little-endian float32 values in
row-major order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"DPDPF\0"
FEATURE_SUFFIX = ".dpdpf"
META_NAME = "meta.txt"


class FormatError(ValueError):
    pass


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_matrix(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise FormatError(f"expected a 2-D matrix, got shape {arr.shape}")
    rows, cols = arr.shape
    body = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<II", rows, cols) + body


def decode_matrix(data: bytes) -> np.ndarray:
    if not data.startswith(MAGIC):
        raise FormatError("bad magic bytes")
    head = len(MAGIC) + 8
    if len(data) < head:
        raise FormatError("truncated header")
    rows, cols = struct.unpack("<II", data[len(MAGIC):head])
    expected = head + 4 * rows * cols
    if len(data) != expected:
        raise FormatError(f"payload size {len(data)} != {expected} for {rows}x{cols}")
    return np.frombuffer(data, dtype="<f4", offset=head).reshape(rows, cols).astype(np.float32)


def write_matrix(path, arr) -> None:
    _atomic_write(Path(path), encode_matrix(arr))


def read_matrix(path) -> np.ndarray:
    """Read a DPDPF file, or a CSV/whitespace text file with one row per line."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(MAGIC):
        return decode_matrix(data)
    rows = []
    for line in data.decode().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(v) for v in line.replace(",", " ").split()])
    if not rows:
        raise FormatError(f"{path}: no rows")
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=np.float32)


def read_kv(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        out[key] = value.strip()
    return out


def write_kv(path, items: dict) -> None:
    text = "".join(f"{k} {v}\n" for k, v in items.items())
    _atomic_write(Path(path), text.encode())


def write_feature_dir(directory, utterances: dict[str, np.ndarray], frame_period_s: float) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for utt_id, frames in utterances.items():
        write_matrix(directory / f"{utt_id}{FEATURE_SUFFIX}", frames)
    write_kv(directory / META_NAME, {"frame_period_s": repr(float(frame_period_s))})


def read_feature_dir(directory, frame_period_s: float | None = None):
    """Return ``({utt_id: frames}, frame_period_s)`` sorted by utterance id.

    The frame period comes from the argument, else ``meta.txt``, else 0.01 s.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"feature directory {directory} does not exist")
    if frame_period_s is None:
        meta = directory / META_NAME
        frame_period_s = float(read_kv(meta)["frame_period_s"]) if meta.exists() else 0.01
    feats = {}
    for path in sorted(directory.iterdir()):
        if path.suffix in (FEATURE_SUFFIX, ".csv", ".txt") and path.name != META_NAME:
            feats[path.stem] = read_matrix(path)
    if not feats:
        raise FormatError(f"no feature files in {directory}")
    return feats, frame_period_s


def write_symbol_corpus(path, corpus: dict[str, list[int]]) -> None:
    lines = [f"{utt}\t{' '.join(str(s) for s in syms)}\n" for utt, syms in corpus.items()]
    _atomic_write(Path(path), "".join(lines).encode())


def read_symbol_corpus(path) -> dict[str, list[int]]:
    """One utterance per line; an optional ``utt_id<TAB>`` prefix, else ids are line numbers."""
    corpus = {}
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        if "\t" in line:
            utt, _, body = line.partition("\t")
        else:
            utt, body = f"utt{i:06d}", line
        corpus[utt.strip()] = [int(v) for v in body.split()]
    return corpus


def write_alignments(path, alignments: dict[str, list[tuple[float, float, str]]]) -> None:
    lines = []
    for utt, tokens in alignments.items():
        for start, end, label in tokens:
            lines.append(f"{utt} {start:.6f} {end:.6f} {label}\n")
    _atomic_write(Path(path), "".join(lines).encode())


def read_alignments(path) -> dict[str, list[tuple[float, float, str]]]:
    out: dict[str, list[tuple[float, float, str]]] = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 4:
            raise FormatError(f"bad alignment line: {line!r}")
        utt, start, end, label = parts[0], float(parts[1]), float(parts[2]), " ".join(parts[3:])
        out.setdefault(utt, []).append((start, end, label))
    for tokens in out.values():
        tokens.sort()
    return out


def write_units(path, tokenizations: Iterable) -> None:
    """``utt_id<TAB>codes<TAB>end frames``, one utterance per line."""
    lines = []
    for tok in tokenizations:
        codes = " ".join(str(c) for c in tok.codes)
        ends = " ".join(str(b) for b in tok.boundaries)
        lines.append(f"{tok.utterance_id}\t{codes}\t{ends}\n")
    _atomic_write(Path(path), "".join(lines).encode())


def read_units(path):
    from .units import UnitTokenization

    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        utt, codes, ends = line.split("\t")
        out.append(UnitTokenization([int(c) for c in codes.split()],
                                    [int(b) for b in ends.split()], utt))
    return out
