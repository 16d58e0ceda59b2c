"""Activation directory and transcript JSONL, as read by the judgecal CLI.

Layout of a dataset directory:
    manifest.json     dataset_name, model_name, hidden_dim, num_examples, layers, format_version
    examples.jsonl    one object per example, row order matches the layer files
    layer_<k>.actv    "ACTV" | u8 version | u32 dim | u32 rows | float32 row-major, little-endian
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ACTV_MAGIC = b"ACTV"
ACTV_VERSION = 1
_HEADER = struct.Struct("<4sBII")
FORMAT_VERSION = 1


def encode_actv(matrix: np.ndarray) -> bytes:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError("activation matrix must be 2-D (rows, dim)")
    m = m.astype("<f4", copy=False)
    if not np.all(np.isfinite(m)):
        raise ValueError("NaN or Inf detected")
    rows, dim = m.shape
    return _HEADER.pack(ACTV_MAGIC, ACTV_VERSION, dim, rows) + np.ascontiguousarray(m).tobytes()


def decode_actv(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("truncated file")
    magic, version, dim, rows = _HEADER.unpack_from(data)
    if magic != ACTV_MAGIC:
        raise ValueError("bad magic")
    if version != ACTV_VERSION:
        raise ValueError("unsupported version")
    expected = _HEADER.size + 4 * rows * dim
    if len(data) < expected:
        raise ValueError("truncated file")
    if len(data) > expected:
        raise ValueError("trailing bytes")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, dim)


def _write_atomic(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _jsonl(rows: Iterable[Mapping]) -> bytes:
    return "".join(json.dumps(r, separators=(",", ":"), sort_keys=True) + "\n" for r in rows).encode()


def write_dataset(
    directory: os.PathLike | str,
    *,
    dataset_name: str,
    model_name: str,
    examples: Sequence[Mapping],
    layers: Mapping[int, np.ndarray],
) -> Path:
    """Writes a dataset directory. `examples` need at least an "id"."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    if not layers:
        raise ValueError("no layers")
    ids = [e["id"] for e in examples]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate id")
    dims = {np.asarray(m).shape[1] for m in layers.values()}
    if len(dims) != 1:
        raise ValueError("hidden_dim mismatch")
    for k, m in layers.items():
        if np.asarray(m).shape[0] != len(examples):
            raise ValueError(f"row-count mismatch in layer {k}")
    manifest = {
        "dataset_name": dataset_name,
        "model_name": model_name,
        "hidden_dim": dims.pop(),
        "num_examples": len(examples),
        "layers": sorted(int(k) for k in layers),
        "format_version": FORMAT_VERSION,
    }
    for k, m in layers.items():
        _write_atomic(out / f"layer_{int(k)}.actv", encode_actv(m))
    _write_atomic(out / "examples.jsonl", _jsonl(examples))
    _write_atomic(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return out


def read_dataset(directory: os.PathLike | str) -> tuple[dict, list[dict], dict[int, np.ndarray]]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    examples = [json.loads(line) for line in (d / "examples.jsonl").read_text().splitlines() if line.strip()]
    layers = {k: decode_actv((d / f"layer_{k}.actv").read_bytes()) for k in manifest["layers"]}
    return manifest, examples, layers


def transcript_record(
    example_id: str,
    sample_index: int,
    temperature: float,
    formulation: str,
    raw_text: str,
    token_logprobs: Sequence[Mapping] | None = None,
) -> dict:
    if formulation not in ("PaV", "PaS", "PaL"):
        raise ValueError(f"unknown formulation {formulation!r}")
    rec = {
        "example_id": example_id,
        "sample_index": int(sample_index),
        "temperature": float(temperature),
        "formulation": formulation,
        "raw_text": raw_text,
    }
    if token_logprobs is not None:
        rec["token_logprobs"] = [dict(t) for t in token_logprobs]
    return rec


def write_transcripts(path: os.PathLike | str, records: Iterable[Mapping]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(p, _jsonl(records))
