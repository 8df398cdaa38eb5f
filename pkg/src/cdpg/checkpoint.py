"""Binary parameter checkpoints with a JSON sidecar.

Layout of the binary file::

    b"CDPG1"                      magic
    u8  tag length, tag bytes     parameterization tag (ascii)
    u8  ndim, ndim x u64 (LE)     shape descriptor
    prod(shape) x f64 (LE)        parameters, C order

The sidecar ``<path>.json`` holds whatever is needed to rebuild the owning
object (vocabulary, ``max_len``, featurizer table, context ids, ...).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .seq import ContextFeaturizer, SequenceSpace, Vocab, make_policy

MAGIC = b"CDPG1"


class CheckpointError(ValueError):
    pass


def write_array(path, tag: str, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    tag_b = tag.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", len(tag_b)))
        fh.write(tag_b)
        fh.write(struct.pack("<B", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(array.tobytes())


def read_array(path) -> tuple[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:5]!r}")
    pos = 5
    (n,) = struct.unpack_from("<B", data, pos)
    pos += 1
    tag = data[pos : pos + n].decode("ascii")
    pos += n
    (ndim,) = struct.unpack_from("<B", data, pos)
    pos += 1
    shape = struct.unpack_from(f"<{ndim}Q", data, pos)
    pos += 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(data) - pos != 8 * count:
        raise CheckpointError(f"{path}: payload size does not match shape {shape}")
    arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
    return tag, arr.astype(np.float64)


def _write_sidecar(path, meta: dict) -> None:
    Path(f"{path}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _read_sidecar(path) -> dict:
    return json.loads(Path(f"{path}.json").read_text())


def save_policy(path, policy) -> None:
    write_array(path, policy.family, policy.logits)
    _write_sidecar(
        path,
        {
            "format": 1,
            "vocab": policy.space.vocab.to_dict(),
            "max_len": policy.space.max_len,
            "min_len": policy.space.min_len,
            "featurizer": policy.featurizer.to_dict(),
        },
    )


def load_policy(path):
    tag, logits = read_array(path)
    meta = _read_sidecar(path)
    vocab = Vocab.from_dict(meta["vocab"])
    space = SequenceSpace(vocab, meta["max_len"], meta.get("min_len", 0))
    feat = ContextFeaturizer.from_dict(meta["featurizer"], vocab)
    return make_policy(tag, space, feat, logits)


def save_lambdas(path, table: dict[int, float]) -> None:
    ids = sorted(table)
    write_array(path, "lambda", np.array([table[i] for i in ids], dtype=np.float64))
    _write_sidecar(path, {"format": 1, "context_ids": ids})


def load_lambdas(path) -> dict[int, float]:
    tag, arr = read_array(path)
    if tag != "lambda":
        raise CheckpointError(f"{path}: expected a lambda table, found {tag!r}")
    ids = _read_sidecar(path)["context_ids"]
    return {int(i): float(v) for i, v in zip(ids, arr)}
