"""Binary checkpoints.

Layout::

    SCARCKPT1\\n
    <one line of JSON metadata: layer_sizes, seed, epoch, method, ...>\\n
    <little-endian float32 buffers: W0, b0, W1, b1, ... in layer order>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diffcore import Tensor
from .model import Classifier, MlpSpec

MAGIC = b"SCARCKPT1\n"


class CheckpointError(Exception):
    pass


class NotACheckpointError(CheckpointError):
    def __init__(self, path):
        super().__init__(f"{path}: not a SCAR checkpoint")


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def save_checkpoint(model, path, *, epoch: int = 0, method: str = "", extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {
        "layer_sizes": list(model.spec.layer_sizes),
        "seed": int(getattr(model, "seed", 0)),
        "epoch": int(epoch),
        "method": method,
    }
    if extra:
        meta.update(extra)
    header = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        for p in model.params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return path


def read_checkpoint(path) -> tuple[dict, list[np.ndarray]]:
    path = Path(path)
    blob = path.read_bytes()
    if not blob.startswith(MAGIC):
        raise NotACheckpointError(path)
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise TruncatedCheckpointError(f"{path}: metadata header is incomplete")
    try:
        meta = json.loads(blob[len(MAGIC):end])
        spec = MlpSpec(tuple(meta["layer_sizes"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable metadata header ({exc})") from None
    offset = end + 1
    arrays = []
    for shape in spec.param_shapes():
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(blob):
            raise TruncatedCheckpointError(f"{path}: truncated parameter data for shape {shape}")
        arrays.append(np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).astype(np.float32).reshape(shape))
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    return meta, arrays


def load_checkpoint(path, expected: MlpSpec | None = None) -> tuple[Classifier, dict]:
    """Load a classifier; ``expected`` enforces a layer layout."""
    meta, arrays = read_checkpoint(path)
    spec = MlpSpec(tuple(meta["layer_sizes"]))
    if expected is not None and expected != spec:
        for i, (want, got) in enumerate(zip(expected.param_shapes(), spec.param_shapes())):
            if want != got:
                raise CheckpointShapeError(
                    f"{path}: layer {i // 2} {'weight' if i % 2 == 0 else 'bias'} has shape {got}, "
                    f"expected {want} (checkpoint {list(spec.layer_sizes)} vs config {list(expected.layer_sizes)})"
                )
        raise CheckpointShapeError(
            f"{path}: checkpoint layers {list(spec.layer_sizes)} vs config {list(expected.layer_sizes)}"
        )
    model = Classifier(spec, [Tensor(a) for a in arrays], seed=int(meta.get("seed", 0)))
    return model, meta
