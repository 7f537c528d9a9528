"""Model checkpoints: a single ``.npz`` holding a JSON header and named parameter arrays."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import Parameters

FORMAT_VERSION = 1
_META_KEY = "__meta__"
_PARAM_PREFIX = "param/"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, kind: str, meta: dict, params: Parameters) -> Path:
    """Write ``meta`` (JSON-serialisable) and ``params``; returns the path written."""
    path = Path(path)
    header = {"format_version": FORMAT_VERSION, "kind": kind, **meta}
    blob = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    arrays = {_META_KEY: blob}
    arrays.update({_PARAM_PREFIX + name: params[name] for name in params})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict, Parameters]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if _META_KEY not in data:
            raise CheckpointError(f"{path}: missing header")
        meta = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')!r}")
        params = Parameters({k[len(_PARAM_PREFIX):]: data[k] for k in data.files if k.startswith(_PARAM_PREFIX)})
    return meta, params
