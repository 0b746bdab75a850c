"""Versioned model checkpoints: named float64 arrays plus a JSON meta block.

Stored as an .npz container.  Arrays round-trip bit-exactly; the meta block
carries the model configuration so a loaded checkpoint knows its own shapes
and module topology.
"""

import json

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays, meta=None):
    """Write {name: array} plus a meta dict to `path` (npz)."""
    payload = {}
    for name, arr in arrays.items():
        payload["param/" + name] = np.asarray(arr, dtype=np.float64)
    payload["__version__"] = np.asarray(FORMAT_VERSION, dtype=np.int64)
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta or {}, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Read a checkpoint back as ({name: array}, meta dict)."""
    with np.load(path) as npz:
        if "__version__" not in npz:
            raise CheckpointError(f"{path}: not a checkpoint (no version field)")
        version = int(npz["__version__"])
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(bytes(npz["__meta__"]).decode("utf-8"))
        arrays = {}
        for key in npz.files:
            if key.startswith("param/"):
                arrays[key[len("param/"):]] = npz[key]
        return arrays, meta
