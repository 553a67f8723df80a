"""Self-describing parameter checkpoint container.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then the concatenated little-endian float64 payloads. The header maps each
parameter name to its shape and byte offset and also echoes the config, the
PRNG seed and an arbitrary JSON `extras` section (vocabularies, n-gram LM
counts, translation tables). Round-trips are bit-exact.
"""

import json
import struct

import numpy as np

MAGIC = b"HMTCKPT1"


class Checkpoint:
    def __init__(self, params, config, seed, extras=None):
        self.params = params  # dict name -> float64 ndarray
        self.config = config
        self.seed = seed
        self.extras = extras or {}


def save_checkpoint(path, params, config, seed, extras=None):
    """Write params (dict name -> Tensor or ndarray) plus metadata."""
    arrays = {}
    for name, p in params.items():
        data = p.data if hasattr(p, "data") else p
        arrays[name] = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    entries = []
    offset = 0
    for name, arr in arrays.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format": 1,
        "seed": int(seed),
        "config": config,
        "extras": extras or {},
        "params": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        lo = entry["offset"]
        arr = np.frombuffer(payload[lo : lo + size * 8], dtype="<f8").copy()
        params[entry["name"]] = arr.reshape(shape)
    return Checkpoint(params, header["config"], header["seed"], header["extras"])
