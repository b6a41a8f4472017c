"""Named parameter containers and their on-disk format.

File layout (little-endian)::

    b"IRSPB-PARAMS\\n"
    <one line of UTF-8 JSON>\\n   {"version": 1, "metadata": {...},
                                  "tensors": [{"name", "shape", "offset", "count"}, ...]}
    raw float64 payload, tensors back to back in header order
"""

import json
from collections import OrderedDict

import numpy as np

from .tensor import Tensor

MAGIC = b"IRSPB-PARAMS\n"
FORMAT_VERSION = 1


class ParameterSet(OrderedDict):
    """Ordered ``name -> Tensor`` mapping; iteration order is insertion order."""

    def add(self, name, value):
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        self[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        return self[name]

    def zero_grad(self):
        for t in self.values():
            t.zero_grad()

    def copy(self):
        out = ParameterSet()
        for name, t in self.items():
            out.add(name, t.data.copy())
        return out

    def state(self):
        return {name: t.data.copy() for name, t in self.items()}

    def load_state(self, state):
        for name, t in self.items():
            if state[name].shape != t.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {t.shape}")
            t.data = np.array(state[name], dtype=np.float64)

    def num_values(self):
        return int(np.sum([t.data.size for t in self.values()]))


def save_parameters(params, path, metadata=None):
    entries, offset = [], 0
    for name, t in params.items():
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "count": int(t.data.size)})
        offset += t.data.size
    header = {"version": FORMAT_VERSION, "metadata": metadata or {}, "tensors": entries}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_parameters(path):
    """Return ``(ParameterSet, metadata)``."""
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        header = json.loads(fh.readline())
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header.get('version')}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    params = ParameterSet()
    for e in header["tensors"]:
        chunk = payload[e["offset"]: e["offset"] + e["count"]]
        if chunk.size != e["count"]:
            raise ValueError(f"{path}: truncated payload for {e['name']}")
        params.add(e["name"], chunk.reshape(e["shape"]))
    return params, header["metadata"]
