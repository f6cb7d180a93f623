"""Chain container and its on-disk format.

A chain file is a single binary file::

    b"VWSCHAIN" | uint64 header length | UTF-8 JSON header | float64 columns

The header lists every stored array with its shape and byte offset (relative
to the end of the header), plus counters and the run manifest. Arrays are
little-endian C-order float64, so a reader needs nothing but the header.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"VWSCHAIN"
THETA_NAMES = ("beta", "gamma", "phi2", "tau2")


@dataclass
class ChainOutput:
    """Saved draws (one row per kept iteration) plus run counters."""

    draws: dict
    counters: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    elapsed: float = 0.0
    manifest: dict = field(default_factory=dict)

    @property
    def n_saved(self):
        return self.draws["sigma2"].shape[0]

    def theta_matrix(self):
        """Kept draws of (beta, gamma, phi2, tau2) as an R x (p+q+2) matrix."""
        cols = [np.atleast_2d(self.draws[k].T).T if self.draws[k].ndim == 1 else self.draws[k] for k in THETA_NAMES]
        return np.column_stack(cols)

    def theta_names(self):
        p = self.draws["beta"].shape[1]
        q = self.draws["gamma"].shape[1]
        return [f"beta_{j}" for j in range(p)] + [f"gamma_{j}" for j in range(q)] + ["phi2", "tau2"]

    def save(self, path, timings=True):
        """Write the chain file.

        With ``timings=False`` the elapsed time is stored as 0 so that
        identical runs give byte-identical files; callers keep timings in a
        separate run record.
        """
        arrays = {}
        for name, a in self.draws.items():
            arrays[f"draws/{name}"] = a
        for name, a in self.series.items():
            arrays[f"series/{name}"] = a
        layout = []
        offset = 0
        for name, a in arrays.items():
            a = np.ascontiguousarray(a, dtype="<f8")
            arrays[name] = a
            layout.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.nbytes
        header = {
            "format": "vwschain/1",
            "dtype": "<f8",
            "arrays": layout,
            "counters": _jsonable(self.counters),
            "elapsed": self.elapsed if timings else 0.0,
            "manifest": _jsonable(self.manifest),
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for a in arrays.values():
                fh.write(a.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path} is not a chain file")
            (n,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(n))
            body = fh.read()
        draws, series = {}, {}
        for item in header["arrays"]:
            shape = tuple(item["shape"])
            count = int(np.prod(shape)) if shape else 1
            a = np.frombuffer(body, dtype="<f8", count=count, offset=item["offset"]).reshape(shape).copy()
            group, name = item["name"].split("/", 1)
            (draws if group == "draws" else series)[name] = a
        return cls(draws, header["counters"], series, header["elapsed"], header["manifest"])


def read_header(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a chain file")
        (n,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(n))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
