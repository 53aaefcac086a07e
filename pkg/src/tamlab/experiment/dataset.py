"""Binary dataset container for NAM training samples.

Layout: ``MAGIC``, a little-endian ``uint32`` header length, the UTF-8 JSON
header (sorted keys), then ``count`` fixed-size packed records.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TAMLABDS\x01\n"
VERSION = 1
SPLITS = ("train", "val", "test")


def record_dtype(per_pol: int, K: int) -> np.dtype:
    return np.dtype([
        ("drop", "<u4"), ("slot", "<u4"), ("n_users", "u1"), ("label", "u1"),
        ("infeasible", "u1"), ("split", "u1"), ("features", "<f4", (per_pol, 4, K)),
    ])


@dataclass
class DatasetFile:
    header: dict
    records: np.ndarray
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        h = self.header
        want = record_dtype(h["geometry_per_pol"], h["K"])
        if self.records.dtype != want:
            raise ValueError("record layout does not match header")
        h["count"] = int(len(self.records))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def X(self) -> np.ndarray:
        return self.records["features"]

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"].astype(int)

    def split(self, name: str, include_infeasible: bool = False):
        """``(X, y)`` of one split as float64 arrays."""
        sel = self.records["split"] == SPLITS.index(name)
        if not include_infeasible:
            sel &= self.records["infeasible"] == 0
        r = self.records[sel]
        return r["features"].astype(float), r["label"].astype(int)

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header, sort_keys=True, separators=(",", ":")).encode()
        return MAGIC + struct.pack("<I", len(head)) + head + self.records.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DatasetFile":
        if not blob.startswith(MAGIC):
            raise ValueError("not a tamlab dataset (bad magic)")
        off = len(MAGIC)
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        header = json.loads(blob[off:off + n].decode())
        off += n
        if header.get("version") != VERSION:
            raise ValueError(f"unsupported dataset version {header.get('version')}")
        dt = record_dtype(header["geometry_per_pol"], header["K"])
        body = blob[off:]
        if len(body) != header["count"] * dt.itemsize:
            raise ValueError("dataset body is truncated or has trailing bytes")
        recs = np.frombuffer(body, dtype=dt).copy()
        return cls(header=header, records=recs)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DatasetFile":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())
