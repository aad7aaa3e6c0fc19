"""Named parameter registry and its serialized file format.

The on-disk format is a small JSON manifest (name, shape, byte offset,
dtype tag) followed by a raw little-endian float32 blob.
"""
from __future__ import annotations

import json
from typing import Iterable, Iterator

import numpy as np

from .errors import WeightFormatError, WeightLookupError

__all__ = ["WeightStore", "WeightView"]

_MAGIC = b"LORTW001"
_DTYPE_TAG = "f32-le"


class WeightView:
    """Read-only view of a WeightStore under a dotted prefix."""

    def __init__(self, store: "WeightStore", prefix: str) -> None:
        self._store = store
        self._prefix = prefix

    def __getitem__(self, name: str) -> np.ndarray:
        return self._store[f"{self._prefix}.{name}"]

    def __contains__(self, name: str) -> bool:
        return f"{self._prefix}.{name}" in self._store

    def view(self, prefix: str) -> "WeightView":
        return WeightView(self._store, f"{self._prefix}.{prefix}")


class WeightStore:
    """Ordered mapping from canonical dotted parameter paths to arrays."""

    def __init__(self) -> None:
        self._entries: dict[str, np.ndarray] = {}

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._entries[name]
        except KeyError:
            raise WeightLookupError(f"missing parameter {name!r}") from None

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self._entries[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self):
        return self._entries.keys()

    def items(self):
        return self._entries.items()

    def view(self, prefix: str) -> WeightView:
        return WeightView(self, prefix)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self._entries.values())

    def missing(self, names: Iterable[str]) -> list[str]:
        return [n for n in names if n not in self._entries]

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        manifest = []
        offset = 0
        blobs = []
        for name, arr in self._entries.items():
            raw = arr.astype("<f4").tobytes()
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset,
                             "dtype": _DTYPE_TAG})
            blobs.append(raw)
            offset += len(raw)
        header = json.dumps({"format": "lort-weights", "entries": manifest},
                            indent=1).encode()
        return _MAGIC + len(header).to_bytes(8, "little") + header + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightStore":
        if data[: len(_MAGIC)] != _MAGIC:
            raise WeightFormatError("bad magic; not a lort weight file")
        hlen = int.from_bytes(data[8:16], "little")
        try:
            header = json.loads(data[16 : 16 + hlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise WeightFormatError(f"unreadable manifest: {e}") from None
        blob = data[16 + hlen :]
        store = cls()
        total = 0
        for ent in header.get("entries", []):
            if ent.get("dtype") != _DTYPE_TAG:
                raise WeightFormatError(f"unsupported dtype tag {ent.get('dtype')!r}")
            shape = tuple(ent["shape"])
            size = int(np.prod(shape)) if shape else 1
            off = int(ent["offset"])
            raw = blob[off : off + 4 * size]
            if len(raw) != 4 * size:
                raise WeightFormatError(
                    f"blob truncated for {ent['name']!r}: need {4 * size} bytes at {off}"
                )
            store[ent["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape)
            total = max(total, off + 4 * size)
        if total != len(blob):
            raise WeightFormatError(
                f"blob size {len(blob)} does not match manifest total {total}"
            )
        return store

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "WeightStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
