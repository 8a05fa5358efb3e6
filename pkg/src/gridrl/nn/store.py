"""Flat named collections of float64 arrays for network weights and gradients."""

from __future__ import annotations

import json
from typing import Iterator

import numpy as np

from gridrl.errors import DataError, NumericError, ShapeError


class ParamStore:
    """Ordered name -> float64 array map with locked shapes.

    Entries keep the shape they were added with; assignment with a different
    shape raises. Values must stay finite. Entries marked non-trainable
    (batch-norm running statistics) are skipped by optimizers but still
    checkpointed and soft-updated.
    """

    _check_finite = True

    def __init__(self) -> None:
        self._arrays: dict[str, np.ndarray] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> None:
        if name in self._arrays:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.asarray(value, dtype=np.float64).copy()
        if self._check_finite and not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in parameter {name!r}")
        self._arrays[name] = arr
        self._trainable[name] = trainable

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._arrays:
            raise KeyError(f"unknown parameter {name!r}; use add() to create entries")
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self._arrays[name].shape:
            raise ShapeError(
                f"shape {arr.shape} does not match locked shape "
                f"{self._arrays[name].shape} for {name!r}"
            )
        if self._check_finite and not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values assigned to {name!r}")
        self._arrays[name] = arr.copy()

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def trainable_names(self) -> list[str]:
        return [n for n, t in self._trainable.items() if t]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def copy(self) -> "ParamStore":
        out = type(self)()
        for name in self._arrays:
            out.add(name, self._arrays[name], trainable=self._trainable[name])
        return out

    def zeros_like(self) -> "GradStore":
        out = GradStore()
        for name in self.trainable_names():
            out.add(name, np.zeros_like(self._arrays[name]))
        return out

    def to_document(self) -> dict:
        """Plain-JSON representation: name -> {shape, trainable, row-major data}."""
        return {
            name: {
                "shape": list(arr.shape),
                "trainable": self._trainable[name],
                "data": arr.ravel().tolist(),
            }
            for name, arr in self._arrays.items()
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ParamStore":
        store = cls()
        for name, entry in doc.items():
            arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            store.add(name, arr, trainable=bool(entry.get("trainable", True)))
        return store


class GradStore(ParamStore):
    """Gradient arrays mirroring a ParamStore.

    Unlike parameters, gradients may transiently hold non-finite values;
    optimizers reject them with the offending parameter name.
    """

    _check_finite = False

    def accumulate(self, name: str, value: np.ndarray) -> None:
        if name in self:
            self._arrays[name] = self._arrays[name] + np.asarray(value, dtype=np.float64)
        else:
            self.add(name, value)

    def scaled(self, factor: float) -> "GradStore":
        out = GradStore()
        for name in self:
            out.add(name, self[name] * factor)
        return out

    def global_norm(self) -> float:
        total = 0.0
        for name in self:
            total += float(np.sum(self[name] ** 2))
        return float(np.sqrt(total))

    def clip_global_norm(self, max_norm: float) -> "GradStore":
        norm = self.global_norm()
        if norm > max_norm > 0:
            return self.scaled(max_norm / norm)
        return self


def save_checkpoint(path, stores: dict[str, ParamStore], extra: dict | None = None) -> None:
    """Write named stores plus optimizer/auxiliary state as one JSON document.

    The document round-trips byte-for-byte: floats are serialized with
    shortest-repr, so load followed by save reproduces the file exactly.
    """
    doc = {
        "format": "gridrl-checkpoint-v1",
        "stores": {role: s.to_document() for role, s in stores.items()},
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path) -> tuple[dict[str, ParamStore], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "gridrl-checkpoint-v1":
        raise DataError(f"{path}: not a gridrl checkpoint (format={doc.get('format')!r})")
    stores = {role: ParamStore.from_document(d) for role, d in doc["stores"].items()}
    return stores, doc.get("extra", {})
