"""Globally shared embedding tables and mean pooling over id sequences."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeMismatchError
from .numerics import Param, embedding_init


class EmbeddingTable:
    """Lookup table mapping dense integer ids to learned row vectors.

    One table serves all users: looking up the same id always returns the
    same row. Pooling sorts ids before accumulating, so the pooled vector is
    bit-identical under any permutation of the input ids.
    """

    def __init__(self, param: Param):
        if param.value.ndim != 2:
            raise ShapeMismatchError(f"embedding table must be 2-D, got {param.value.ndim}-D")
        self.param = param

    @classmethod
    def create(cls, rng: np.random.Generator, vocab_size: int, dim: int, name: str = "") -> "EmbeddingTable":
        value = embedding_init(rng, vocab_size, dim)
        return cls(Param(value=value, name=name))

    @property
    def rows(self) -> int:
        return self.param.value.shape[0]

    @property
    def dim(self) -> int:
        return self.param.value.shape[1]

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.rows):
            bad = ids[(ids < 0) | (ids >= self.rows)][0]
            raise IndexError(f"id {bad} out of range [0, {self.rows}) for table {self.param.name!r}")

    def lookup(self, idx: int) -> np.ndarray:
        """Row ``idx`` of the table, as a copy."""
        if not 0 <= idx < self.rows:
            raise IndexError(f"id {idx} out of range [0, {self.rows}) for table {self.param.name!r}")
        return self.param.value[idx].copy()

    def mean_pool(self, ids: Sequence[int]) -> np.ndarray:
        """Arithmetic mean of the rows named by ``ids``.

        Duplicates count once per occurrence. An empty sequence pools to the
        zero vector.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return np.zeros(self.dim)
        self._check_ids(ids)
        return self.param.value[np.sort(ids)].sum(axis=0) / ids.size

    def mean_pool_backward(self, ids: Sequence[int], upstream: np.ndarray) -> None:
        """Accumulate ``upstream / len(ids)`` into the grad of each referenced row.

        Duplicated ids accumulate once per occurrence. No-op for empty ids.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return
        self._check_ids(ids)
        np.add.at(self.param.grad, np.sort(ids), np.asarray(upstream) / ids.size)
