"""Seeded partitions of row indices into near-equal folds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def split_indices(n: int, folds: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n)`` with ``seed`` and cut it into contiguous blocks.

    Block sizes differ by at most one; the leading blocks take the remainder.
    Each block is returned sorted.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"cannot split {n} rows into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, folds)
    out, start = [], 0
    for v in range(folds):
        size = base + (1 if v < extra else 0)
        out.append(np.sort(perm[start:start + size]))
        start += size
    return out


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    folds: tuple[np.ndarray, ...]

    @property
    def V(self) -> int:
        return len(self.folds)

    @classmethod
    def make(cls, n: int, V: int, seed: int = 0) -> "FoldAssignment":
        return cls(tuple(split_indices(n, V, seed)))

    def complement(self, v: int) -> np.ndarray:
        return np.concatenate([f for i, f in enumerate(self.folds) if i != v])
