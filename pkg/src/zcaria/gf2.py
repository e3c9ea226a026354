"""GF(2) helpers: dense 0/1 matrices and int-bitmask vectors."""

from __future__ import annotations

import numpy as np


def matmul(a, b) -> np.ndarray:
    return (np.asarray(a, dtype=np.int64) @ np.asarray(b, dtype=np.int64) % 2).astype(np.uint8)


def inverse(matrix) -> np.ndarray:
    """Gauss-Jordan inverse; raises ``ValueError`` for singular input."""
    a = np.asarray(matrix, dtype=np.uint8) % 2
    n = a.shape[0]
    work = np.concatenate([a, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivots = np.flatnonzero(work[col:, col])
        if not pivots.size:
            raise ValueError("matrix is singular over GF(2)")
        p = col + pivots[0]
        work[[col, p]] = work[[p, col]]
        for r in np.flatnonzero(work[:, col]):
            if r != col:
                work[r] ^= work[col]
    return work[:, n:].copy()


def nullspace(vectors: list[int]) -> list[int]:
    """Basis of {lam : XOR of vectors[i] over set bits i of lam == 0}.

    ``vectors`` are int bitmasks; the result is a list of int bitmasks over
    the vector indices.
    """
    reduced: list[tuple[int, int, int]] = []  # (value, combination, pivot bit)
    basis = []
    for i, v in enumerate(vectors):
        combo = 1 << i
        for value, c, bit in reduced:
            if v >> bit & 1:
                v ^= value
                combo ^= c
        if v:
            reduced.append((v, combo, v.bit_length() - 1))
        else:
            basis.append(combo)
    return basis


def span(basis: list[int]):
    """Every nonzero combination of ``basis`` (2^len - 1 values)."""
    for mask in range(1, 1 << len(basis)):
        value = 0
        for j, b in enumerate(basis):
            if mask >> j & 1:
                value ^= b
        yield value


def popcount(x: int) -> int:
    return bin(x).count("1")
