"""Walsh-Hadamard transform and XOR-circulant correlation evaluation.

The correlation of an approximation under every key guess is a product with
a matrix M[k, y] = s(y ^ k), which the transform diagonalizes.  Everything
runs in int64; intermediate wrap-around is harmless because the final values
are small and the arithmetic is exact modulo 2^64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class OpCounter:
    additions: int = 0
    multiplications: int = 0


def _check_length(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    return n.bit_length() - 1


def fwht(v, counter: OpCounter | None = None) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform of an integer vector (new array)."""
    x = np.array(v, dtype=np.int64)
    m = _check_length(len(x))
    with np.errstate(over="ignore"):
        h = 1
        while h < len(x):
            y = x.reshape(-1, 2, h)
            a = y[:, 0, :].copy()
            y[:, 0, :] += y[:, 1, :]
            y[:, 1, :] = a - y[:, 1, :]
            h *= 2
    if counter is not None:
        counter.additions += m * len(x)
    return x


def naive_wht(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    n = len(v)
    _check_length(n)
    idx = np.arange(n)
    parity = np.array([[bin(k & x).count("1") & 1 for x in idx] for k in idx])
    return ((1 - 2 * parity) * v).sum(axis=1)


@dataclass
class SignTable:
    """Entries (-1)^g(y) of the generating row, stored as 0/1 bits of g."""

    m: int
    bits: np.ndarray  # uint8 0/1, length 2^m

    @classmethod
    def build(cls, g: Callable[[np.ndarray], np.ndarray], m: int) -> "SignTable":
        y = np.arange(1 << m, dtype=np.int64)
        bits = np.asarray(g(y), dtype=np.uint8) & 1
        if bits.shape != y.shape:
            raise ValueError("sign function must return one bit per point")
        return cls(m, bits)

    @property
    def values(self) -> np.ndarray:
        return 1 - 2 * self.bits.astype(np.int64)

    def __len__(self) -> int:
        return len(self.bits)


def build_sign_table(g: Callable[[np.ndarray], np.ndarray], m: int) -> SignTable:
    return SignTable.build(g, m)


@dataclass(frozen=True)
class DataEmbedding:
    """Places a d-bit data index into the m-bit key index space.

    ``positions[j]`` is the bit of the m-bit index that receives data bit j;
    the remaining coordinates are zero-padded.
    """

    d: int
    m: int
    positions: tuple[int, ...]

    def __post_init__(self):
        if len(self.positions) != self.d or len(set(self.positions)) != self.d:
            raise ValueError("embedding must map d data bits to distinct positions")
        if any(not 0 <= p < self.m for p in self.positions):
            raise ValueError("embedding position outside the index space")

    @classmethod
    def identity(cls, m: int) -> "DataEmbedding":
        return cls(m, m, tuple(range(m)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        out = np.zeros_like(x)
        for j, p in enumerate(self.positions):
            out |= ((x >> j) & 1) << p
        return out


@dataclass
class KeyCorrelationVector:
    eps: np.ndarray  # per key, integer sum of signs
    W: np.ndarray = field(default=None)  # accumulated sum of eps^2 (exact)

    def __post_init__(self):
        if self.W is None:
            self.W = np.zeros(len(self.eps), dtype=np.int64)


def _exact_divide(raw: np.ndarray, m: int) -> np.ndarray:
    if np.any(raw & ((1 << m) - 1)):
        raise ArithmeticError("inverse transform not divisible by 2^m: transform fault")
    return raw >> m


def xor_convolve(
    signs: SignTable,
    counters,
    embed: DataEmbedding | None = None,
    counter: OpCounter | None = None,
    counters_hat: np.ndarray | None = None,
) -> np.ndarray:
    """eps[k] = sum_x signs[embed(x) ^ k] * counters[x], via three transforms.

    ``counters_hat`` may carry a precomputed transform of the embedded
    counters so a loop over approximations pays for it once.
    """
    m = signs.m
    if counters_hat is None:
        x = np.asarray(counters, dtype=np.int64)
        if embed is not None:
            if len(x) != 1 << embed.d or embed.m != m:
                raise ValueError("counters do not fit the embedding")
            full = np.zeros(1 << m, dtype=np.int64)
            np.add.at(full, embed(np.arange(len(x))), x)
            x = full
        elif len(x) != 1 << m:
            raise ValueError("counter length must match the sign table")
        counters_hat = fwht(x, counter)
    s_hat = fwht(signs.values, counter)
    with np.errstate(over="ignore"):
        prod = counters_hat * s_hat
    if counter is not None:
        counter.multiplications += 1 << m
    return _exact_divide(fwht(prod, counter), m)


def naive_convolve(signs: SignTable, counters, embed: DataEmbedding | None = None) -> np.ndarray:
    x = np.asarray(counters, dtype=np.int64)
    idx = np.arange(len(x)) if embed is None else embed(np.arange(len(x)))
    vals = signs.values
    keys = np.arange(1 << signs.m)
    return np.array([int((vals[idx ^ k] * x).sum()) for k in keys], dtype=np.int64)


def accumulate_W(kcv: KeyCorrelationVector, eps: np.ndarray, N: int) -> KeyCorrelationVector:
    """W += eps^2, kept as the exact integer numerator of sum (eps/N)^2."""
    if N <= 0:
        raise ValueError("N must be positive")
    eps = np.asarray(eps, dtype=np.int64)
    if np.any(np.abs(eps) > N):
        raise ValueError("|eps| exceeds N")
    kcv.W += eps * eps
    kcv.eps = eps
    return kcv


def W_value(W_numerator, N: int) -> np.ndarray:
    """Sum of squared empirical correlations from its integer numerator."""
    return np.asarray(W_numerator, dtype=np.float64) / float(N) ** 2
