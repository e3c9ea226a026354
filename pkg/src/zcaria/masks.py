"""Mask/difference propagation, miss-in-the-middle proofs and correlation oracles."""

from __future__ import annotations

import itertools
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import gf2
from .cipher import CELLS, DIFFUSION_MATRIX, CipherProfile, as_state, diffuse, distinct_plaintexts, round_function

NONZERO = "nonzero"
UNKNOWN = "unknown"

MASK = "mask"
DIFFERENCE = "difference"

# Linear maps applied per diffusion step, keyed by (mode, direction).  Masks
# cross y = A x as alpha = A^T beta; differences as dy = A dx.
_A = DIFFUSION_MATRIX
_DL_STEP = {
    (MASK, "forward"): gf2.inverse(_A.T),
    (MASK, "backward"): _A.T.copy(),
    (DIFFERENCE, "forward"): _A.copy(),
    (DIFFERENCE, "backward"): gf2.inverse(_A),
}

# Output pattern of the four claimed hulls: one shared nonzero value h.
CLAIMED_OUTPUT_CELLS = (2, 5, 11, 12)
CLAIMED_INPUT_CELLS = (4, 10, 13, 15)


def propagate_mask_dl(mask) -> np.ndarray:
    """Push a concrete mask forward through the diffusion layer."""
    m = as_state(mask)
    out = np.zeros_like(m)
    step = _DL_STEP[(MASK, "forward")]
    for i in range(CELLS):
        for j in np.flatnonzero(step[i]):
            out[..., i] ^= m[..., j]
    return out


def mask_dot(mask, states) -> np.ndarray:
    """Parity of <mask, state> for a batch of states."""
    m = as_state(mask).astype(np.uint8)
    x = as_state(states) & m
    return _PARITY8[np.bitwise_xor.reduce(x, axis=-1)]


_PARITY8 = np.array([bin(v).count("1") & 1 for v in range(256)], dtype=np.uint8)


# -- truncated patterns and symbolic states --------------------------------------------


@dataclass(frozen=True)
class TruncatedPattern:
    """Cell-granular mask: ``None`` for a zero cell, a label for a nonzero one.

    Cells sharing a label carry the same nonzero value.
    """

    cells: tuple

    def __post_init__(self):
        if len(self.cells) != CELLS:
            raise ValueError("pattern needs 16 cells")

    @classmethod
    def single(cls, cell: int, label: str = "b") -> "TruncatedPattern":
        cells = [None] * CELLS
        cells[cell] = label
        return cls(tuple(cells))

    @classmethod
    def on(cls, cells, label: str = "h") -> "TruncatedPattern":
        chosen = set(cells)
        return cls(tuple(label if i in chosen else None for i in range(CELLS)))

    @classmethod
    def parse(cls, text: str) -> "TruncatedPattern":
        """Parse ``"0,0,h,0,0,h,0,0; 0,0,0,h,h,0,0,0"`` style notation."""
        tokens = [t for t in re.split(r"[,;\s()]+", text) if t]
        return cls(tuple(None if t == "0" else t for t in tokens))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.cells) if c is not None)

    def __str__(self) -> str:
        cells = ["0" if c is None else str(c) for c in self.cells]
        return "(" + ",".join(cells[:8]) + "; " + ",".join(cells[8:]) + ")"


@dataclass
class SymbolicMaskState:
    """Each cell is a GF(2) combination (int bitmask) of tagged variables."""

    cells: list[int]
    tags: list[str] = field(default_factory=list)
    mode: str = MASK

    @classmethod
    def from_pattern(cls, pattern: TruncatedPattern, mode: str = MASK) -> "SymbolicMaskState":
        labels: dict = {}
        cells = []
        for c in pattern.cells:
            if c is None:
                cells.append(0)
            else:
                labels.setdefault(c, len(labels))
                cells.append(1 << labels[c])
        return cls(cells, [NONZERO] * len(labels), mode)

    def fresh(self, tag: str) -> int:
        self.tags.append(tag)
        return 1 << (len(self.tags) - 1)

    def is_zero(self, i: int) -> bool:
        return self.cells[i] == 0

    def single_nonzero(self, coeff: int) -> bool:
        return gf2.popcount(coeff) == 1 and self.tags[coeff.bit_length() - 1] == NONZERO

    def is_nonzero(self, i: int) -> bool:
        return self.single_nonzero(self.cells[i])

    def combine(self, lam: int) -> int:
        out = 0
        for i in range(CELLS):
            if lam >> i & 1:
                out ^= self.cells[i]
        return out

    def describe(self, coeff: int, prefix: str = "v") -> str:
        terms = [f"{prefix}{j}" for j in range(len(self.tags)) if coeff >> j & 1]
        return "^".join(terms) if terms else "0"

    def zero_cells(self) -> tuple[int, ...]:
        return tuple(i for i in range(CELLS) if self.is_zero(i))

    # single-layer steps

    def substitution_step(self) -> None:
        new = []
        for c in self.cells:
            if c == 0:
                new.append(0)
            elif self.single_nonzero(c):
                new.append(self.fresh(NONZERO))
            else:
                new.append(self.fresh(UNKNOWN))
        self.cells = new

    def diffusion_step(self, direction: str) -> None:
        step = _DL_STEP[(self.mode, direction)]
        new = []
        for i in range(CELLS):
            acc = 0
            for j in np.flatnonzero(step[i]):
                acc ^= self.cells[j]
            new.append(acc)
        self.cells = new


def symbolic_propagate(
    pattern: TruncatedPattern, direction: str, rounds: int, mode: str = MASK
) -> SymbolicMaskState:
    """Propagate a truncated pattern over ``rounds`` full rounds.

    Forward steps go S-layer then diffusion; backward steps undo diffusion then
    the S-layer.  Both directions therefore end at the input of the same round.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    state = SymbolicMaskState.from_pattern(pattern, mode)
    for _ in range(rounds):
        if direction == "forward":
            state.substitution_step()
            state.diffusion_step("forward")
        else:
            state.diffusion_step("backward")
            state.substitution_step()
    return state


def propagate_difference(pattern: TruncatedPattern, direction: str, rounds: int) -> SymbolicMaskState:
    return symbolic_propagate(pattern, direction, rounds, mode=DIFFERENCE)


@dataclass(frozen=True)
class ContradictionWitness:
    cells: tuple[int, ...]
    forward_expr: str
    backward_expr: str = "0"
    directions: tuple[str, str] = ("forward", "backward")

    def to_dict(self) -> dict:
        return {
            "cells": list(self.cells),
            "forward": self.forward_expr,
            "backward": self.backward_expr,
            "directions": list(self.directions),
        }


def _cells_of(lam: int) -> tuple[int, ...]:
    return tuple(i for i in range(CELLS) if lam >> i & 1)


def find_contradiction(fwd: SymbolicMaskState, bwd: SymbolicMaskState) -> ContradictionWitness | None:
    """Find a cell combination that is provably nonzero forward but zero backward.

    The candidates are the nonzero elements of the null space of the backward
    cell coefficients; among valid ones the lexicographically smallest cell
    tuple is returned.
    """
    candidates = []
    for lam in gf2.span(gf2.nullspace(list(bwd.cells))):
        if fwd.single_nonzero(fwd.combine(lam)):
            candidates.append(_cells_of(lam))
    if not candidates:
        return None
    best = min(candidates)
    lam = sum(1 << i for i in best)
    return ContradictionWitness(best, fwd.describe(fwd.combine(lam), "d"))


@dataclass(frozen=True)
class HullResult:
    input: TruncatedPattern
    output: TruncatedPattern
    witness: ContradictionWitness

    def to_dict(self) -> dict:
        return {
            "input": str(self.input),
            "output": str(self.output),
            "input_cells": list(self.input.support),
            "output_cells": list(self.output.support),
            "witness": self.witness.to_dict(),
        }


def enumerate_zc_hulls(input_family, output_family, rounds: int = 2, mode: str = MASK) -> list[HullResult]:
    """Every (input, output) pair whose halves contradict after ``rounds`` each."""
    found = []
    backward = [(o, symbolic_propagate(o, "backward", rounds, mode)) for o in output_family]
    for inp in input_family:
        fwd = symbolic_propagate(inp, "forward", rounds, mode)
        for out, bwd in backward:
            witness = find_contradiction(fwd, bwd)
            if witness is not None:
                found.append(HullResult(inp, out, witness))
    return found


def claimed_output_pattern() -> TruncatedPattern:
    return TruncatedPattern.on(CLAIMED_OUTPUT_CELLS, "h")


def single_cell_family() -> list[TruncatedPattern]:
    return [TruncatedPattern.single(i) for i in range(CELLS)]


def instantiate(pattern: TruncatedPattern, values: dict) -> np.ndarray:
    """Concrete mask with each label replaced by ``values[label]``."""
    return np.array([0 if c is None else values[c] for c in pattern.cells], dtype=np.uint8)


# -- exhaustive correlation over the 2^32 codebook (w = 2) ---------------------------------

HULL_ROUNDS = (2, 3, 4, 5)


def _round_tables(profile: CipherProfile, keys) -> np.ndarray:
    """Per round, two 2^16 tables whose XOR is the 32-bit round function.

    Round r maps x to DL(SL_r(x ^ k)); the diffusion layer is linear, so the
    image of the low and high 16-bit halves can be tabulated separately.
    """
    halves = np.arange(1 << 16, dtype=np.uint32)
    shifts = np.arange(8, dtype=np.uint32) * 2
    cells = ((halves[:, None] >> shifts) & 3).astype(np.uint8)
    tables = np.empty((len(keys), 2, 1 << 16), dtype=np.uint32)
    weights = np.uint32(1) << (np.arange(CELLS, dtype=np.uint32) * 2)
    for t, (r, key) in enumerate(zip(HULL_ROUNDS, keys)):
        for half in range(2):
            state = np.zeros((1 << 16, CELLS), dtype=np.uint8)
            state[:, 8 * half : 8 * half + 8] = cells
            k = np.zeros(CELLS, dtype=np.uint8)
            k[8 * half : 8 * half + 8] = key[8 * half : 8 * half + 8]
            sub = profile.layer_tables(r)[np.arange(CELLS), state ^ k]
            # cells of the other half must map to zero before diffusion
            sub[:, 8 * (1 - half) : 8 * (1 - half) + 8] = 0
            out = diffuse(sub).astype(np.uint32)
            tables[t, half] = (out * weights).sum(axis=1, dtype=np.uint64).astype(np.uint32)
    return tables


def _kernel():
    import numba

    @numba.njit(nogil=True, cache=True)
    def sweep(tables, lo, hi, in_shifts, out_shifts, hist):
        n_in = in_shifts.shape[0]
        n_out = out_shifts.shape[0]
        for x in range(lo, hi):
            y = np.uint32(x)
            for t in range(tables.shape[0]):
                y = tables[t, 0, y & 0xFFFF] ^ tables[t, 1, y >> 16]
            idx = 0
            for c in range(n_in):
                idx = (idx << 2) | ((x >> in_shifts[c]) & 3)
            for c in range(n_out):
                idx = (idx << 2) | ((y >> out_shifts[c]) & 3)
            hist[idx] += 1

    return sweep


_SWEEP = None


def exhaustive_histogram(
    profile: CipherProfile, keys, in_cells, out_cells, threads: int = 1, span: tuple[int, int] | None = None
) -> np.ndarray:
    """Joint counts of (input cells of x, output cells of F(x)) over all 2^32 x.

    ``F`` is the four full rounds 2..5 under ``keys`` (four states).  The
    codebook is sharded by plaintext prefix; partial histograms are summed.
    """
    global _SWEEP
    if profile.cell_width != 2:
        raise ValueError("exhaustive correlation needs 2-bit cells (2^32 codebook)")
    keys = as_state(keys, profile)
    if keys.shape != (4, CELLS):
        raise ValueError("need four round keys for rounds 2..5")
    if profile.rounds < 5:
        profile = profile.with_rounds(5)
    if _SWEEP is None:
        _SWEEP = _kernel()
    tables = _round_tables(profile, keys)
    in_shifts = np.array([2 * c for c in in_cells], dtype=np.int64)
    out_shifts = np.array([2 * c for c in out_cells], dtype=np.int64)
    size = 1 << (2 * (len(in_cells) + len(out_cells)))
    lo, hi = span if span is not None else (0, 1 << 32)
    shards = max(1, threads) * 4
    bounds = np.linspace(lo, hi, shards + 1).astype(np.int64)

    def run(i):
        hist = np.zeros(size, dtype=np.int64)
        _SWEEP(tables, int(bounds[i]), int(bounds[i + 1]), in_shifts, out_shifts, hist)
        return hist

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return sum(pool.map(run, range(shards)))


def correlation_from_histogram(hist, in_cells, out_cells, alpha, beta) -> Fraction:
    """Exact correlation of alpha -> beta from a joint histogram."""
    alpha = as_state(alpha)
    beta = as_state(beta)
    for i in np.flatnonzero(alpha):
        if i not in in_cells:
            raise ValueError(f"alpha touches cell {i} outside the histogram")
    for i in np.flatnonzero(beta):
        if i not in out_cells:
            raise ValueError(f"beta touches cell {i} outside the histogram")
    mask = 0
    for c in in_cells:
        mask = (mask << 2) | int(alpha[c])
    for c in out_cells:
        mask = (mask << 2) | int(beta[c])
    idx = np.arange(len(hist), dtype=np.int64)
    parity = _PARITY8[np.bitwise_xor.reduce(np.stack([(idx & mask) >> s & 0xFF for s in range(0, 40, 8)]), axis=0)]
    total = int(hist.sum())
    agree = int(hist[parity == 0].sum())
    return Fraction(2 * agree - total, total)


def exact_correlation(profile: CipherProfile, alpha, beta, keys, threads: int = 1) -> Fraction:
    """Exact correlation of alpha . x ^ beta . F(x) over the full 2^32 codebook."""
    if profile.cell_width != 2:
        raise ValueError("exact correlation is limited to 2-bit cells")
    in_cells = tuple(int(i) for i in np.flatnonzero(as_state(alpha)))
    out_cells = tuple(int(i) for i in np.flatnonzero(as_state(beta)))
    hist = exhaustive_histogram(profile, keys, in_cells, out_cells, threads)
    return correlation_from_histogram(hist, in_cells, out_cells, alpha, beta)


def hull_function(states, keys, profile: CipherProfile) -> np.ndarray:
    """The four full rounds 2..5 on an ``(N, 16)`` batch."""
    if profile.rounds < 5:
        profile = profile.with_rounds(5)
    x = as_state(states)
    for r, key in zip(HULL_ROUNDS, as_state(keys)):
        x = round_function(x, key, r, profile)
    return x


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    stderr: float
    sample_count: int
    agree: int


def sampled_correlation(
    profile: CipherProfile, alpha, beta, keys, sample_count: int, seed: int, chunk: int = 1 << 20
) -> CorrelationEstimate:
    """Empirical correlation over ``sample_count`` distinct random inputs."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    bits = profile.block_bits
    if bits < 64 and sample_count > (1 << bits):
        raise ValueError(f"sample_count exceeds the 2^{bits} codebook")
    if bits == 32 and sample_count == 1 << 32:
        c = exact_correlation(profile, alpha, beta, keys)
        agree = (int(c * (1 << 32)) + (1 << 32)) // 2
        return CorrelationEstimate(float(c), 2.0**-16, sample_count, agree)
    rng = np.random.default_rng(seed)
    xs = distinct_plaintexts(profile, sample_count, rng)
    agree = 0
    for start in range(0, sample_count, chunk):
        x = xs[start : start + chunk]
        y = hull_function(x, keys, profile)
        agree += int(np.count_nonzero(mask_dot(alpha, x) == mask_dot(beta, y)))
    value = 2 * agree / sample_count - 1
    return CorrelationEstimate(value, 1 / np.sqrt(sample_count), sample_count, agree)


def hull_instantiations(width: int, limit: int | None = None):
    """Nonzero (b, h) value pairs for a cell width, in lexicographic order."""
    pairs = list(itertools.product(range(1, 1 << width), repeat=2))
    return pairs if limit is None else pairs[:limit]


def hull_correlations(
    profile: CipherProfile, input_cells, keys, values, threads: int = 1, output_cells=CLAIMED_OUTPUT_CELLS
) -> dict[int, list[tuple[int, int, Fraction]]]:
    """Exact correlations of single-cell hulls into the shared output pattern.

    One codebook sweep serves every input cell and every (b, h) in ``values``.
    """
    input_cells = tuple(input_cells)
    hist = exhaustive_histogram(profile, keys, input_cells, tuple(output_cells), threads)
    out_pattern = TruncatedPattern.on(output_cells, "h")
    result = {}
    for cell in input_cells:
        rows = []
        for b, h in values:
            alpha = instantiate(TruncatedPattern.single(cell), {"b": b})
            beta = instantiate(out_pattern, {"h": h})
            rows.append((b, h, correlation_from_histogram(hist, input_cells, output_cells, alpha, beta)))
        result[cell] = rows
    return result
