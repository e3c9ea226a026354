"""Staged partial-sum key guessing over sparse counter vectors.

A counter vector maps a tuple of named w-bit fields to a count.  Each guess
stage folds S-box terms (data field XOR guessed key cell) into accumulator
fields, drops the consumed data fields and merges equal indices, so the table
shrinks as key material is guessed.
"""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .cipher import DIFFUSION_ROWS, CipherProfile, PairSet
from .circuits import (
    B_CELLS,
    HULL_OUTPUT_CELLS,
    Circuit,
    combined_name,
    key_name,
)

CV_MAGIC = b"ZCCV"
DENSE_LIMIT = 32  # index bits allowed in a dense view / snapshot


# -- counter vectors ------------------------------------------------------------------


@dataclass
class CounterVector:
    """Sparse counts over a named field layout (first field = least significant)."""

    fields: tuple[str, ...]
    cell_width: int
    cells: np.ndarray  # (K, len(fields)) uint8
    counts: np.ndarray  # (K,) int64

    def __post_init__(self):
        self.fields = tuple(self.fields)
        self.cells = np.asarray(self.cells, dtype=np.uint8).reshape(-1, len(self.fields))
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if len(self.cells) != len(self.counts):
            raise ValueError("cells and counts disagree in length")

    @property
    def index_bits(self) -> int:
        return self.cell_width * len(self.fields)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return len(self.counts)

    @classmethod
    def empty(cls, fields, cell_width: int) -> "CounterVector":
        return cls(tuple(fields), cell_width, np.zeros((0, len(fields)), np.uint8), np.zeros(0, np.int64))

    @classmethod
    def from_rows(cls, fields, cell_width: int, cells, weights=None) -> "CounterVector":
        cells = np.asarray(cells, dtype=np.uint8).reshape(-1, len(fields))
        weights = np.ones(len(cells), np.int64) if weights is None else np.asarray(weights, np.int64)
        return cls(tuple(fields), cell_width, cells, weights).merged()

    def merged(self) -> "CounterVector":
        """Sum the counts of equal indices; rows come out in sorted index order."""
        nz = self.counts != 0
        cells, counts = self.cells[nz], self.counts[nz]
        if len(cells) == 0 or not self.fields:
            total = counts.sum(dtype=np.int64)
            if not self.fields:
                return CounterVector((), self.cell_width, np.zeros((1 if total else 0, 0), np.uint8),
                                     np.array([total] if total else [], np.int64))
            return CounterVector(self.fields, self.cell_width, cells, counts)
        if self.index_bits <= 62:
            flat = np.zeros(len(cells), dtype=np.int64)
            for j in range(len(self.fields)):
                flat |= cells[:, j].astype(np.int64) << (self.cell_width * j)
            uniq, summed = _sum_by_index(flat, counts, self.index_bits)
            mask = (1 << self.cell_width) - 1
            out = np.stack([(uniq >> (self.cell_width * j)) & mask for j in range(len(self.fields))], axis=1)
            return CounterVector(self.fields, self.cell_width, out.astype(np.uint8), summed)
        # wide layouts: reverse columns so byte order matches the numeric index order
        key = np.ascontiguousarray(cells[:, ::-1])
        view = key.view(np.dtype((np.void, key.shape[1]))).ravel()
        uniq, inv = np.unique(view, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(summed, inv.ravel(), counts)
        out = uniq.view(np.uint8).reshape(len(uniq), -1)[:, ::-1]
        return CounterVector(self.fields, self.cell_width, np.ascontiguousarray(out), summed)

    def column(self, name: str) -> np.ndarray:
        return self.cells[:, self.fields.index(name)]

    def to_dense(self) -> np.ndarray:
        m = self.index_bits
        if m > DENSE_LIMIT:
            raise ValueError(f"{m}-bit index is too large for a dense view")
        dense = np.zeros(1 << m, dtype=np.int64)
        np.add.at(dense, self.flat_index(), self.counts)
        return dense

    def flat_index(self) -> np.ndarray:
        idx = np.zeros(len(self.counts), dtype=np.int64)
        for j in range(len(self.fields)):
            idx |= self.cells[:, j].astype(np.int64) << (self.cell_width * j)
        return idx

    @classmethod
    def from_dense(cls, fields, cell_width: int, dense) -> "CounterVector":
        dense = np.asarray(dense, dtype=np.int64)
        if len(dense) != 1 << (cell_width * len(fields)):
            raise ValueError("dense vector length does not match the layout")
        idx = np.flatnonzero(dense)
        cells = np.stack([(idx >> (cell_width * j)) & ((1 << cell_width) - 1) for j in range(len(fields))], axis=1)
        return cls(tuple(fields), cell_width, cells.astype(np.uint8), dense[idx])

    def equals(self, other: "CounterVector") -> bool:
        a, b = self.merged(), other.merged()
        return a.fields == b.fields and np.array_equal(a.cells, b.cells) and np.array_equal(a.counts, b.counts)

    # snapshot file: magic, m (u8), type tag (u8), then 2^m little-endian u64 counts

    def to_bytes(self, tag: int = 0) -> bytes:
        return snapshot_bytes(self.to_dense(), self.index_bits, tag)

    def write(self, path, tag: int = 0) -> None:
        Path(path).write_bytes(self.to_bytes(tag))


def _sum_by_index(flat: np.ndarray, counts: np.ndarray, bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct indices (sorted) and their summed counts."""
    if len(flat) and (1 << bits) <= 4 * len(flat) + 4096 and int(np.abs(counts).sum()) < 1 << 53:
        dense = np.bincount(flat, weights=counts, minlength=1 << bits)
        uniq = np.flatnonzero(dense)
        return uniq, dense[uniq].astype(np.int64)
    order = np.argsort(flat)
    flat, counts = flat[order], counts[order]
    starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
    return flat[starts], np.add.reduceat(counts, starts)


def snapshot_bytes(values, m: int, tag: int = 0) -> bytes:
    values = np.asarray(values)
    if len(values) != 1 << m:
        raise ValueError("snapshot length must be 2^m")
    return CV_MAGIC + struct.pack("<BB", m, tag) + values.astype("<u8").tobytes()


def read_snapshot(data: bytes) -> tuple[np.ndarray, int]:
    """Returns (values as uint64, type tag)."""
    if data[:4] != CV_MAGIC:
        raise ValueError("not a counter-vector snapshot")
    m, tag = struct.unpack_from("<BB", data, 4)
    body = data[6:]
    if len(body) != 8 << m:
        raise ValueError("snapshot truncated")
    return np.frombuffer(body, dtype="<u8").copy(), tag


def init_counters(pairs: PairSet, circuit: Circuit, fields: tuple[str, ...] | None = None) -> CounterVector:
    """Count pairs by their extracted data cells (step 1)."""
    fields = circuit.data_fields if fields is None else tuple(fields)
    w = circuit.profile.cell_width
    if len(pairs) == 0:
        return CounterVector.empty(fields, w)
    data = circuit.extract(pairs)
    for f in fields:
        if f not in data:
            raise ValueError(f"field {f} is not a data cell of this circuit")
    return CounterVector.from_rows(fields, w, np.stack([data[f] for f in fields], axis=1))


# -- stages and schedules -------------------------------------------------------------


@dataclass(frozen=True)
class SboxRef:
    round_index: int
    position: int
    inverse: bool

    def table(self, profile: CipherProfile) -> np.ndarray:
        return profile.sbox(self.round_index, self.position, self.inverse)

    def __str__(self) -> str:
        return f"S{'^-1' if self.inverse else ''}_{self.round_index},{self.position}"


@dataclass(frozen=True)
class Term:
    """``targets ^= sbox(src ^ key)``; ``src`` is consumed."""

    src: str
    key: str
    sbox: SboxRef
    targets: tuple[str, ...]


@dataclass(frozen=True)
class GuessStage:
    step: int
    guess: tuple[str, ...]
    input: tuple[str, ...]
    output: tuple[str, ...]
    terms: tuple[Term, ...]
    merges: tuple[tuple[str, str], ...] = ()  # (dst, src): dst ^= src, src consumed

    def __post_init__(self):
        consumed = {t.src for t in self.terms} | {s for _, s in self.merges}
        produced = {t for term in self.terms for t in term.targets} | {d for d, _ in self.merges}
        for f in self.input:
            if f not in self.output and f not in consumed:
                raise ValueError(f"step {self.step}: field {f} dropped without being absorbed")
        for f in self.output:
            if f not in self.input and f not in produced:
                raise ValueError(f"step {self.step}: output field {f} has no source")
        for t in self.terms:
            if t.key not in self.guess:
                raise ValueError(f"step {self.step}: term key {t.key} is not guessed here")
        if len(self.output) > len(self.input):
            raise ValueError(f"step {self.step}: stage grows the index")

    def computed_states(self) -> list[str]:
        lines = []
        for t in self.terms:
            for tgt in t.targets:
                lines.append(f"{tgt} ^= {t.sbox}({t.src} ^ {t.key})")
        lines += [f"{d} ^= {s}" for d, s in self.merges]
        return lines

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "guess": list(self.guess),
            "input": list(self.input),
            "output": list(self.output),
            "computed": self.computed_states(),
        }


def apply_stage(v_in: CounterVector, stage: GuessStage, guess: dict[str, int], profile: CipherProfile) -> CounterVector:
    """Fold one stage under concrete values of its guessed cells."""
    if v_in.fields != stage.input:
        raise ValueError(f"step {stage.step}: layout {v_in.fields} does not match {stage.input}")
    cols = {f: v_in.cells[:, i] for i, f in enumerate(v_in.fields)}
    new: dict[str, np.ndarray] = {}
    for t in stage.terms:
        val = t.sbox.table(profile)[cols[t.src] ^ np.uint8(guess[t.key])]
        for tgt in t.targets:
            base = new.get(tgt, cols.get(tgt) if tgt not in {u.src for u in stage.terms} else None)
            new[tgt] = val if base is None else base ^ val
    for dst, src in stage.merges:
        new[dst] = new.get(dst, cols.get(dst)) ^ new.get(src, cols.get(src))
    out_cols = [new.get(f, cols.get(f)) for f in stage.output]
    cells = np.stack(out_cols, axis=1) if out_cols else np.zeros((len(v_in), 0), np.uint8)
    return CounterVector(stage.output, v_in.cell_width, cells, v_in.counts).merged()


@dataclass
class GuessSchedule:
    name: str
    rounds: int
    init_layout: tuple[str, ...]
    stages: list[GuessStage]
    b_field: str
    h_field: str
    counter_bytes: int  # per-counter width of the step-1 table at full scale

    @property
    def terminal_layout(self) -> tuple[str, ...]:
        return self.stages[-1].output if self.stages else self.init_layout

    @property
    def guessed_keys(self) -> tuple[str, ...]:
        return tuple(k for s in self.stages for k in s.guess)

    @property
    def step_count(self) -> int:
        """Steps including the counting step 1."""
        return len(self.stages) + 1

    def guessed_bits(self, cell_width: int) -> int:
        return len(self.guessed_keys) * cell_width

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rounds": self.rounds,
            "init": list(self.init_layout),
            "stages": [s.to_dict() for s in self.stages],
            "terminal": list(self.terminal_layout),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _chain(steps, init) -> list[GuessStage]:
    """Build stages from (guess, terms, merges) specs, deriving the layouts."""
    stages = []
    layout = tuple(init)
    for step, guess, terms, merges in steps:
        consumed = {t.src for t in terms} | {s for _, s in merges}
        kept = [f for f in layout if f not in consumed]
        for t in terms:
            for tgt in t.targets:
                if tgt not in kept:
                    kept.append(tgt)
        for d, _ in merges:
            if d not in kept:
                kept.append(d)
        kept = [f for f in kept if f not in {s for _, s in merges}]
        stages.append(GuessStage(step, tuple(guess), layout, tuple(kept), tuple(terms), tuple(merges)))
        layout = tuple(kept)
    return stages


def schedule_6round(profile: CipherProfile | None = None) -> GuessSchedule:
    """Steps 2-12: guess k7[2,5,11,12] into I1, then k1[0,2,5,8,11,14,15] into I2."""
    init = tuple(f"p{i}" for i in B_CELLS) + tuple(f"c{i}" for i in HULL_OUTPUT_CELLS)
    steps = []
    step = 2
    for i in HULL_OUTPUT_CELLS:
        k = key_name(7, i)
        steps.append((step, (k,), [Term(f"c{i}", k, SboxRef(6, i, True), ("I1",))], []))
        step += 1
    for i in B_CELLS:
        k = key_name(1, i)
        steps.append((step, (k,), [Term(f"p{i}", k, SboxRef(1, i, False), ("I2",))], []))
        step += 1
    return GuessSchedule("6R", 6, init, _chain(steps, init), b_field="I2", h_field="I1", counter_bytes=5)


def _row_targets(j: int) -> tuple[str, ...]:
    return tuple(f"I{r}" for r in HULL_OUTPUT_CELLS if j in DIFFUSION_ROWS[r])


def schedule_7round(profile: CipherProfile | None = None) -> GuessSchedule:
    """Bulk step 2, single-cell steps 3-6 on k8, k1 steps 7-12, combined keys 13-16."""
    c_cells = sorted(set().union(*(DIFFUSION_ROWS[r] for r in HULL_OUTPUT_CELLS)))
    init = tuple(f"p{i}" for i in B_CELLS) + tuple(f"c{j}" for j in c_cells)

    def k8_term(j):
        return Term(f"c{j}", key_name(8, j), SboxRef(7, j, True), _row_targets(j))

    bulk = (1, 2, 3, 4, 6, 7, 9, 10)
    steps = [
        (
            2,
            (key_name(1, 0),) + tuple(key_name(8, j) for j in bulk),
            [Term("p0", key_name(1, 0), SboxRef(1, 0, False), ("I1",))] + [k8_term(j) for j in bulk],
            [],
        )
    ]
    step = 3
    for j in (11, 12, 14, 15):
        steps.append((step, (key_name(8, j),), [k8_term(j)], []))
        step += 1
    for i in B_CELLS[1:]:
        k = key_name(1, i)
        steps.append((step, (k,), [Term(f"p{i}", k, SboxRef(1, i, False), ("I1",))], []))
        step += 1
    prev = None
    for r in HULL_OUTPUT_CELLS:
        k = combined_name(7, r)
        acc = f"I{r}"
        merges = [(acc, prev)] if prev else []
        steps.append((step, (k,), [Term(acc, k, SboxRef(6, r, True), (acc,))], merges))
        prev = acc
        step += 1
    return GuessSchedule("7R", 7, init, _chain(steps, init), b_field="I1", h_field="I12", counter_bytes=1)


def schedule_for(rounds: int, profile: CipherProfile | None = None) -> GuessSchedule:
    if rounds == 6:
        return schedule_6round(profile)
    if rounds == 7:
        return schedule_7round(profile)
    raise ValueError("schedules exist for 6 and 7 rounds")


# -- running a schedule ---------------------------------------------------------------


def stage_guesses(stage: GuessStage, cell_width: int, pinned: dict[str, int]) -> Iterator[dict[str, int]]:
    """Every assignment of the stage's keys, lexicographic, pinned keys held fixed."""
    ranges = [[pinned[k]] if k in pinned else range(1 << cell_width) for k in stage.guess]
    for values in itertools.product(*ranges):
        yield dict(zip(stage.guess, values))


def enumerated_keys(schedule: GuessSchedule, pinned: dict[str, int]) -> tuple[str, ...]:
    return tuple(k for k in schedule.guessed_keys if k not in pinned)


def run_schedule(
    v0: CounterVector,
    schedule: GuessSchedule,
    profile: CipherProfile,
    pinned: dict[str, int] | None = None,
    on_stage: Callable[[int, CounterVector], None] | None = None,
) -> Iterator[tuple[dict[str, int], CounterVector]]:
    """Depth-first over the stages; yields (full guess, terminal counters).

    Only one counter vector per depth is alive at a time.  ``on_stage`` is
    called with (depth, vector) after each stage application.
    """
    pinned = dict(pinned or {})
    w = profile.cell_width

    def walk(depth, v, guess):
        if depth == len(schedule.stages):
            yield dict(guess), v
            return
        stage = schedule.stages[depth]
        for g in stage_guesses(stage, w, pinned):
            nxt = apply_stage(v, stage, g, profile)
            if on_stage is not None:
                on_stage(depth + 1, nxt)
            guess.update(g)
            yield from walk(depth + 1, nxt, guess)
            for k in g:
                del guess[k]

    yield from walk(0, v0, {})


def terminal_dense(v: CounterVector, schedule: GuessSchedule) -> np.ndarray:
    """Terminal counters reordered to the (zb low, zh high) index of ``naive_oracle``."""
    w = v.cell_width
    dense = np.zeros(1 << (2 * w), dtype=np.int64)
    if len(v):
        idx = v.column(schedule.b_field).astype(np.int64) | (v.column(schedule.h_field).astype(np.int64) << w)
        np.add.at(dense, idx, v.counts)
    return dense


@dataclass
class StepCost:
    step: int
    guess: tuple[str, ...]
    log2_counter: float
    log2_guess: float
    log2_cost: float  # in full encryptions
    layout: tuple[str, ...] = field(default=())


def schedule_costs(schedule: GuessSchedule, cell_width: int, log2_N: float) -> list[StepCost]:
    """Cost of each guessing step: |input table| x |keys guessed so far| / (16 rounds).

    The input table size is capped by N (a table of 2^152 indices holds at
    most N nonzero counters).
    """
    costs = []
    guessed = 0
    per = -np.log2(16 * schedule.rounds)
    for stage in schedule.stages:
        guessed += len(stage.guess) * cell_width
        table = min(len(stage.input) * cell_width, log2_N)
        costs.append(StepCost(stage.step, stage.guess, table, guessed, table + guessed + per, stage.input))
    return costs
