"""Key-recovery circuits around the 4-round hull (rounds 2..5).

A circuit evaluates, for one plaintext/ciphertext pair and a key guess, the
two cell values the hull masks are applied to:

* ``zb``: input cell 4 of round 2, i.e. the row-4 sum of first-round S-box
  outputs;
* ``zh``: the sum of round-6 input cells 2, 5, 11, 12, up to a key constant.

The approximation (b, h) then reads ``b.zb ^ h.zh``.  Key cells are named
``k1[0]``, ``k7[2]`` and so on; combined keys as ``k7,2`` (the XOR of round-7
key cells over diffusion row 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cipher import DIFFUSION_ROWS, CipherProfile, PairSet, round_function

HULL_INPUT_CELL = 4
HULL_OUTPUT_CELLS = (2, 5, 11, 12)
B_CELLS = DIFFUSION_ROWS[HULL_INPUT_CELL]


def key_name(round_index: int, cell: int) -> str:
    return f"k{round_index}[{cell}]"


def combined_name(round_index: int, row: int) -> str:
    return f"k{round_index},{row}"


def parse_key_name(name: str) -> tuple[int, int, bool]:
    """``k7[2]`` -> (7, 2, False); ``k7,2`` -> (7, 2, True)."""
    body = name[1:]
    if body.endswith("]"):
        r, c = body[:-1].split("[")
        return int(r), int(c), False
    r, c = body.split(",")
    return int(r), int(c), True


def key_value(name: str, round_keys) -> int:
    """True value of a named key cell (or combined key) from the round keys."""
    r, c, combined = parse_key_name(name)
    keys = np.asarray(round_keys)
    if combined:
        return int(np.bitwise_xor.reduce(keys[r - 1, list(DIFFUSION_ROWS[c])]))
    return int(keys[r - 1, c])


@dataclass(frozen=True)
class Circuit:
    """Direct evaluation of (zb, zh) for the 6- or 7-round attack."""

    profile: CipherProfile
    rounds: int

    def __post_init__(self):
        if self.rounds not in (6, 7):
            raise ValueError("circuits exist for 6 and 7 rounds")
        if self.profile.rounds != self.rounds:
            object.__setattr__(self, "profile", self.profile.with_rounds(self.rounds))

    @property
    def last(self) -> int:
        return self.rounds + 1

    @property
    def plaintext_cells(self) -> tuple[int, ...]:
        return B_CELLS

    @property
    def ciphertext_cells(self) -> tuple[int, ...]:
        if self.rounds == 6:
            return HULL_OUTPUT_CELLS
        return tuple(sorted(set().union(*(DIFFUSION_ROWS[r] for r in HULL_OUTPUT_CELLS))))

    @property
    def data_fields(self) -> tuple[str, ...]:
        return tuple(f"p{i}" for i in self.plaintext_cells) + tuple(f"c{i}" for i in self.ciphertext_cells)

    def data_key(self, field: str) -> str:
        """The key cell XORed onto a data field before its S-box."""
        cell = int(field[1:])
        return key_name(1, cell) if field[0] == "p" else key_name(self.last, cell)

    @property
    def key_names(self) -> tuple[str, ...]:
        names = [self.data_key(f) for f in self.data_fields]
        if self.rounds == 7:
            names += [combined_name(7, r) for r in HULL_OUTPUT_CELLS]
        return tuple(names)

    def true_guess(self, round_keys) -> dict[str, int]:
        return {k: key_value(k, round_keys) for k in self.key_names}

    def extract(self, pairs: PairSet) -> dict[str, np.ndarray]:
        """Data fields of every pair, keyed by field name."""
        if pairs.rounds != self.rounds or pairs.cell_width != self.profile.cell_width:
            raise ValueError(
                f"pair file is {pairs.rounds}-round w={pairs.cell_width}, circuit is "
                f"{self.rounds}-round w={self.profile.cell_width}"
            )
        out = {f"p{i}": pairs.plaintexts[:, i] for i in self.plaintext_cells}
        out.update({f"c{i}": pairs.ciphertexts[:, i] for i in self.ciphertext_cells})
        return out

    # S-box term helpers: the forward first-round box on plaintext cells and the
    # inverse last-round box on ciphertext cells.

    def term(self, field: str, values, key) -> np.ndarray:
        cell = int(field[1:])
        x = np.asarray(values, dtype=np.uint8) ^ np.uint8(key)
        if field[0] == "p":
            return self.profile.sbox(1, cell)[x]
        return self.profile.sbox(self.rounds, cell, inverse=True)[x]

    def row_sbox(self, row: int) -> np.ndarray:
        """S^-1_{6,row}, applied to the diffused row sums in the 7-round circuit."""
        return self.profile.sbox(6, row, inverse=True)

    def evaluate(self, data: dict[str, np.ndarray], guess: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
        """(zb, zh) per pair for a full key guess."""
        zb = 0
        for i in self.plaintext_cells:
            zb = zb ^ self.term(f"p{i}", data[f"p{i}"], guess[key_name(1, i)])
        zh = 0
        if self.rounds == 6:
            for i in HULL_OUTPUT_CELLS:
                zh = zh ^ self.term(f"c{i}", data[f"c{i}"], guess[key_name(7, i)])
        else:
            inner = {j: self.term(f"c{j}", data[f"c{j}"], guess[key_name(8, j)]) for j in self.ciphertext_cells}
            for r in HULL_OUTPUT_CELLS:
                acc = np.uint8(guess[combined_name(7, r)])
                for j in DIFFUSION_ROWS[r]:
                    acc = acc ^ inner[j]
                zh = zh ^ self.row_sbox(r)[acc]
        return np.asarray(zb, dtype=np.uint8), np.asarray(zh, dtype=np.uint8)

    def key_constant(self, round_keys) -> int:
        """The round-6 key term dropped from zh: zh ^ const is the true mask input."""
        return int(np.bitwise_xor.reduce(np.asarray(round_keys)[5, list(HULL_OUTPUT_CELLS)]))


def z_index(zb, zh, cell_width: int) -> np.ndarray:
    """Terminal counter index with zb in the low cell and zh in the high cell."""
    return np.asarray(zb, dtype=np.int64) | (np.asarray(zh, dtype=np.int64) << cell_width)


def naive_oracle(circuit: Circuit, pairs: PairSet, guess: dict[str, int]) -> np.ndarray:
    """Dense terminal counters over 2^(2w) values of (zb, zh), computed pair by pair."""
    w = circuit.profile.cell_width
    counts = np.zeros(1 << (2 * w), dtype=np.int64)
    if len(pairs) == 0:
        return counts
    zb, zh = circuit.evaluate(circuit.extract(pairs), guess)
    np.add.at(counts, z_index(zb, zh, w), 1)
    return counts


def hull_state_check(circuit: Circuit, pairs: PairSet, round_keys) -> bool:
    """Under the true key, zb and zh ^ const must equal the real round-2/round-6 cells."""
    p = circuit.profile
    keys = np.asarray(round_keys)
    m2 = round_function(pairs.plaintexts, keys[0], 1, p)
    m6 = m2
    for r in range(2, 6):
        m6 = round_function(m6, keys[r - 1], r, p)
    zb, zh = circuit.evaluate(circuit.extract(pairs), circuit.true_guess(keys))
    want_h = np.bitwise_xor.reduce(m6[:, list(HULL_OUTPUT_CELLS)], axis=1)
    return bool(np.array_equal(zb, m2[:, HULL_INPUT_CELL]) and np.array_equal(zh ^ circuit.key_constant(keys), want_h))


__all__ = [
    "B_CELLS",
    "Circuit",
    "HULL_INPUT_CELL",
    "HULL_OUTPUT_CELLS",
    "combined_name",
    "hull_state_check",
    "key_name",
    "key_value",
    "naive_oracle",
    "parse_key_name",
    "z_index",
]
