"""Width-parametric ARIA-style SPN.

A state is 16 cells of ``w`` bits, held as a ``uint8`` array whose last axis has
length 16 (batches are ``(N, 16)``).  One round is key addition, a substitution
layer and the 16x16 binary diffusion layer; the last round replaces the
diffusion layer by a second key addition, so ``r`` rounds consume ``r + 1``
round keys.
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import gf2

# Row i lists the input cells XORed into output cell i.  Row 7 uses cell 8
# (not 9): that is the only reading under which the map is symmetric and an
# involution, which the attacks rely on.
DIFFUSION_ROWS: tuple[tuple[int, ...], ...] = (
    (3, 4, 6, 8, 9, 13, 14),
    (2, 5, 7, 8, 9, 12, 15),
    (1, 4, 6, 10, 11, 12, 15),
    (0, 5, 7, 10, 11, 13, 14),
    (0, 2, 5, 8, 11, 14, 15),
    (1, 3, 4, 9, 10, 14, 15),
    (0, 2, 7, 9, 10, 12, 13),
    (1, 3, 6, 8, 11, 12, 13),
    (0, 1, 4, 7, 10, 13, 15),
    (0, 1, 5, 6, 11, 12, 14),
    (2, 3, 5, 6, 8, 13, 15),
    (2, 3, 4, 7, 9, 12, 14),
    (1, 2, 6, 7, 9, 11, 12),
    (0, 3, 6, 7, 8, 10, 13),
    (0, 3, 4, 5, 9, 11, 14),
    (1, 2, 4, 5, 8, 10, 15),
)

DIFFUSION_MATRIX = np.zeros((16, 16), dtype=np.uint8)
for _i, _row in enumerate(DIFFUSION_ROWS):
    DIFFUSION_MATRIX[_i, list(_row)] = 1

CELLS = 16
WIDTHS = (2, 4, 8)
LAYER_TOKENS = ("S1", "S2", "S1i", "S2i")
_TOKEN_INVERSE = {"S1": "S1i", "S2": "S2i", "S1i": "S1", "S2i": "S2"}

PROFILE_DIR_ENV = "ZCARIA_PROFILE_DIR"


class ProfileError(ValueError):
    """Raised for malformed or inconsistent cipher profiles."""


class PairFileError(ValueError):
    """Raised for malformed pair files."""


def column_support(cell: int) -> tuple[int, ...]:
    """Output cells reached by input ``cell`` through the diffusion layer."""
    return tuple(int(i) for i in np.flatnonzero(DIFFUSION_MATRIX[:, cell]))


def _invert_table(table: np.ndarray) -> np.ndarray:
    inv = np.empty_like(table)
    inv[table] = np.arange(table.size, dtype=table.dtype)
    return inv


@dataclass(frozen=True, eq=False)
class CipherProfile:
    """Cell width, the two S-boxes and the round/layer configuration.

    ``layer`` is the type-1 substitution layer: a pattern of S-box tokens
    repeated over the 16 positions.  Type-2 layers (even rounds) use the
    inverse of each token.
    """

    cell_width: int
    sbox1: np.ndarray
    sbox2: np.ndarray
    rounds: int = 6
    layer: tuple[str, ...] = ("S1", "S2", "S1i", "S2i")
    name: str = "custom"
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        w = self.cell_width
        if w not in WIDTHS:
            raise ProfileError(f"cell width must be one of {WIDTHS}, got {w}")
        if self.rounds < 1:
            raise ProfileError("rounds must be >= 1")
        if not self.layer or CELLS % len(self.layer):
            raise ProfileError("layer pattern length must divide 16")
        for tok in self.layer:
            if tok not in LAYER_TOKENS:
                raise ProfileError(f"unknown layer token {tok!r}")
        boxes = {}
        for label in ("sbox1", "sbox2"):
            table = np.asarray(getattr(self, label), dtype=np.uint8)
            if table.shape != (1 << w,) or sorted(table.tolist()) != list(range(1 << w)):
                raise ProfileError(f"{label} is not a permutation of 0..{(1 << w) - 1}")
            object.__setattr__(self, label, table)
            boxes[label] = table
        self._tables.update(
            S1=boxes["sbox1"],
            S2=boxes["sbox2"],
            S1i=_invert_table(boxes["sbox1"]),
            S2i=_invert_table(boxes["sbox2"]),
        )

    @property
    def cell_mask(self) -> int:
        return (1 << self.cell_width) - 1

    @property
    def block_bits(self) -> int:
        return CELLS * self.cell_width

    def with_rounds(self, rounds: int) -> "CipherProfile":
        return replace(self, rounds=rounds, _tables={})

    def layer_type(self, round_index: int) -> int:
        """1 for odd rounds, 2 for even rounds."""
        self._check_round(round_index)
        return 1 if round_index % 2 else 2

    def _check_round(self, round_index: int) -> None:
        if not 1 <= round_index <= self.rounds:
            raise IndexError(f"round {round_index} outside 1..{self.rounds}")

    def sbox_token(self, round_index: int, position: int, inverse: bool = False) -> str:
        tok = self.layer[position % len(self.layer)]
        if self.layer_type(round_index) == 2:
            tok = _TOKEN_INVERSE[tok]
        return _TOKEN_INVERSE[tok] if inverse else tok

    def sbox(self, round_index: int, position: int, inverse: bool = False) -> np.ndarray:
        """Table of S_{round,position} (or its inverse)."""
        return self._tables[self.sbox_token(round_index, position, inverse)]

    def layer_tables(self, round_index: int, inverse: bool = False) -> np.ndarray:
        """``(16, 2^w)`` array: row i is the table applied at position i."""
        key = ("layer", round_index, inverse)
        if key not in self._tables:
            self._tables[key] = np.stack(
                [self.sbox(round_index, i, inverse) for i in range(CELLS)]
            )
        return self._tables[key]


def _parse_hex_table(text: str, width: int) -> np.ndarray:
    digits = 2 if width == 8 else 1
    text = text.strip().lower()
    if len(text) != digits << width or not re.fullmatch(r"[0-9a-f]+", text):
        raise ProfileError(f"S-box hex string must have {digits << width} hex digits")
    return np.array(
        [int(text[i : i + digits], 16) for i in range(0, len(text), digits)], dtype=np.uint8
    )


def parse_profile(text: str) -> CipherProfile:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProfileError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key.lower()] = value
    missing = {"width", "sbox1", "sbox2"} - entries.keys()
    if missing:
        raise ProfileError(f"profile missing keys: {sorted(missing)}")
    try:
        width = int(entries["width"])
        rounds = int(entries.get("rounds", 6))
    except ValueError as exc:
        raise ProfileError(str(exc)) from None
    if width not in WIDTHS:
        raise ProfileError(f"cell width must be one of {WIDTHS}, got {width}")
    layer = tuple(entries.get("layer", "S1 S2 S1i S2i").replace(",", " ").split())
    return CipherProfile(
        cell_width=width,
        sbox1=_parse_hex_table(entries["sbox1"], width),
        sbox2=_parse_hex_table(entries["sbox2"], width),
        rounds=rounds,
        layer=layer,
        name=entries.get("name", "custom"),
    )


def format_profile(profile: CipherProfile) -> str:
    fmt = "%02x" if profile.cell_width == 8 else "%x"
    return "\n".join(
        [
            f"name = {profile.name}",
            f"width = {profile.cell_width}",
            f"rounds = {profile.rounds}",
            "sbox1 = " + "".join(fmt % v for v in profile.sbox1),
            "sbox2 = " + "".join(fmt % v for v in profile.sbox2),
            "layer = " + " ".join(profile.layer),
            "",
        ]
    )


def load_profile(ref: str | os.PathLike, rounds: int | None = None) -> CipherProfile:
    """Load a profile from a path, or by name from $ZCARIA_PROFILE_DIR or the bundled set."""
    path = Path(ref)
    if not path.is_file():
        candidates = []
        env_dir = os.environ.get(PROFILE_DIR_ENV)
        if env_dir:
            candidates.append(Path(env_dir) / f"{ref}.profile")
        bundled = resources.files("zcaria") / "profiles" / f"{ref}.profile"
        candidates.append(Path(str(bundled)))
        path = next((c for c in candidates if c.is_file()), None)
        if path is None:
            raise ProfileError(f"no profile named or located at {ref!r}")
    profile = parse_profile(path.read_text())
    return profile.with_rounds(rounds) if rounds is not None else profile


def as_state(state, profile: CipherProfile | None = None) -> np.ndarray:
    arr = np.asarray(state, dtype=np.uint8)
    if arr.shape[-1:] != (CELLS,):
        raise ValueError(f"state must have 16 cells, got shape {arr.shape}")
    if profile is not None and arr.size and int(arr.max()) > profile.cell_mask:
        raise ValueError(f"cell value exceeds {profile.cell_width} bits")
    return arr


def substitute(state, round_index: int, profile: CipherProfile, inverse: bool = False) -> np.ndarray:
    """Apply the round's substitution layer (or its inverse) cell by cell."""
    tables = profile.layer_tables(round_index, inverse)
    return tables[np.arange(CELLS), as_state(state, profile)]


def diffuse(state) -> np.ndarray:
    """Binary diffusion layer; works unchanged for any cell width."""
    x = as_state(state)
    out = np.empty_like(x)
    for i, row in enumerate(DIFFUSION_ROWS):
        out[..., i] = np.bitwise_xor.reduce(x[..., list(row)], axis=-1)
    return out


def round_function(state, key, round_index: int, profile: CipherProfile) -> np.ndarray:
    """One full round: key addition, substitution, diffusion."""
    return diffuse(substitute(as_state(state) ^ as_state(key), round_index, profile))


def _check_keys(keys, profile: CipherProfile) -> np.ndarray:
    keys = as_state(keys, profile)
    if keys.shape != (profile.rounds + 1, CELLS):
        raise ValueError(
            f"{profile.rounds}-round profile needs {profile.rounds + 1} round keys, "
            f"got {keys.shape[0] if keys.ndim == 2 else keys.shape}"
        )
    return keys


def encrypt(pt, keys, profile: CipherProfile) -> np.ndarray:
    keys = _check_keys(keys, profile)
    x = as_state(pt, profile)
    last = profile.rounds
    for r in range(1, last):
        x = round_function(x, keys[r - 1], r, profile)
    return substitute(x ^ keys[last - 1], last, profile) ^ keys[last]


def decrypt(ct, keys, profile: CipherProfile) -> np.ndarray:
    keys = _check_keys(keys, profile)
    last = profile.rounds
    x = substitute(as_state(ct, profile) ^ keys[last], last, profile, inverse=True) ^ keys[last - 1]
    for r in range(last - 1, 0, -1):
        x = substitute(diffuse(x), r, profile, inverse=True) ^ keys[r - 1]
    return x


def random_round_keys(profile: CipherProfile, rng: np.random.Generator) -> np.ndarray:
    """Independent round keys (no key schedule)."""
    return rng.integers(0, 1 << profile.cell_width, size=(profile.rounds + 1, CELLS), dtype=np.uint8)


# -- packing -------------------------------------------------------------------------


def pack_states(states, cell_width: int) -> bytes:
    """Little-endian packing, cell 0 in the least significant bits."""
    x = np.asarray(states, dtype=np.uint8).reshape(-1, CELLS)
    per = 8 // cell_width
    grouped = x.reshape(len(x), CELLS // per, per).astype(np.uint8)
    shifts = (np.arange(per) * cell_width).astype(np.uint8)
    packed = np.bitwise_or.reduce(grouped << shifts, axis=-1).astype(np.uint8)
    return packed.tobytes()


def unpack_states(data: bytes, cell_width: int) -> np.ndarray:
    per = 8 // cell_width
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, CELLS // per)
    shifts = (np.arange(per) * cell_width).astype(np.uint8)
    cells = (raw[..., None] >> shifts) & ((1 << cell_width) - 1)
    return cells.reshape(len(raw), CELLS).astype(np.uint8)


def states_to_ints(states, cell_width: int) -> list[int]:
    data = pack_states(states, cell_width)
    size = 2 * cell_width
    return [int.from_bytes(data[i : i + size], "little") for i in range(0, len(data), size)]


def ints_to_states(values, cell_width: int) -> np.ndarray:
    size = 2 * cell_width
    data = b"".join(int(v).to_bytes(size, "little") for v in values)
    return unpack_states(data, cell_width)


# -- pair files ----------------------------------------------------------------------

PAIR_MAGIC = b"ZCPF"
PAIR_VERSION = 1
_PAIR_HEADER = struct.Struct("<4sBBBBQ")


@dataclass(eq=False)
class PairSet:
    """Known plaintext/ciphertext pairs, each an ``(N, 16)`` cell array."""

    cell_width: int
    rounds: int
    plaintexts: np.ndarray
    ciphertexts: np.ndarray

    def __post_init__(self):
        self.plaintexts = np.asarray(self.plaintexts, dtype=np.uint8).reshape(-1, CELLS)
        self.ciphertexts = np.asarray(self.ciphertexts, dtype=np.uint8).reshape(-1, CELLS)
        if self.plaintexts.shape != self.ciphertexts.shape:
            raise PairFileError("plaintext and ciphertext counts differ")

    def __len__(self) -> int:
        return len(self.plaintexts)

    def to_bytes(self) -> bytes:
        header = _PAIR_HEADER.pack(
            PAIR_MAGIC, PAIR_VERSION, self.cell_width, self.rounds, 0, len(self)
        )
        records = np.empty((len(self), 2, CELLS), dtype=np.uint8)
        records[:, 0] = self.plaintexts
        records[:, 1] = self.ciphertexts
        return header + pack_states(records.reshape(-1, CELLS), self.cell_width)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PairSet":
        if len(data) < _PAIR_HEADER.size:
            raise PairFileError("truncated pair file header")
        magic, version, width, rounds, _, count = _PAIR_HEADER.unpack_from(data)
        if magic != PAIR_MAGIC:
            raise PairFileError(f"bad magic {magic!r}")
        if version != PAIR_VERSION:
            raise PairFileError(f"unsupported pair file version {version}")
        if width not in WIDTHS:
            raise PairFileError(f"bad cell width {width}")
        body = data[_PAIR_HEADER.size :]
        if len(body) != count * 2 * 2 * width:
            raise PairFileError(f"expected {count} records, body has {len(body)} bytes")
        states = unpack_states(body, width).reshape(count, 2, CELLS)
        return cls(width, rounds, states[:, 0], states[:, 1])

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "PairSet":
        return cls.from_bytes(Path(path).read_bytes())


def distinct_plaintexts(profile: CipherProfile, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct random states, in a seed-determined order."""
    bits = profile.block_bits
    if count < 1:
        raise ValueError("count must be >= 1")
    if bits < 64 and count > (1 << bits):
        raise ValueError(f"count {count} exceeds the 2^{bits} codebook")
    if bits <= 32 and count > (1 << bits) // 4:
        values = rng.permutation(1 << bits)[:count].astype(np.uint64)
        return _ints_to_cells(values, profile.cell_width)
    chosen = np.empty((0, CELLS), dtype=np.uint8)
    row_type = np.dtype((np.void, CELLS))
    while len(chosen) < count:
        batch = rng.integers(0, 1 << profile.cell_width, size=(count - len(chosen), CELLS), dtype=np.uint8)
        rows = np.concatenate([chosen, batch])
        _, first = np.unique(rows.view(row_type).ravel(), return_index=True)
        chosen = rows[np.sort(first)]
    return chosen


def _ints_to_cells(values: np.ndarray, cell_width: int) -> np.ndarray:
    shifts = (np.arange(CELLS, dtype=np.uint64) * np.uint64(cell_width))
    return ((values[:, None] >> shifts) & np.uint64((1 << cell_width) - 1)).astype(np.uint8)


def generate_dataset(
    profile: CipherProfile, keys, count: int, seed: int, path=None
) -> PairSet:
    """Encrypt ``count`` distinct random plaintexts; optionally write the pair file."""
    rng = np.random.default_rng(seed)
    pts = distinct_plaintexts(profile, count, rng)
    pairs = PairSet(profile.cell_width, profile.rounds, pts, encrypt(pts, keys, profile))
    if path is not None:
        pairs.write(path)
    return pairs


def diffusion_is_involution() -> bool:
    return gf2.matmul(DIFFUSION_MATRIX, DIFFUSION_MATRIX).tolist() == np.eye(CELLS, dtype=np.uint8).tolist()
