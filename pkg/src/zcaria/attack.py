"""Attack plans (full-scale complexity accounting) and desk-scale attack runs."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fwht as F
from . import partial_sum as PS
from . import stats
from .cipher import DIFFUSION_ROWS, CipherProfile, PairSet
from .circuits import HULL_OUTPUT_CELLS, Circuit, combined_name, key_name

VARIANTS = ("6r-ps", "6r-fft", "7r-ps", "7r-fft")
MAX_DESK_BITS = 26

COST_CONVENTION = (
    "one pair lookup = one round of encryption; one stage table access = 1/16 of a "
    "round; FFT operations and memory accesses count as one encryption each"
)


def log2_sum(values) -> float:
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    top = max(values)
    return top + math.log2(sum(2.0 ** (v - top) for v in values))


# -- plan mode ------------------------------------------------------------------------


@dataclass
class PlanStep:
    label: str
    log2_cost: float
    unit: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"step": self.label, "log2_cost": round(self.log2_cost, 4), "unit": self.unit, "detail": self.detail}


@dataclass
class AttackPlan:
    variant: str
    rounds: int
    n: int
    l: int
    errs: stats.ErrorProbs
    model: str
    log2_N: float
    tau: float
    steps: list[PlanStep]
    log2_time: float
    log2_memory: float
    guessed_bits: int
    log2_middle: float | None = None  # guessing steps after step 2
    convention: str = COST_CONVENTION

    @property
    def log2_tau(self) -> float:
        return math.log2(self.tau)

    @property
    def log2_wrong_survivors(self) -> float:
        """Expected wrong-key survivors: 2^guessed * beta1."""
        return self.guessed_bits + self.errs.log2_beta1

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "rounds": self.rounds,
            "n": self.n,
            "l": self.l,
            "log2_beta0": self.errs.log2_beta0,
            "log2_beta1": self.errs.log2_beta1,
            "z0": self.errs.z0,
            "z1": self.errs.z1,
            "model": self.model,
            "log2_data": self.log2_N,
            "tau": self.tau,
            "log2_tau": self.log2_tau,
            "log2_time": self.log2_time,
            "log2_memory_bytes": self.log2_memory,
            "log2_middle_steps": self.log2_middle,
            "guessed_key_bits": self.guessed_bits,
            "log2_wrong_key_survivors": self.log2_wrong_survivors,
            "steps": [s.to_dict() for s in self.steps],
            "convention": self.convention,
        }


def _default_errs(rounds: int) -> stats.ErrorProbs:
    return stats.TARGET_6R if rounds == 6 else stats.TARGET_7R


def plan(variant: str, n: int = 128, l: int | None = None, errs: stats.ErrorProbs | None = None) -> AttackPlan:
    """Data, threshold, time and memory of a full-scale attack."""
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    if n % 16:
        raise ValueError("block size must be 16 cells")
    w = n // 16
    rounds = int(variant[0])
    l = 1 << (2 * w) if l is None else l
    errs = _default_errs(rounds) if errs is None else errs
    schedule = PS.schedule_for(rounds)
    per_pair = -math.log2(rounds)

    if variant.endswith("ps"):
        est = stats.required_data_multidim(n, l, errs)
        steps = [PlanStep("1", est.log2_N + per_pair, "enc", "count N pairs, 1/rounds each")]
        costs = PS.schedule_costs(schedule, w, est.log2_N)
        for c in costs:
            steps.append(PlanStep(str(c.step), c.log2_cost, "enc", f"2^{c.log2_counter:g} x 2^{c.log2_guess:g} / {16 * rounds}"))
        middle = log2_sum(c.log2_cost for c in costs if c.step >= 3)
        memory = len(schedule.init_layout) * w + math.log2(schedule.counter_bytes)
        guessed = schedule.guessed_bits(w)
        model = stats.MULTIDIM
    else:
        est = stats.required_data_multiple(n, l, errs)
        circuit_bits = len(schedule.guessed_keys) * w
        data_bits = len(schedule.init_layout) * w
        steps = [
            PlanStep("2", est.log2_N + per_pair, "mem", "count N pairs into the data vector"),
            PlanStep(
                "3",
                math.log2(l) + 2 + math.log2(circuit_bits) + circuit_bits,
                "ops",
                f"{l} approximations x 4 x {circuit_bits} x 2^{circuit_bits}",
            ),
        ]
        middle = None
        memory = data_bits + math.log2(schedule.counter_bytes)
        guessed = circuit_bits
        model = stats.MULTIPLE
    total = log2_sum(s.log2_cost for s in steps)
    return AttackPlan(variant, rounds, n, l, errs, model, est.log2_N, est.tau, steps, total, memory, guessed, middle)


def plan_table(plans: list[AttackPlan]) -> str:
    """Aligned text rows: rounds, technique, data, time, memory."""
    head = f"{'Rounds':<7}{'Technique':<18}{'Data':<14}{'Time':<14}{'Memory':<14}"
    lines = [head, "-" * len(head)]
    for p in plans:
        tech = "ZC.Partial-sum" if p.variant.endswith("ps") else "ZC.FFT"
        lines.append(
            f"{p.rounds:<7}{tech:<18}{f'2^{p.log2_N:.1f} KPs':<14}{f'2^{p.log2_time:.1f} Enc':<14}"
            f"{f'2^{p.log2_memory:.1f} Bytes':<14}"
        )
    return "\n".join(lines)


# -- desk-scale runs ------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    profile: CipherProfile
    rounds: int
    pinned: dict[str, int] = field(default_factory=dict)
    tau: float | None = None
    errs: stats.ErrorProbs = field(default_factory=lambda: stats.ErrorProbs.from_probs(0.25, 0.25))
    true_keys: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        schedule = PS.schedule_for(self.rounds)
        unknown = set(self.pinned) - set(schedule.guessed_keys)
        if unknown:
            raise ValueError(f"pinned cells not guessed by the {self.rounds}-round schedule: {sorted(unknown)}")
        if self.profile.rounds != self.rounds:
            self.profile = self.profile.with_rounds(self.rounds)

    @property
    def schedule(self) -> PS.GuessSchedule:
        return PS.schedule_for(self.rounds)

    @property
    def circuit(self) -> Circuit:
        return Circuit(self.profile, self.rounds)

    @property
    def enumerated(self) -> tuple[str, ...]:
        return PS.enumerated_keys(self.schedule, self.pinned)

    def threshold(self, N: int) -> float:
        """Explicit tau, else mu0 + sigma0 z_(1-beta0) of the multidimensional model."""
        if self.tau is not None:
            return self.tau
        w = self.profile.cell_width
        p = stats.multidim_params(16 * w, N, 1 << (2 * w))
        return p.mu0 + p.sigma0 * self.errs.z0


@dataclass
class AttackResult:
    technique: str
    keys: tuple[str, ...]
    guesses: np.ndarray  # (G, len(keys))
    statistic: np.ndarray  # T scale: (2^m sum V^2 - N^2) / N
    numerator: np.ndarray  # exact integers behind ``statistic``
    tau: float
    N: int
    correlations: np.ndarray | None = None  # (G, 2^(2w)) integer eps, index b | h << w
    right_guess: tuple[int, ...] | None = None
    timings: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def survivors(self) -> np.ndarray:
        return self.guesses[self.statistic < self.tau]

    def right_index(self) -> int | None:
        if self.right_guess is None:
            return None
        hit = np.flatnonzero((self.guesses == np.array(self.right_guess)).all(axis=1))
        return int(hit[0]) if len(hit) else None

    @property
    def right_statistic(self) -> float | None:
        i = self.right_index()
        return None if i is None else float(self.statistic[i])

    @property
    def right_rank(self) -> int | None:
        """1 + number of guesses with a strictly smaller statistic."""
        i = self.right_index()
        return None if i is None else int((self.statistic < self.statistic[i]).sum()) + 1

    def to_dict(self) -> dict:
        return {
            "technique": self.technique,
            "keys": list(self.keys),
            "N": self.N,
            "tau": self.tau,
            "survivors": [[int(v) for v in g] for g in self.survivors],
            "survivor_count": int(len(self.survivors)),
            "guess_count": int(len(self.guesses)),
            "right_guess": None if self.right_guess is None else [int(v) for v in self.right_guess],
            "right_key_statistic": self.right_statistic,
            "right_key_rank": self.right_rank,
            "statistics": {
                "min": float(self.statistic.min()),
                "max": float(self.statistic.max()),
                "mean": float(self.statistic.mean()),
            },
            "seed": self.seed,
            "timings": {k: round(v, 4) for k, v in self.timings.items()},
        }


def _check_guess_space(cfg: ExperimentConfig) -> None:
    bits = len(cfg.enumerated) * cfg.profile.cell_width
    if bits > MAX_DESK_BITS:
        raise ValueError(f"{bits} enumerated key bits exceed the desk limit of {MAX_DESK_BITS}; pin more cells")


def _right_guess(cfg: ExperimentConfig) -> tuple[int, ...] | None:
    if cfg.true_keys is None:
        return None
    true = cfg.circuit.true_guess(cfg.true_keys)
    return tuple(true[k] for k in cfg.enumerated)


def run_partial_sum_attack(cfg: ExperimentConfig, pairs: PairSet, keep_correlations: bool = False) -> AttackResult:
    N = len(pairs)
    if N == 0:
        raise ValueError("no pairs: the statistic is undefined for N = 0")
    _check_guess_space(cfg)
    t0 = time.perf_counter()
    schedule, circuit, w = cfg.schedule, cfg.circuit, cfg.profile.cell_width
    v0 = PS.init_counters(pairs, circuit)
    t1 = time.perf_counter()
    keys = cfg.enumerated
    guesses, nums, corrs = [], [], []
    size = 1 << (2 * w)
    for guess, v in PS.run_schedule(v0, schedule, cfg.profile, cfg.pinned):
        dense = PS.terminal_dense(v, schedule)
        guesses.append([guess[k] for k in keys])
        nums.append(stats.statistic_T_numerator(dense, N))
        if keep_correlations:
            corrs.append(F.fwht(dense))
    t2 = time.perf_counter()
    nums = np.array(nums, dtype=np.int64)
    return AttackResult(
        "ps",
        keys,
        np.array(guesses, dtype=np.int64).reshape(-1, len(keys)),
        nums / N,
        nums,
        cfg.threshold(N),
        N,
        np.array(corrs).reshape(-1, size) if keep_correlations else None,
        _right_guess(cfg),
        {"count": t1 - t0, "guess": t2 - t1},
        cfg.seed,
    )


# FFT layout: each coordinate is one w-bit slot of the circulant index.


@dataclass(frozen=True)
class Coordinate:
    name: str
    key: str | None  # enumerated key living on this coordinate, else fixed at 0


@dataclass
class FFTLayout:
    cfg: ExperimentConfig
    coords: list[Coordinate]

    @property
    def m(self) -> int:
        return len(self.coords) * self.cfg.profile.cell_width

    def index_of(self, name: str) -> int:
        return [c.name for c in self.coords].index(name)


def fft_layout(cfg: ExperimentConfig) -> FFTLayout:
    """Free data cells carry their key; pinned material folds into residual slots."""
    circuit, pinned = cfg.circuit, cfg.pinned
    coords = []
    p_fields = [f for f in circuit.data_fields if f[0] == "p"]
    c_fields = [f for f in circuit.data_fields if f[0] == "c"]
    for f in p_fields:
        if circuit.data_key(f) not in pinned:
            coords.append(Coordinate(f, circuit.data_key(f)))
    if any(circuit.data_key(f) in pinned for f in p_fields):
        coords.append(Coordinate("rb", None))
    for f in c_fields:
        if circuit.data_key(f) not in pinned:
            coords.append(Coordinate(f, circuit.data_key(f)))
    if cfg.rounds == 6:
        if any(circuit.data_key(f) in pinned for f in c_fields):
            coords.append(Coordinate("rh", None))
    else:
        for r in HULL_OUTPUT_CELLS:
            k = combined_name(7, r)
            coords.append(Coordinate(f"row{r}", None if k in pinned else k))
    return FFTLayout(cfg, coords)


def _fft_data(layout: FFTLayout, pairs: PairSet) -> np.ndarray:
    """Per-pair coordinate values (N, coords) including residual sums."""
    cfg, circuit = layout.cfg, layout.cfg.circuit
    data = circuit.extract(pairs)
    pinned = cfg.pinned
    cols = []
    for c in layout.coords:
        if c.name in data:
            cols.append(data[c.name])
        elif c.name == "rb":
            acc = np.zeros(len(pairs), np.uint8)
            for f in data:
                if f[0] == "p" and circuit.data_key(f) in pinned:
                    acc ^= circuit.term(f, data[f], pinned[circuit.data_key(f)])
            cols.append(acc)
        elif c.name == "rh":
            acc = np.zeros(len(pairs), np.uint8)
            for f in data:
                if f[0] == "c" and circuit.data_key(f) in pinned:
                    acc ^= circuit.term(f, data[f], pinned[circuit.data_key(f)])
            cols.append(acc)
        else:
            r = int(c.name[3:])
            acc = np.full(len(pairs), pinned.get(combined_name(7, r), 0), np.uint8)
            for j in DIFFUSION_ROWS[r]:
                k = key_name(8, j)
                if k in pinned:
                    acc ^= circuit.term(f"c{j}", data[f"c{j}"], pinned[k])
            cols.append(acc)
    return np.stack(cols, axis=1)


def _sign_parts(layout: FFTLayout) -> tuple[np.ndarray, np.ndarray]:
    """(Gb, Gh) over every point y of the index space."""
    cfg, circuit = layout.cfg, layout.cfg.circuit
    w = cfg.profile.cell_width
    mask = (1 << w) - 1
    y = np.arange(1 << layout.m, dtype=np.int64)
    slot = {c.name: ((y >> (w * i)) & mask).astype(np.uint8) for i, c in enumerate(layout.coords)}
    gb = np.zeros(len(y), np.uint8)
    gh = np.zeros(len(y), np.uint8)
    for name, vals in slot.items():
        if name == "rb":
            gb ^= vals
        elif name == "rh":
            gh ^= vals
        elif name[0] == "p":
            gb ^= circuit.term(name, vals, 0)
    if cfg.rounds == 6:
        for name, vals in slot.items():
            if name[0] == "c":
                gh ^= circuit.term(name, vals, 0)
    else:
        for r in HULL_OUTPUT_CELLS:
            acc = slot[f"row{r}"].copy()
            for j in DIFFUSION_ROWS[r]:
                if f"c{j}" in slot:
                    acc ^= circuit.term(f"c{j}", slot[f"c{j}"], 0)
            gh ^= circuit.row_sbox(r)[acc]
    return gb, gh


_PARITY = np.array([bin(v).count("1") & 1 for v in range(256)], dtype=np.uint8)


def run_fft_attack(
    cfg: ExperimentConfig, pairs: PairSet, keep_correlations: bool = False, op_counter: F.OpCounter | None = None
) -> AttackResult:
    """Per approximation: sign table, XOR convolution, W accumulation."""
    _check_guess_space(cfg)
    t0 = time.perf_counter()
    layout = fft_layout(cfg)
    if layout.m > MAX_DESK_BITS:
        raise ValueError(f"{layout.m}-bit FFT index exceeds the desk limit of {MAX_DESK_BITS}; pin more cells")
    w = cfg.profile.cell_width
    N = len(pairs)
    keys = cfg.enumerated
    # key index of each enumerated guess, lexicographic in schedule order
    ranges = [np.arange(1 << w)] * len(keys)
    grid = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(len(keys), -1).T if keys else np.zeros((1, 0), int)
    kidx = np.zeros(len(grid), dtype=np.int64)
    for j, k in enumerate(keys):
        pos = [c.key for c in layout.coords].index(k)
        kidx |= grid[:, j].astype(np.int64) << (w * pos)
    size = 1 << (2 * w)
    W = np.zeros(len(grid), dtype=np.int64)
    corrs = np.zeros((len(grid), size), dtype=np.int64) if keep_correlations else None
    if N == 0:
        # no data: every correlation and W is zero, so every key survives any tau > 0
        tau = cfg.tau if cfg.tau is not None else cfg.threshold(1)
        return AttackResult("fft", keys, grid.astype(np.int64), W.astype(float), W, tau, 0, corrs,
                            _right_guess(cfg), {}, cfg.seed)
    vals = _fft_data(layout, pairs)
    flat = np.zeros(N, dtype=np.int64)
    for i in range(vals.shape[1]):
        flat |= vals[:, i].astype(np.int64) << (w * i)
    x = np.bincount(flat, minlength=1 << layout.m).astype(np.int64)
    x_hat = F.fwht(x, op_counter)
    gb, gh = _sign_parts(layout)
    t1 = time.perf_counter()
    for h in range(1 << w):
        ph = _PARITY[gh & h]
        for b in range(1 << w):
            if b == 0 and h == 0:
                if keep_correlations:
                    corrs[:, 0] = N
                continue
            table = F.SignTable(layout.m, _PARITY[gb & b] ^ ph)
            eps = F.xor_convolve(table, None, counter=op_counter, counters_hat=x_hat)[kidx]
            W += eps * eps
            if keep_correlations:
                corrs[:, b | (h << w)] = eps
    t2 = time.perf_counter()
    return AttackResult(
        "fft",
        keys,
        grid.astype(np.int64),
        W / N,
        W,
        cfg.threshold(N),
        N,
        corrs,
        _right_guess(cfg),
        {"setup": t1 - t0, "transform": t2 - t1},
        cfg.seed,
    )


# -- calibration ----------------------------------------------------------------------


@dataclass
class ErrorRates:
    beta0_hat: float  # right (balanced) source rejected: T >= tau
    beta1_hat: float  # wrong (random) source accepted: T < tau
    tau: float
    right_T: np.ndarray
    wrong_T: np.ndarray
    params: stats.DistParams

    def to_dict(self) -> dict:
        return {
            "beta0_hat": self.beta0_hat,
            "beta1_hat": self.beta1_hat,
            "tau": self.tau,
            "mu0": self.params.mu0,
            "sigma0": self.params.sigma0,
            "mu1": self.params.mu1,
            "sigma1": self.params.sigma1,
            "mean_right_T": float(self.right_T.mean()),
            "mean_wrong_T": float(self.wrong_T.mean()),
            "trials": int(len(self.right_T)),
        }


def measure_error_rates(
    n: int,
    l: int,
    N: int,
    trials: int,
    seed: int,
    errs: stats.ErrorProbs | None = None,
    tau: float | None = None,
) -> ErrorRates:
    """Empirical error rates of the T test against synthetic balanced/random sources."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = stats.multidim_params(n, N, l)
    if tau is None:
        errs = errs or stats.ErrorProbs.from_probs(0.25, 0.25)
        tau = params.mu0 + params.sigma0 * errs.z0
    rng = np.random.default_rng(seed)
    right = stats.statistic_T_batch(stats.balanced_counts(rng, n, N, l, trials))
    wrong = stats.statistic_T_batch(stats.random_function_counts(rng, n, N, l, trials))
    return ErrorRates(float((right >= tau).mean()), float((wrong < tau).mean()), tau, right, wrong, params)
