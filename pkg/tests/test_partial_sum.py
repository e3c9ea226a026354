import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zcaria import generate_dataset, random_round_keys
from zcaria import partial_sum as PS
from zcaria.circuits import Circuit, hull_state_check, key_value, naive_oracle, parse_key_name


def _setup(profile, rounds, count, seed):
    p = profile.with_rounds(rounds)
    keys = random_round_keys(p, np.random.default_rng(seed))
    return p, keys, generate_dataset(p, keys, count, seed=seed + 100)


@pytest.mark.parametrize("rounds", [6, 7])
@pytest.mark.parametrize("name", ["toy2", "toy4", "aria8"])
def test_circuit_reproduces_hull_states(name, rounds, request):
    profile = request.getfixturevalue(name)
    p, keys, pairs = _setup(profile, rounds, 2000, 3)
    assert hull_state_check(Circuit(p, rounds), pairs, keys)


def test_key_names():
    assert parse_key_name("k1[0]") == (1, 0, False)
    assert parse_key_name("k7,12") == (7, 12, True)
    with pytest.raises(ValueError):
        parse_key_name("x")
    keys = np.arange(9 * 16, dtype=np.uint8).reshape(9, 16) % 16
    assert key_value("k8[3]", keys) == keys[7, 3]


def test_schedule_shapes():
    six = PS.schedule_for(6)
    assert [s.step for s in six.stages] == list(range(2, 13))
    assert len(six.init_layout) == 11 and six.terminal_layout == ("I1", "I2")
    assert len(six.guessed_keys) == 11
    seven = PS.schedule_for(7)
    assert [s.step for s in seven.stages] == list(range(2, 17))
    assert len(seven.init_layout) == 19 and set(seven.terminal_layout) == {"I1", "I12"}
    assert len(seven.guessed_keys) == 23 and len(seven.stages[0].guess) == 9
    for sched in (six, seven):
        for a, b in zip(sched.stages, sched.stages[1:]):
            assert a.output == b.input
        assert '"stages"' in sched.to_json()
    with pytest.raises(ValueError):
        PS.schedule_for(5)


def test_stage_validation():
    ref = PS.SboxRef(1, 0, False)
    with pytest.raises(ValueError):
        PS.GuessStage(2, ("k",), ("a", "b"), ("a",), ())
    with pytest.raises(ValueError):
        PS.GuessStage(2, ("k",), ("a",), ("a", "z"), (PS.Term("a", "k", ref, ("a",)),))
    with pytest.raises(ValueError):
        PS.GuessStage(2, (), ("a", "b"), ("b",), (PS.Term("a", "k", ref, ("b",)),))
    ok = PS.GuessStage(2, ("k",), ("a", "b"), ("b",), (PS.Term("a", "k", ref, ("b",)),))
    assert ok.computed_states() == ["b ^= S_1,0(a ^ k)"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60),
       st.lists(st.integers(-3, 9), min_size=60, max_size=60))
def test_counter_vector_merge_matches_dense(rows, weights):
    cells = np.array(rows, np.uint8)
    w = np.array(weights[: len(rows)], np.int64)
    v = PS.CounterVector(("a", "b", "c"), 2, cells, w)
    dense = np.zeros(64, np.int64)
    for (a, b, c), x in zip(rows, w):
        dense[a | b << 2 | c << 4] += x
    merged = v.merged()
    assert np.array_equal(merged.to_dense(), dense)
    assert (merged.counts != 0).all()
    assert np.all(np.diff(merged.flat_index()) > 0)
    assert merged.equals(PS.CounterVector.from_dense(("a", "b", "c"), 2, dense))


def test_counter_vector_wide_layout_merge():
    rng = np.random.default_rng(0)
    cells = rng.integers(0, 4, size=(500, 9), dtype=np.uint8)
    cells = np.concatenate([cells, cells[:100]])
    v = PS.CounterVector.from_rows([f"f{i}" for i in range(9)], 8, cells)
    assert v.total == 600 and len(v) == len(np.unique(cells, axis=0))


def test_snapshot_round_trip(tmp_path):
    v = PS.CounterVector.from_rows(("a", "b"), 4, [[1, 2], [1, 2], [15, 0]])
    v.write(tmp_path / "v.bin", tag=3)
    values, tag = PS.read_snapshot((tmp_path / "v.bin").read_bytes())
    assert tag == 3 and np.array_equal(values.astype(np.int64), v.to_dense())
    assert (tmp_path / "v.bin").read_bytes() == v.to_bytes(3)
    with pytest.raises(ValueError):
        PS.read_snapshot(b"nope")
    with pytest.raises(ValueError):
        PS.read_snapshot(v.to_bytes()[:-1])


def test_init_counters_totals(toy4):
    p, keys, pairs = _setup(toy4, 6, 1000, 5)
    v = PS.init_counters(pairs, Circuit(p, 6))
    assert v.total == 1000 and v.fields == Circuit(p, 6).data_fields


@pytest.mark.parametrize("rounds", [6, 7])
def test_run_schedule_matches_oracle_w2(toy2, rounds):
    p, keys, pairs = _setup(toy2, rounds, 3000, 11)
    circuit = Circuit(p, rounds)
    sched = PS.schedule_for(rounds)
    true = circuit.true_guess(keys)
    # free cells spread over early, middle and late stages
    free = [sched.guessed_keys[i] for i in (0, len(sched.guessed_keys) // 2, -1)]
    pins = {k: v for k, v in true.items() if k not in free}
    v0 = PS.init_counters(pairs, circuit)
    seen = 0
    for guess, v in PS.run_schedule(v0, sched, p, pins):
        assert np.array_equal(PS.terminal_dense(v, sched), naive_oracle(circuit, pairs, guess))
        seen += 1
    assert seen == 4**3


def test_run_schedule_enumeration_order(toy2):
    p, keys, pairs = _setup(toy2, 6, 100, 1)
    sched = PS.schedule_for(6)
    true = Circuit(p, 6).true_guess(keys)
    free = ["k7[2]", "k1[15]"]
    pins = {k: v for k, v in true.items() if k not in free}
    order = [(g["k7[2]"], g["k1[15]"]) for g, _ in PS.run_schedule(PS.init_counters(pairs, Circuit(p, 6)), sched, p, pins)]
    assert order == list(itertools.product(range(4), repeat=2))
    assert PS.enumerated_keys(sched, pins) == ("k7[2]", "k1[15]")


def test_run_schedule_on_stage_sizes_shrink(toy4):
    p, keys, pairs = _setup(toy4, 6, 4096, 2)
    sched = PS.schedule_for(6)
    pins = Circuit(p, 6).true_guess(keys)
    sizes = {}
    list(PS.run_schedule(PS.init_counters(pairs, Circuit(p, 6)), sched, p, pins,
                         on_stage=lambda d, v: sizes.setdefault(d, len(v))))
    assert sizes[len(sched.stages)] <= 256
    assert all(sizes[d] <= 4096 for d in sizes)


def test_schedule_costs_six_rounds():
    costs = PS.schedule_costs(PS.schedule_for(6), 8, 124.063)
    assert [c.step for c in costs] == list(range(2, 13))
    assert costs[0].log2_counter == 88 and costs[0].log2_guess == 8
    assert costs[-1].log2_guess == 88
