import math

import numpy as np
import pytest

from zcaria import PairSet, generate_dataset, random_round_keys
from zcaria import attack as A
from zcaria import stats
from zcaria.circuits import Circuit


def _config(profile, rounds, free, seed, count):
    p = profile.with_rounds(rounds)
    keys = random_round_keys(p, np.random.default_rng(seed))
    pairs = generate_dataset(p, keys, count, seed=seed + 1)
    true = Circuit(p, rounds).true_guess(keys)
    pins = {k: v for k, v in true.items() if k not in free}
    return A.ExperimentConfig(p, rounds, pins, true_keys=keys, seed=seed), pairs


def test_log2_sum():
    assert A.log2_sum([3, 3]) == pytest.approx(4)
    assert A.log2_sum([100, 0]) == pytest.approx(100, abs=1e-12)


def test_plan_figures():
    got = {v: A.plan(v) for v in A.VARIANTS}
    assert got["6r-ps"].log2_N == pytest.approx(124.063, abs=0.01)
    assert got["6r-ps"].log2_time == pytest.approx(121.479, abs=0.01)
    assert got["6r-ps"].log2_memory == pytest.approx(90.322, abs=0.01)
    assert got["6r-ps"].log2_middle == pytest.approx(108.004, abs=0.01)
    assert got["6r-fft"].log2_time == pytest.approx(121.579, abs=0.01)
    assert got["7r-ps"].log2_time == pytest.approx(202.798, abs=0.01)
    assert got["7r-ps"].log2_memory == pytest.approx(152, abs=0.01)
    assert got["7r-fft"].log2_time == pytest.approx(209.524, abs=0.01)
    for p in got.values():
        assert p.log2_wrong_survivors == pytest.approx(-2)
        assert p.to_dict()["convention"] == A.COST_CONVENTION


def test_plan_rejects_unknown_variant():
    with pytest.raises(ValueError):
        A.plan("5r-ps")
    with pytest.raises(ValueError):
        A.plan("6r-ps", n=100)


def test_plan_table_rows():
    table = A.plan_table([A.plan(v) for v in A.VARIANTS])
    lines = table.splitlines()
    assert len(lines) == 6 and "ZC.FFT" in lines[-1] and "2^209.5 Enc" in lines[-1]


def test_config_rejects_foreign_pins(toy4):
    with pytest.raises(ValueError):
        A.ExperimentConfig(toy4, 6, {"k8[0]": 1})


def test_desk_limit(toy4):
    cfg = A.ExperimentConfig(toy4, 6, {})
    pairs = generate_dataset(toy4, random_round_keys(toy4, np.random.default_rng(0)), 16, seed=0)
    with pytest.raises(ValueError):
        A.run_partial_sum_attack(cfg, pairs)
    with pytest.raises(ValueError):
        A.run_fft_attack(cfg, pairs)


def test_empty_pairs_rejected(toy4):
    cfg = A.ExperimentConfig(toy4, 6, {})
    empty = PairSet(4, 6, np.zeros((0, 16)), np.zeros((0, 16)))
    with pytest.raises(ValueError):
        A.run_partial_sum_attack(cfg, empty)
    cfg = A.ExperimentConfig(toy4, 6, {k: 0 for k in A.PS.schedule_for(6).guessed_keys if k != "k7[2]"})
    res = A.run_fft_attack(cfg, empty)
    assert (res.numerator == 0).all() and len(res.survivors) == 16


def test_infinite_threshold_keeps_everything(toy4):
    cfg, pairs = _config(toy4, 6, ["k1[15]", "k7[2]"], 9, 2048)
    cfg.tau = math.inf
    assert len(A.run_partial_sum_attack(cfg, pairs).survivors) == 256


def test_right_key_statistic_follows_model(toy4):
    cfg, pairs = _config(toy4, 6, ["k7[2]"], 13, 1 << 20)
    res = A.run_partial_sum_attack(cfg, pairs)
    p = stats.multidim_params(64, 1 << 20, 256)
    assert abs(res.right_statistic - p.mu0) <= 3 * p.sigma0


@pytest.mark.parametrize("rounds,free", [(6, ["k7[2]", "k1[0]", "k1[15]"]), (7, ["k1[0]", "k8[12]", "k7,2"])])
def test_techniques_agree_w2(toy2, rounds, free):
    cfg, pairs = _config(toy2, rounds, free, 21, 5000)
    ps = A.run_partial_sum_attack(cfg, pairs, keep_correlations=True)
    ff = A.run_fft_attack(cfg, pairs, keep_correlations=True)
    assert ps.keys == ff.keys
    assert np.array_equal(ps.guesses, ff.guesses)
    assert np.array_equal(ps.numerator, ff.numerator)
    assert np.array_equal(ps.correlations, ff.correlations)
    assert np.array_equal(ps.survivors, ff.survivors)
    assert ps.right_index() is not None


def test_statistic_equals_T_of_terminal_counters(toy4):
    cfg, pairs = _config(toy4, 6, ["k1[15]"], 5, 4096)
    res = A.run_partial_sum_attack(cfg, pairs)
    i = res.right_index()
    dense = np.zeros(256, np.int64)
    zb, zh = cfg.circuit.evaluate(cfg.circuit.extract(pairs), cfg.circuit.true_guess(cfg.true_keys))
    np.add.at(dense, zb.astype(np.int64) | zh.astype(np.int64) << 4, 1)
    assert res.statistic[i] == pytest.approx(stats.statistic_T(dense, 4096))
    assert 1 <= res.right_rank <= 16
    d = res.to_dict()
    assert d["guess_count"] == 16 and d["N"] == 4096


def test_threshold_default_and_override(toy4):
    cfg = A.ExperimentConfig(toy4, 6, {})
    p = stats.multidim_params(64, 4096, 256)
    assert cfg.threshold(4096) == pytest.approx(p.mu0 + p.sigma0 * stats.upper_quantile(-2))
    assert A.ExperimentConfig(toy4, 6, {}, tau=3.0).threshold(4096) == 3.0


def test_error_rates_extreme_thresholds():
    never = A.measure_error_rates(12, 8, 512, 50, seed=0, tau=math.inf)
    assert never.beta0_hat == 0 and never.beta1_hat == 1
    always = A.measure_error_rates(12, 8, 512, 50, seed=0, tau=0.0)
    assert always.beta0_hat == 1 and always.beta1_hat == 0
    with pytest.raises(ValueError):
        A.measure_error_rates(12, 8, 512, 0, seed=0)


def test_error_rates_reproducible():
    a = A.measure_error_rates(14, 16, 1 << 10, 30, seed=5)
    b = A.measure_error_rates(14, 16, 1 << 10, 30, seed=5)
    assert np.array_equal(a.right_T, b.right_T) and a.to_dict() == b.to_dict()


def test_fft_layout_coordinates(toy4):
    cfg = A.ExperimentConfig(toy4, 7, {k: 0 for k in A.PS.schedule_for(7).guessed_keys if k != "k7,5"})
    layout = A.fft_layout(cfg)
    names = [c.name for c in layout.coords]
    assert names == ["rb", "row2", "row5", "row11", "row12"]
    assert [c.key for c in layout.coords][2] == "k7,5"
    assert layout.m == 20
