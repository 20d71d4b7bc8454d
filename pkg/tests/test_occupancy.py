import math
from collections import Counter

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from partsim import occupancy
from partsim.errors import CapacityError, DomainError
from partsim.freq import AtomGroup, FrequencySequence, make_example_bosz, make_power_law
from partsim.occupancy import (BlockSpectrum, exact_mean_spectrum, phi, phi_r, phi_r_all,
                               sample_fixed, sample_poissonized)


def seq_of(*groups, dust=None):
    return FrequencySequence.from_groups([AtomGroup(v, m) for v, m in groups], dust=dust)


PURE_DUST = FrequencySequence.from_arrays([], [], dust=1.0)
ONE_BOX = seq_of((1.0, 1))
TWO_HALVES = seq_of((0.5, 2))


def random_sequence(rng, n_groups=6, dust=0.2):
    v = np.sort(rng.uniform(0.001, 0.3, n_groups))[::-1]
    m = rng.integers(1, 50, n_groups)
    v = v * (1 - dust) / (v * m).sum()
    return FrequencySequence.from_arrays(v, m)


def test_block_spectrum_invariants():
    s = BlockSpectrum.from_sizes([3, 1, 1, 2])
    assert s.counts == {1: 2, 2: 1, 3: 1} and s.sample_size == 7 and s.check()
    assert not BlockSpectrum(5, {1: 2}).check()


def test_fixed_trivial(rng):
    assert sample_fixed(ONE_BOX, 7, rng).counts == {7: 1}
    s = sample_fixed(PURE_DUST, 5, rng)
    assert s.counts == {1: 5} and s.singleton_dust == 5


def test_fixed_two_boxes(rng):
    tally = Counter(tuple(sorted(sample_fixed(TWO_HALVES, 2, rng).counts.items()))
                    for _ in range(20000))
    assert tally[((1, 2),)] / 20000 == pytest.approx(0.5, abs=0.015)
    assert tally[((2, 1),)] / 20000 == pytest.approx(0.5, abs=0.015)


def test_fixed_errors(rng):
    with pytest.raises(DomainError):
        sample_fixed(ONE_BOX, 0, rng)
    with pytest.raises(CapacityError):
        sample_fixed(ONE_BOX, occupancy.FIXED_N_BUDGET + 1, rng)


@given(st.integers(1, 400), st.integers(0, 2**32 - 1))
def test_fixed_sizes_sum_to_n(n, seed):
    rng = np.random.default_rng(seed)
    seq = random_sequence(rng)
    s = sample_fixed(seq, n, rng)
    assert s.check() and s.sample_size == n


def test_poissonized_degenerate(rng):
    draws = [sample_poissonized(ONE_BOX, 3.0, rng) for _ in range(20000)]
    assert all(len(d.counts) <= 1 for d in draws)
    for r in (1, 2, 3, 5):
        mean = np.mean([d.k(r) for d in draws])
        assert mean == pytest.approx(3 ** r * math.exp(-3) / math.factorial(r), abs=0.015)


def test_poissonized_bosz_group(rng):
    seq = FrequencySequence.from_groups([AtomGroup(math.exp(-8), 131)])
    exact = phi_r(seq, math.exp(8), 2)
    assert exact == pytest.approx(131 * math.exp(-1) / 2, rel=1e-12)
    assert exact == pytest.approx(24.0961, abs=1e-4)
    x = np.array([sample_poissonized(seq, math.exp(8), rng).k(2) for _ in range(4000)])
    assert abs(x.mean() - exact) < 4 * x.std() / math.sqrt(len(x))


def test_poissonized_small_t(rng):
    seq = make_example_bosz(2)
    empty = sum(sample_poissonized(seq, 1e-9, rng).n_blocks == 0 for _ in range(200))
    assert empty >= 199
    with pytest.raises(DomainError):
        sample_poissonized(seq, 0.0, rng)


def test_poissonized_huge_time_rejected(rng):
    with pytest.raises(CapacityError):
        sample_poissonized(make_example_bosz(5), math.exp(64), rng)


def _naive(seq, t, rng):
    lam = np.repeat(t * seq.values, seq.counts.astype(np.int64))
    x = rng.poisson(lam)
    dust = int(rng.poisson(t * seq.dust))
    return BlockSpectrum.from_sizes(np.concatenate([x[x > 0], np.ones(dust, dtype=np.int64)]))


@pytest.mark.parametrize("expand_limit", [0, 256])
def test_group_sampler_matches_naive(expand_limit, monkeypatch):
    """Chi-square on the number of occupied boxes and of singletons."""
    monkeypatch.setattr(occupancy, "EXPAND_LIMIT", expand_limit)
    seq = seq_of((0.2, 2), (0.05, 6), (0.02, 12))  # 20 boxes
    t = 30.0
    R = 40_000
    g_rng, n_rng = np.random.default_rng(1), np.random.default_rng(2)
    grouped = [sample_poissonized(seq, t, g_rng) for _ in range(R)]
    naive = [_naive(seq, t, n_rng) for _ in range(R)]
    for stat in (lambda s: s.n_blocks, lambda s: s.k(1), lambda s: s.k(2)):
        a = Counter(stat(s) for s in grouped)
        b = Counter(stat(s) for s in naive)
        keys = sorted(set(a) | set(b))
        table = np.array([[a[k] for k in keys], [b[k] for k in keys]])
        table = table[:, table.sum(axis=0) >= 10]
        p = stats.chi2_contingency(table)[1]
        assert p > 0.001


def test_poissonized_huge_group_mean(rng):
    seq = make_example_bosz(3)
    t = math.exp(27)
    x = np.array([sample_poissonized(seq, t, rng).k(2) for _ in range(40)], dtype=float)
    exact = phi_r(seq, t, 2)
    assert abs(x.mean() - exact) < 4 * x.std(ddof=1) / math.sqrt(len(x)) + 1e-9 * exact


def test_phi_examples():
    assert phi(ONE_BOX, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert phi(TWO_HALVES, 2.0) == pytest.approx(2 * (1 - math.exp(-1)), rel=1e-15)
    assert phi_r(ONE_BOX, 2.0, 3) == pytest.approx(8 / 6 * math.exp(-2), rel=1e-14)
    with pytest.raises(DomainError):
        phi(ONE_BOX, -1.0)
    with pytest.raises(DomainError):
        phi_r(ONE_BOX, 1.0, 0)


def _quadrature_phi(seq, t):
    """t * int_0^1 e^{-tx} G(x) dx with G a step function, plus the dust term."""
    edges = [0.0] + sorted(seq.values.tolist()) + [1.0]
    cum = np.cumsum([int(c) for c in seq.counts])[::-1]  # G on each interval, ascending x
    total = mpmath.mpf(0)
    mpmath.mp.dps = 30
    for i in range(len(edges) - 2):
        g = int(cum[i])
        a, b = edges[i], edges[i + 1]
        total += g * mpmath.quad(lambda x: mpmath.exp(-t * x), [a, b])
    return float(t * total) + t * seq.dust


def test_phi_matches_quadrature():
    rng = np.random.default_rng(7)
    for _ in range(10):
        seq = random_sequence(rng, n_groups=int(rng.integers(1, 12)), dust=float(rng.uniform(0, 0.5)))
        t = float(10 ** rng.uniform(-1, 3))
        assert phi(seq, t) == pytest.approx(_quadrature_phi(seq, t), rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 500.0))
def test_phi_r_sum(seed, t):
    seq = random_sequence(np.random.default_rng(seed))
    r_max = int(t + 20 * math.sqrt(t) + 40)
    assert phi_r_all(seq, t, r_max).sum() == pytest.approx(phi(seq, t), rel=1e-10)


def test_exact_mean_examples():
    assert exact_mean_spectrum(TWO_HALVES, 2)[1] == pytest.approx(1.0)
    assert exact_mean_spectrum(PURE_DUST, 9)["K_n"] == pytest.approx(9.0)
    assert exact_mean_spectrum(ONE_BOX, 7)[7] == pytest.approx(1.0)


def test_exact_mean_matches_monte_carlo():
    seq, _ = make_power_law(0.5, 10**4)
    rng = np.random.default_rng(3)
    ex = exact_mean_spectrum(seq, 1000, r_max=3)
    draws = [sample_fixed(seq, 1000, rng) for _ in range(10_000)]
    for key in ("K_n", 1, 2, 3):
        x = np.array([d.n_blocks if key == "K_n" else d.k(key) for d in draws], dtype=float)
        assert abs(x.mean() - ex[key]) < 3 * x.std(ddof=1) / math.sqrt(len(x))


def test_exact_mean_approaches_phi():
    seq, _ = make_power_law(0.5, 10**8)
    gaps = [abs(exact_mean_spectrum(seq, n, r_max=1)["K_n"] / phi(seq, n) - 1)
            for n in (10, 100, 1000, 10_000)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_poissonized_means_power_law():
    seq, _ = make_power_law(0.5, 10**6)
    rng = np.random.default_rng(11)
    t = 5000.0
    draws = [sample_poissonized(seq, t, rng) for _ in range(2000)]
    for r in (1, 2, 3):
        x = np.array([d.k(r) for d in draws], dtype=float)
        assert abs(x.mean() - phi_r(seq, t, r)) < 4 * x.std(ddof=1) / math.sqrt(len(x))


def test_tiny_box_means_are_not_lost():
    # numpy's binomial returns 0 for p below ~1e-16; these groups must still fill
    t = 1.0e3
    seq = seq_of((1e-21, 4 * 10**18), (1e-19, 10**15))
    rng = np.random.default_rng(13)
    draws = [sample_poissonized(seq, t, rng) for _ in range(2000)]
    k = np.array([d.n_blocks - d.singleton_dust for d in draws], dtype=float)
    exact = phi(seq, t) - t * seq.dust
    assert exact == pytest.approx(4.1, rel=1e-6)
    assert abs(k.mean() - exact) < 4 * math.sqrt(exact / len(k))


def test_safe_binomial_and_multinomial():
    rng = np.random.default_rng(14)
    x = occupancy._binomial(rng, np.full(100_000, 10**16), 1e-17)
    assert abs(x.mean() - 0.1) < 4 * math.sqrt(0.1 / len(x))
    cells = np.array([1.0, 1e-17, 2e-17])  # first cell is 1 - 3e-17 rounded
    tot = np.zeros(3)
    for _ in range(2000):
        tot += occupancy._multinomial(rng, 10**17, cells)
    assert tot.sum() == 2000 * 10**17
    assert abs(tot[1] / 2000 - 1.0) < 4 * math.sqrt(1.0 / 2000)
    assert abs(tot[2] / 2000 - 2.0) < 4 * math.sqrt(2.0 / 2000)
