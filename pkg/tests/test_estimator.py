import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomblab.estimator import (
    BadTermEstimate,
    NumberDistribution,
    bad_events,
    bad_term,
    deindexing_check,
    kpoint_correlation_check,
    noise_floor,
    nonrigidity_indicator,
    number_distribution,
    overcrowding_condition,
    overcrowding_curve,
    seed_stability,
    three_point_check,
)
from coulomblab.geometry import All, Ball, CountEquals, IndexedInside, ball, count_events, first_indices
from coulomblab.model import GasParams
from coulomblab.observables import NeighborCount, observe
from coulomblab.sampler import ChainConfig, ChainStats, FreeGas, run_chain


def fake_stats(positions, observers, chain_id=0):
    """ChainStats built directly from a batch of configurations."""
    positions = np.asarray(positions, dtype=float)
    energies = np.zeros(len(positions))
    series = {o.key: observe(o, positions, energies) for o in observers}
    return ChainStats(chain_id, chain_id, positions.shape[1], positions.shape[2], len(positions),
                      len(positions), series, {}, 1.0, 0.0, 0)


def test_three_point_uniform_on_three_values():
    d = NumberDistribution.from_probabilities({4: 1 / 3, 5: 1 / 3, 6: 1 / 3}, total=3000)
    r = three_point_check(d, 0.0)
    assert r.details["implied_by_n"] == {"4": 1.0, "5": 0.5, "6": 1.0}
    assert r.implied_constant == 1.0 and r.passed and not r.hard_failure


def test_three_point_point_mass_is_hard_failure():
    r = three_point_check(NumberDistribution.from_probabilities({5: 1.0}, total=1000), 0.0)
    assert r.hard_failure and not r.passed


def test_three_point_bad_term_absorbs_mass():
    d = NumberDistribution.from_probabilities({4: 0.25, 5: 0.5, 6: 0.25}, total=1000)
    r = three_point_check(d, BadTermEstimate(0.3, 0.01))
    assert r.details["implied_by_n"]["5"] == pytest.approx(0.4)
    assert r.details["bad_free_by_n"]["5"] == pytest.approx(1.0)


@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8), st.floats(0, 0.5))
def test_three_point_report_is_deterministic_and_bounded(ws, bad):
    p = np.array(ws) / sum(ws)
    d = NumberDistribution.from_probabilities(dict(enumerate(p)), total=10 ** 6)
    a, b = three_point_check(d, bad), three_point_check(d, bad)
    assert a.record() == b.record()
    for n, c in a.details["implied_by_n"].items():
        assert c <= a.details["bad_free_by_n"][n] + 1e-12


def test_noise_floor():
    assert noise_floor(300) == 0.01
    assert noise_floor(0) == math.inf


def test_number_distribution_point_masses():
    pos = np.zeros((10, 0, 3))
    d = number_distribution(fake_stats(pos, count_events(ball(1, 3), 0)), ball(1, 3))
    assert d.probs == {0: (1.0, 0.0)}
    pos = np.random.default_rng(0).normal(size=(50, 1, 3))
    d = number_distribution(fake_stats(pos, count_events(All(), 1)), All())
    assert d.p(1) == 1.0 and d.p(0) == 0.0


def test_number_distribution_needs_observers():
    with pytest.raises(KeyError):
        number_distribution(fake_stats(np.zeros((3, 2, 3)), []), ball(1, 3))


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_number_distribution_sums_to_one(m, seed):
    pos = np.random.default_rng(seed).uniform(-3, 3, (400, m, 3))
    d = number_distribution(fake_stats(pos, count_events(ball(2, 3), m)), ball(2, 3))
    assert math.fsum(p for p, _ in d.probs.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(0 <= p <= 1 for p, _ in d.probs.values())
    assert all(se > 0 for p, se in d.probs.values() if 0 < p < 1)


def test_bad_event_thresholds():
    big, small, edge = bad_events(2.0, 8.0, 2.0, 4, 3)
    assert big.n == 65 and small.n == 0 and edge.n == 4
    # huge rho0: first event impossible, second forced true whenever T^d / rho0 <= 0 count
    big, small, edge = bad_events(1.0, 1e9, 2.0, 3, 3)
    assert big.n > 10 ** 9 and small.n == 0


def test_bad_term_rule_of_three():
    # T = 1, rho0 = 4, n = 3: no event can fire with one particle at the origin and one at radius 1.5
    pos = np.zeros((300, 2, 3))
    pos[:, 1, 0] = 1.5
    events = bad_events(1.0, 4.0, 2.0, 3, 3)
    b = bad_term(fake_stats(pos, list(events)), 1.0, 4.0, 2.0, 3)
    assert b.value == 0.0 and b.se == pytest.approx(3 / 300)


def test_bad_term_is_sum_of_terms():
    rng = np.random.default_rng(3)
    pos = rng.uniform(-2, 2, (500, 4, 3))
    T, rho0, R, n = 1.0, 2.0, 2.0, 2
    events = bad_events(T, rho0, R, n, 3)
    st_ = fake_stats(pos, list(events))
    b = bad_term(st_, T, rho0, R, n)
    assert b.value == pytest.approx(sum(np.mean(st_.series[e.key]) for e in events))
    assert [t[0] for t in b.terms] == [e.key for e in events]


def test_seed_stability():
    assert seed_stability([1.0, 1.2, 0.9])[0]
    assert not seed_stability([1.0, 4.0])[0]
    assert seed_stability([0.0, 0.0])[0]
    assert not seed_stability([1.0, math.inf])[0]


def test_overcrowding_trivial_ends_and_floor():
    rng = np.random.default_rng(0)
    pos = rng.uniform(-2, 2, (1000, 6, 3))
    cond = overcrowding_condition(1.0, None, 3, ball(10.0, 3))
    st_ = fake_stats(pos, [NeighborCount(0, 1.0), cond])
    curve = overcrowding_curve(st_, 1.0, [0.0, 7.0])
    assert curve.points[0][1] == 1.0 and curve.points[1][1] == 0.0
    with pytest.raises(ValueError, match="floor"):
        overcrowding_curve(st_, 1.0, [0.0], cond, min_samples=5000)


def test_overcrowding_slope_on_known_tail():
    # neighbour counts with P(N >= k) = exp(-k^2 / 4): slope -1/4 per unit of rho^2 r^(2d) (r = 1)
    rng = np.random.default_rng(1)
    k = np.arange(0, 12)
    tail = np.exp(-k ** 2 / 4.0)
    pmf = tail - np.r_[tail[1:], 0]
    counts = rng.choice(k, size=400_000, p=pmf / pmf.sum())
    st_ = ChainStats(0, 0, 1, 3, len(counts), len(counts), {"neighbors(0;1)": counts.astype(float)}, {}, 1, 0, 0)
    curve = overcrowding_curve(st_, 1.0, [1, 2, 3, 4])
    assert curve.slope == pytest.approx(-0.25, abs=4 * curve.slope_se + 1e-3)


def test_kpoint_preconditions():
    with pytest.raises(ValueError, match="overlap"):
        kpoint_correlation_check(None, [Ball((0, 0, 0), 0.5), Ball((0.5, 0, 0), 0.5)], 2.0)
    with pytest.raises(ValueError, match="inside"):
        kpoint_correlation_check(None, [Ball((0, 0, 0), 2.0)], 2.0)


def test_kpoint_uniform_single_particle():
    rng = np.random.default_rng(5)
    x = rng.uniform(-2, 2, (400_000, 3))
    x = x[np.sum(x * x, axis=1) < 4][:, None, :]
    balls = (Ball((0.0, 0.0, 0.0), 0.5),)
    from coulomblab.geometry import AllOccupied
    from coulomblab.estimator import halved

    r = kpoint_correlation_check(fake_stats(x, [AllOccupied(balls), AllOccupied(halved(balls))]), balls, 2.0)
    assert abs(r.lhs - 1 / 64) < 3 * r.lhs_se
    assert abs(r.details["log2_ratio"] - 3) < 3 * r.details["log2_ratio_se"]
    assert r.details["r"] == pytest.approx(1.5)


def test_nonrigidity_degenerate_and_relabeling():
    point = NumberDistribution.from_probabilities({3: 1.0}, total=100)
    assert nonrigidity_indicator([(4.0, point)])["rigid_like"]
    spread = NumberDistribution.from_probabilities({2: 0.5, 3: 0.5}, total=100)
    out = nonrigidity_indicator([(4.0, spread), (5.0, spread)])
    assert not out["rigid_like"] and out["rows"][0]["width"] == 2


def test_deindexing_on_exchangeable_samples():
    rng = np.random.default_rng(2)
    pos = rng.uniform(-3, 3, (200_000, 4, 3))
    obs = [IndexedInside(first_indices(n), ball(2, 3)) for n in range(5)] + count_events(ball(2, 3), 4)
    st_ = fake_stats(pos, obs)
    for n in range(5):
        assert deindexing_check(st_, 2.0, n, 3).passed


def test_deindexing_detects_broken_symmetry():
    rng = np.random.default_rng(2)
    pos = rng.uniform(-3, 3, (100_000, 3, 3))
    pos[:, 0] *= 0.3  # particle 0 prefers the ball
    obs = [IndexedInside(first_indices(1), ball(2, 3)), CountEquals(ball(2, 3), 1)]
    assert not deindexing_check(fake_stats(pos, obs), 2.0, 1, 3).passed


def test_single_free_particle_all_region_chain():
    gas = GasParams(d=3, n_particles=1, beta=1.0)
    st_ = run_chain(ChainConfig(FreeGas(gas), n_steps=2000, n_burnin=100), count_events(All(), 1))
    assert number_distribution(st_, All()).p(1) == 1.0


def test_deindexing_score_se_on_iid_samples():
    rng = np.random.default_rng(4)
    pos = rng.uniform(-3, 3, (200_000, 4, 3))
    n = 2
    obs = [IndexedInside(first_indices(n), ball(2, 3)), CountEquals(ball(2, 3), n)]
    r = deindexing_check(fake_stats(pos, obs), 2.0, n, 3)
    assert r.details["inflation"] == pytest.approx(1.0, abs=0.15)
    p0 = r.rhs / 6
    assert r.lhs_se == pytest.approx(6 * math.sqrt(p0 * (1 - p0) * r.details["inflation"] / 200_000))
