import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomblab.diagnostics import batch_means, batch_means_cov, pooled, split_chain_gap, summarize
from coulomblab.rng import derive_seed, make_rng, uniform_in_ball


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 1000))
def test_seed_derivation_is_deterministic_and_64_bit(master, k):
    s = derive_seed(master, k)
    assert s == derive_seed(master, k)
    assert 0 <= s < 2 ** 64


def test_chain_seeds_are_distinct():
    seeds = {derive_seed(7, k) for k in range(1000)}
    assert len(seeds) == 1000


def test_same_seed_same_stream():
    assert np.array_equal(make_rng(5).random(10), make_rng(5).random(10))


@pytest.mark.parametrize("d", [2, 3, 5])
def test_uniform_in_ball_radial_law(d):
    x = uniform_in_ball(make_rng(d), d, 2.0, 200_000)
    r = np.sqrt(np.sum(x * x, axis=1))
    assert r.max() < 2.0
    # P(|x| < r) = (r / R)^d
    assert np.mean(r < 1.0) == pytest.approx(0.5 ** d, abs=4e-3)
    assert np.allclose(x.mean(axis=0), 0.0, atol=1e-2)


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_batch_means_iid():
    x = np.random.default_rng(0).standard_normal(400_000)
    mean, se, tau = batch_means(x)
    assert se == pytest.approx(1 / math.sqrt(len(x)), rel=0.15)
    assert tau == pytest.approx(1.0, abs=0.2)


def test_batch_means_ar1_autocorrelation_time():
    phi = 0.8
    x = _ar1(phi, 400_000, 1)
    _, _, tau = batch_means(x)
    assert tau == pytest.approx((1 + phi) / (1 - phi), rel=0.2)


def test_se_shrinks_like_root_n_on_doubling():
    x = _ar1(0.5, 800_000, 2)
    _, se_half, _ = batch_means(x[:400_000])
    _, se_full, _ = batch_means(x)
    ratio = se_half / se_full
    assert math.sqrt(2) / 2 < ratio < 2 * math.sqrt(2)


def test_degenerate_inputs():
    assert math.isnan(batch_means([])[0])
    mean, se, tau = batch_means([1.0])
    assert mean == 1.0 and math.isnan(se)
    assert batch_means(np.ones(100))[1] == 0.0


def test_cov_diagonal_matches_scalar():
    x = np.random.default_rng(3).standard_normal((10_000, 2))
    _, cov = batch_means_cov(x)
    assert cov[0, 0] == pytest.approx(batch_means(x[:, 0])[1] ** 2)


def test_pooled_weights_by_sample_size():
    a = summarize("x", np.r_[np.zeros(50), np.ones(50)])
    b = summarize("x", np.ones(300))
    mean, _ = pooled([a, b])
    assert mean == pytest.approx((50 + 300) / 400)


def test_split_chain_gap_detects_drift():
    rng = np.random.default_rng(4)
    assert split_chain_gap(rng.standard_normal(10_000)) < 4
    assert split_chain_gap(np.r_[rng.standard_normal(5000), 3 + rng.standard_normal(5000)]) > 10
