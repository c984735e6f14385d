import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomblab.geometry import unit_ball_volume
from coulomblab.model import Configuration, FrozenExterior, GasParams, KernelSpec, PotentialSpec, conditional_hamiltonian
from coulomblab.quadrature import ball_average_radial, cap_fraction, power_core
from coulomblab.rng import make_rng
from coulomblab.transport import (
    BallAverageOracle,
    FavEvent,
    c_bound,
    favorability,
    iso_energy_bound_check,
    mim_adjoint_apply,
    mim_apply,
    mim_difference_batch,
    mim_energy,
    w_gap,
)

CF = BallAverageOracle("closed_form")
QD = BallAverageOracle("quadrature")
C3 = KernelSpec.coulomb(3)


@pytest.mark.parametrize("dist, value", [(0.0, 1.5), (0.5, 1.375), (2.0, 0.5)])
def test_newton_values_d3(dist, value):
    assert CF.average(C3, 3, dist) == pytest.approx(value, abs=1e-15)
    assert QD.average(C3, 3, dist) == pytest.approx(value, abs=1e-12)


@given(st.floats(0, 4), st.floats(0.1, 3), st.sampled_from([3, 4, 5]))
def test_quadrature_matches_closed_form(t, a, d):
    k = KernelSpec.coulomb(d)
    cf = CF.with_radius(a).average(k, d, t)
    assert QD.with_radius(a).average(k, d, t) == pytest.approx(cf, rel=1e-10, abs=1e-12)


@given(st.floats(0, 4), st.floats(0.1, 3))
def test_log_kernel_ball_average(t, a):
    # mean of -log|x - z| over B_a: -log t outside, -log a + (a^2 - t^2) / (2 a^2) inside
    exact = -math.log(t) if t >= a else -math.log(a) + (a * a - t * t) / (2 * a * a)
    got = QD.with_radius(a).average(KernelSpec.coulomb(2), 2, t)
    assert got == pytest.approx(exact, rel=1e-9, abs=1e-10)


@pytest.mark.parametrize("d, s", [(3, 0.5), (3, 1.5), (3, 2.5), (2, 1.0), (4, 3.0)])
def test_riesz_center_average(d, s):
    assert QD.average(KernelSpec.riesz(s), d, 0.0) == pytest.approx(d / (d - s), rel=1e-12)


@given(st.floats(0.01, 5), st.floats(0.05, 3), st.sampled_from([2, 3, 4]))
def test_coulomb_ball_average_is_superharmonic(t, a, d):
    k = KernelSpec.coulomb(d)
    avg = float(QD.with_radius(a).average(k, d, t))
    g = float(k.radial(t, d))
    assert avg <= g + 1e-9 * max(1.0, abs(g))


def test_cap_fraction_general_d_matches_d3():
    c = np.linspace(-1, 1, 11)
    assert np.allclose(cap_fraction(c, 3), 0.5 * (1 - c))
    assert np.allclose(cap_fraction(0.0, 5), 0.5)


def test_ball_average_of_constant_is_constant():
    vals = ball_average_radial(lambda u: np.ones_like(u), 3, 1.3, np.array([0.0, 0.7, 1.3, 4.0]),
                               core=lambda b: power_core(b, 3, 0.0))
    assert np.allclose(vals, 1.0)


def test_double_average_equals_g_far_away():
    assert CF.double_average(C3, 3, 10.0) == pytest.approx(0.1)
    assert QD.double_average(C3, 3, 10.0) == pytest.approx(0.1, rel=1e-12)


def test_c_bound_and_gap():
    p = GasParams(d=3, n_particles=2, beta=1.0)
    assert w_gap(p) == pytest.approx(p.potential.ball_mean_increment(3, 1.0))
    assert c_bound(p) == pytest.approx(1.5 + 0.1)


def test_mim_energy_on_a_line():
    p = GasParams(d=3, n_particles=3, beta=1.0, potential=PotentialSpec.zero())
    c = Configuration([[0, 0, 0], [5, 0, 0], [10, 0, 0]])
    # pair (1,2) = 0.2, self term 1.5, averaged particle near y_1 sees y_2 at 5
    assert mim_energy(p, c, None, 0, 1) == pytest.approx(1.9)


@st.composite
def gases(draw):
    m = draw(st.integers(2, 7))
    k = draw(st.integers(0, 3))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    pos = rng.uniform(-3, 3, (m, 3))
    mu = FrozenExterior(rng.uniform(-5, 5, (k, 3)), rng.uniform(0, 2, k))
    i, j = rng.choice(m, 2, replace=False)
    return GasParams(d=3, n_particles=m, beta=1.0), pos, mu, int(i), int(j)


@given(gases())
def test_mimicry_energy_certificate(g):
    p, pos, mu, i, j = g
    r = favorability(p, pos, mu, i, j)
    assert min(r.mim_ij, r.mim_ji) <= r.energy + r.c_bound + 1e-8


@given(gases())
def test_fav_events_partition(g):
    p, pos, mu, i, j = g
    a = FavEvent(p, mu, i, j).evaluate(pos)
    b = FavEvent(p, mu, j, i).evaluate(pos)
    assert a != b


@given(gases())
def test_batched_difference_matches_scalar(g):
    p, pos, mu, i, j = g
    diff = mim_difference_batch(p, pos[None], mu, i, j)[0]
    assert diff == pytest.approx(mim_energy(p, pos, mu, i, j) - mim_energy(p, pos, mu, j, i), abs=1e-9)


@given(gases(), st.floats(0.1, 1.5))
def test_isotropic_averaging_lowers_interaction(g, r):
    p, pos, mu, _, _ = g
    lhs, rhs = iso_energy_bound_check(p, pos, mu, r)
    assert lhs <= rhs + 1e-12 * max(1.0, abs(rhs))


def test_isotropic_averaging_exact_when_far_apart():
    p = GasParams(d=3, n_particles=3, beta=1.0)
    pos = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0.0]])
    lhs, rhs = iso_energy_bound_check(p, pos, None, 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-14)


def test_mim_apply_second_moment():
    f = lambda x, y: np.sum((x - y) ** 2, axis=-1)  # noqa: E731
    est = mim_apply(f, np.zeros(3), np.ones(3), make_rng(1), 200_000)
    assert est == pytest.approx(3 / 5, abs=5e-3)


def test_mim_adjoint_of_constant():
    one = lambda x, y: np.ones(len(x))  # noqa: E731
    box = ([-1, -1, -1], [1, 1, 1])
    got = mim_adjoint_apply(one, np.array([0.2, 0, 0]), np.zeros(3), box, make_rng(2), 1000)
    assert got == pytest.approx(8 / unit_ball_volume(3))
    assert mim_adjoint_apply(one, np.array([2.0, 0, 0]), np.zeros(3), box, make_rng(2), 10) == 0.0


def test_mim_energy_base_excludes_particle_i():
    p = GasParams(d=3, n_particles=2, beta=1.0)
    pos = np.array([[0, 0, 0], [3, 0, 0.0]])
    base = conditional_hamiltonian(p, pos[1:], None)
    assert mim_energy(p, pos, None, 0, 1) == pytest.approx(base + 1.5 + p.potential(pos[1]) + w_gap(p))
