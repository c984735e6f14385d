"""Mimicry transport, favorability and isotropic averaging.

Mim_{i->j} replaces y_i by y_j + U with U uniform on the unit ball.  Its
action on the energy is computed exactly from ball averages of the kernel,
so the favorability event is a deterministic function of the configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from coulomblab import quadrature
from coulomblab.geometry import EventSpec, unit_ball_volume
from coulomblab.model import (
    COULOMB_ND,
    Configuration,
    FrozenExterior,
    GasParams,
    KernelSpec,
    conditional_hamiltonian,
)
from coulomblab.rng import uniform_in_ball

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"

I_TO_J = "i_to_j"
J_TO_I = "j_to_i"


@dataclass(frozen=True)
class BallAverageOracle:
    """Averages of g(. - z) over a uniform ball of the given radius.

    ``closed_form`` uses Newton's theorem and exists only for the
    d >= 3 Coulomb kernel; ``quadrature`` works for every kernel.
    """

    method: str = CLOSED_FORM
    radius: float = 1.0
    node_count: int = 64

    def __post_init__(self):
        if self.method not in (CLOSED_FORM, QUADRATURE):
            raise ValueError(f"unknown ball-average method {self.method!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def with_radius(self, r: float) -> BallAverageOracle:
        return replace(self, radius=float(r))

    def average(self, k: KernelSpec, d: int, dist):
        dist = np.abs(np.asarray(dist, dtype=float))
        a = self.radius
        if self.method == CLOSED_FORM:
            if k.variant != COULOMB_ND:
                raise ValueError("closed-form ball averages exist only for the d >= 3 Coulomb kernel")
            with np.errstate(divide="ignore", over="ignore"):
                outside = dist ** (2.0 - d)
            inside = (dist * dist + d * (a * a - dist * dist) / 2.0) / a ** d
            return np.where(dist >= a, outside, inside)
        if k.is_log:
            core = lambda b: quadrature.log_core(b, d)  # noqa: E731
        else:
            p = k.power(d)
            core = lambda b: quadrature.power_core(b, d, p)  # noqa: E731
        return quadrature.ball_average_radial(
            lambda u: k.radial(u, d), d, a, dist, self.node_count, core=core
        )

    def double_average(self, k: KernelSpec, d: int, dist):
        """E g(z + U - V) for U, V independent uniform on the ball, |z| = dist."""
        dist = np.abs(np.asarray(dist, dtype=float))
        a = self.radius
        if self.method == CLOSED_FORM and k.variant == COULOMB_ND:
            # harmonic away from the support of U - V
            far = dist >= 2 * a
            if np.all(far):
                return dist ** (2.0 - d)
        inner = lambda u: self.average(k, d, u)  # noqa: E731
        vals = quadrature.ball_average_radial(inner, d, a, dist, self.node_count, breaks=(a,))
        if self.method == CLOSED_FORM:
            with np.errstate(divide="ignore"):
                vals = np.where(dist >= 2 * a, dist ** (2.0 - d), vals)
        return vals

    def error_estimate(self, k: KernelSpec, d: int, dist) -> np.ndarray:
        """|Q_n - Q_2n| for the quadrature rule (zero for closed forms)."""
        if self.method == CLOSED_FORM:
            return np.zeros_like(np.asarray(dist, dtype=float))
        fine = replace(self, node_count=2 * self.node_count)
        return np.abs(self.average(k, d, dist) - fine.average(k, d, dist))


def ball_average_kernel(o: BallAverageOracle, k: KernelSpec, d: int, dist):
    out = o.average(k, d, dist)
    return float(out) if np.ndim(out) == 0 else out


def default_oracle(p: GasParams, radius: float = 1.0) -> BallAverageOracle:
    method = CLOSED_FORM if p.kernel.variant == COULOMB_ND else QUADRATURE
    return BallAverageOracle(method, radius)


def ball_second_moment(d: int, r: float, n: int = 16) -> float:
    """E|U|^2 for U uniform on B_r(0), by radial Gauss-Legendre."""
    x, w = quadrature.gauss_legendre(n)
    rho = 0.5 * r * (x + 1.0)
    return float(np.sum(0.5 * r * w * d * rho ** (d + 1)) / r ** d)


def w_gap(p: GasParams, r: float = 1.0) -> float:
    """Increment of W under averaging over B_r: a E|U|^2 for W = a|x|^2."""
    return p.potential.a * ball_second_moment(p.d, r)


def c_bound(p: GasParams, o: BallAverageOracle | None = None) -> float:
    """Explicit constant C with min(Mim_{i->j} H, Mim_{j->i} H) <= H + C.

    Self-interaction of the mimicked pair averaged at the center plus the
    ball-mean increment of W.
    """
    o = o or default_oracle(p)
    return float(o.average(p.kernel, p.d, 0.0)) + w_gap(p, o.radius)


def _pos(c):
    return c.positions if isinstance(c, Configuration) else np.asarray(c, dtype=float)


def _avg_energy_at(p, o, others, mu, z):
    """Expected energy of a particle placed at z + U against `others` and mu."""
    diff = others - z
    e = float(np.sum(o.average(p.kernel, p.d, np.sqrt(np.sum(diff * diff, axis=1)))))
    if mu is not None and len(mu):
        diff = mu.atoms - z
        r = np.sqrt(np.sum(diff * diff, axis=1))
        e += float(np.sum(mu.weights * o.average(p.kernel, p.d, r)))
    return e + float(p.potential(z)) + w_gap(p, o.radius)


def mim_energy(p: GasParams, c, mu: FrozenExterior | None, i: int, j: int,
               o: BallAverageOracle | None = None) -> float:
    """E[H^mu] after replacing y_i by y_j + U, U uniform on the unit ball."""
    if i == j:
        raise ValueError("mimicry needs i != j")
    o = o or default_oracle(p)
    pos = _pos(c)
    rest = np.delete(pos, i, axis=0)
    base = conditional_hamiltonian(p, rest, mu)
    others = np.delete(pos, [i, j], axis=0)
    self_term = float(o.average(p.kernel, p.d, 0.0))
    return base + self_term + _avg_energy_at(p, o, others, mu, pos[j])


@dataclass(frozen=True)
class MimResult:
    mim_ij: float
    mim_ji: float
    favorable: str
    slack: float
    energy: float
    c_bound: float


def favorability(p: GasParams, c, mu, i: int, j: int, o: BallAverageOracle | None = None) -> MimResult:
    o = o or default_oracle(p)
    mij = mim_energy(p, c, mu, i, j, o)
    mji = mim_energy(p, c, mu, j, i, o)
    h = conditional_hamiltonian(p, _pos(c), mu)
    cb = c_bound(p, o)
    return MimResult(mij, mji, I_TO_J if mij <= mji else J_TO_I, h + cb - min(mij, mji), h, cb)


def mim_move(p: GasParams, c: Configuration, i: int, j: int, rng) -> Configuration:
    if i == j:
        raise ValueError("mimicry needs i != j")
    out = c.copy()
    out.move(i, c.positions[j] + uniform_in_ball(rng, c.d, 1.0))
    return out


def iso_energy_bound_check(p: GasParams, c, mu, r: float, o: BallAverageOracle | None = None):
    """(lhs, rhs) with lhs = E H^mu under independent B_r displacements of every particle.

    rhs = H^mu + n * w_gap(r).  Superharmonicity of g and mu >= 0 give lhs <= rhs.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    o = (o or default_oracle(p)).with_radius(r)
    pos = _pos(c)
    n = len(pos)
    gap = w_gap(p, r)
    terms = []
    if n > 1:
        iu, ju = np.triu_indices(n, 1)
        diff = pos[iu] - pos[ju]
        terms.extend(np.atleast_1d(o.double_average(p.kernel, p.d, np.sqrt(np.sum(diff * diff, axis=1)))).tolist())
    terms.extend((p.potential(pos) + gap).tolist())
    if mu is not None and len(mu):
        for a, w in zip(mu.atoms, mu.weights):
            diff = pos - a
            terms.extend((w * o.average(p.kernel, p.d, np.sqrt(np.sum(diff * diff, axis=1)))).tolist())
    lhs = math.fsum(terms)
    rhs = conditional_hamiltonian(p, pos, mu) + n * gap
    return lhs, rhs


# --- operator form, for adjoint checks ---------------------------------------


def uniform_ball_density(x, d: int, radius: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = np.sum(x * x, axis=-1) < radius * radius
    return inside / (unit_ball_volume(d) * radius ** d)


def mim_apply(f, y_i, y_j, rng, n_samples: int = 10_000):
    """Monte Carlo estimate of (Mim_{i->j} f)(y_i, y_j) = E f(y_j + U, y_j)."""
    y_j = np.asarray(y_j, dtype=float)
    u = uniform_in_ball(rng, y_j.shape[-1], 1.0, n_samples)
    return float(np.mean(f(y_j + u, np.broadcast_to(y_j, u.shape))))


def mim_adjoint_apply(f, y_i, y_j, box, rng, n_samples: int = 10_000):
    """(Mim*_{i->j} f)(y_i, y_j) = nu(y_i - y_j) int f(x, y_j) dx, f supported in `box`."""
    y_i = np.asarray(y_i, dtype=float)
    y_j = np.asarray(y_j, dtype=float)
    dens = uniform_ball_density(y_i - y_j, y_i.shape[-1])
    if dens == 0:
        return 0.0
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x = lo + (hi - lo) * rng.random((n_samples, len(lo)))
    integral = np.prod(hi - lo) * np.mean(f(x, np.broadcast_to(y_j, x.shape)))
    return float(dens * integral)


# --- batched favorability, for observers -------------------------------------


def mim_difference_batch(p: GasParams, positions, mu, i: int, j: int, o: BallAverageOracle | None = None):
    """Mim_{i->j} H^mu - Mim_{j->i} H^mu for each configuration in a (n, M, d) batch.

    Terms shared by both directions cancel, leaving
    [Phi + Psi](y_j) - [Phi + Psi](y_i), where Phi is the potential felt from
    particles other than i, j plus W plus mu, and Psi its ball-averaged analogue.
    """
    o = o or default_oracle(p)
    positions = np.asarray(positions, dtype=float)
    keep = [k for k in range(positions.shape[1]) if k not in (i, j)]
    others = positions[:, keep, :]

    def field(z):
        diff = others - z[:, None, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        tot = np.sum(p.g(r) + o.average(p.kernel, p.d, r), axis=-1)
        if mu is not None and len(mu):
            diff = mu.atoms[None, :, :] - z[:, None, :]
            r = np.sqrt(np.sum(diff * diff, axis=-1))
            tot = tot + np.sum(mu.weights * (p.g(r) + o.average(p.kernel, p.d, r)), axis=-1)
        return tot + 2.0 * p.potential(z)

    return field(positions[:, j, :]) - field(positions[:, i, :])


class FavEvent(EventSpec):
    """Fav_{i->j}: Mim_{i->j} H^mu <= Mim_{j->i} H^mu.

    The reverse direction is the exact complement, so for i < j the event for
    (j, i) is evaluated as the negation of (i, j) and ties go to the smaller index.
    """

    def __init__(self, p: GasParams, mu, i: int, j: int, o: BallAverageOracle | None = None):
        if i == j:
            raise ValueError("favorability needs i != j")
        self.p, self.mu, self.i, self.j = p, mu, int(i), int(j)
        self.o = o or default_oracle(p)

    def evaluate(self, positions):
        positions = np.asarray(positions, dtype=float)
        single = positions.ndim == 2
        batch = positions[None] if single else positions
        lo, hi = min(self.i, self.j), max(self.i, self.j)
        fav_lo = mim_difference_batch(self.p, batch, self.mu, lo, hi, self.o) <= 0.0
        out = fav_lo if self.i == lo else ~fav_lo
        return out[0] if single else out

    def __str__(self):
        return f"fav({self.i},{self.j})"
