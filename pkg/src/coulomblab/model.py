"""Kernels, confining potentials, configurations and Hamiltonians.

The free gas has energy

    H(Y) = 1/2 sum_{i != j} g(y_i - y_j) + sum_i W(y_i)

and the conditional gas adds the interaction with a frozen nonnegative point
measure mu = sum_a w_a delta_{x_a}:

    H^mu(Y) = H(Y) + sum_a w_a sum_i g(x_a - y_i).

Coincident points carry energy +inf instead of raising, so the sampler can
treat them as ordinary rejected proposals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from coulomblab.geometry import Region

COULOMB_2D = "coulomb2d"
COULOMB_ND = "coulombnd"
RIESZ = "riesz"


class SingularityError(ValueError):
    """Raised when a kernel is evaluated at the origin."""


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    s: float | None = None

    def __post_init__(self):
        if self.variant not in (COULOMB_2D, COULOMB_ND, RIESZ):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == RIESZ:
            if self.s is None or not self.s > 0:
                raise ValueError("Riesz kernel needs an exponent s > 0")

    @classmethod
    def coulomb(cls, d: int) -> KernelSpec:
        return cls(COULOMB_2D) if d == 2 else cls(COULOMB_ND)

    @classmethod
    def riesz(cls, s: float) -> KernelSpec:
        return cls(RIESZ, float(s))

    def validate(self, d: int) -> None:
        if self.variant == COULOMB_2D and d != 2:
            raise ValueError("Coulomb2D kernel requires d = 2")
        if self.variant == COULOMB_ND and d < 3:
            raise ValueError("CoulombND kernel requires d >= 3")
        if self.variant == RIESZ and not 0 < self.s < d:
            raise ValueError(f"Riesz exponent must satisfy 0 < s < d, got s={self.s}, d={d}")

    @property
    def is_log(self) -> bool:
        return self.variant == COULOMB_2D

    def power(self, d: int) -> float:
        """Exponent p with g(x) = |x|^-p (0 for the logarithmic kernel)."""
        if self.variant == COULOMB_ND:
            return float(d - 2)
        if self.variant == RIESZ:
            return float(self.s)
        return 0.0

    def radial(self, r, d: int):
        """g as a function of |x|, vectorized. r = 0 gives +inf."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            if self.is_log:
                return -np.log(r)
            return r ** (-self.power(d))

    def __str__(self):
        if self.variant == RIESZ:
            return f"riesz:{self.s!r}"
        return "coulomb"


@dataclass(frozen=True)
class PotentialSpec:
    """W(x) = a |x|^2 (a = 0 is the zero potential)."""

    a: float = 0.0

    def __post_init__(self):
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise ValueError("quadratic coefficient must be finite and >= 0")

    @classmethod
    def zero(cls) -> PotentialSpec:
        return cls(0.0)

    @classmethod
    def quadratic(cls, a: float) -> PotentialSpec:
        return cls(float(a))

    @classmethod
    def default(cls, d: int) -> PotentialSpec:
        # |x|^2 / (2d) has Laplacian exactly 1
        return cls(1.0 / (2 * d))

    @property
    def is_zero(self) -> bool:
        return self.a == 0.0

    def laplacian(self, d: int) -> float:
        return 2.0 * self.a * d

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * np.sum(x * x, axis=-1)

    def ball_mean_increment(self, d: int, r: float) -> float:
        """Mean of W over B_r(y) minus W(y); independent of y for quadratic W."""
        return self.a * r * r * d / (d + 2)

    def __str__(self):
        return "zero" if self.is_zero else f"quadratic:{self.a!r}"


@dataclass(frozen=True)
class GasParams:
    d: int
    n_particles: int
    beta: float
    kernel: KernelSpec | None = None
    potential: PotentialSpec | None = None
    delta: float = 0.5

    def __post_init__(self):
        if self.kernel is None:
            object.__setattr__(self, "kernel", KernelSpec.coulomb(self.d))
        if self.potential is None:
            object.__setattr__(self, "potential", PotentialSpec.default(self.d))
        self.validate()

    def validate(self) -> None:
        if self.d < 2:
            raise ValueError("dimension d must be >= 2")
        if self.n_particles < 0:
            raise ValueError("n_particles must be >= 0")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not (self.delta <= self.beta <= 1.0 / self.delta):
            raise ValueError(
                f"invariant delta <= beta <= 1/delta violated: beta={self.beta}, delta={self.delta}"
            )
        if self.potential.laplacian(self.d) > 1.0 / self.delta:
            raise ValueError(
                "invariant laplacian(W) <= 1/delta violated: "
                f"{self.potential.laplacian(self.d)} > {1.0 / self.delta}"
            )
        self.kernel.validate(self.d)

    def g(self, r):
        return self.kernel.radial(r, self.d)


def kernel_eval(k: KernelSpec, x) -> float:
    x = np.asarray(x, dtype=float)
    r = math.sqrt(float(np.dot(x, x)))
    if r == 0.0:
        raise SingularityError("kernel evaluated at the origin")
    return float(k.radial(r, x.shape[0]))


class Configuration:
    """Labelled particle positions, shape (M, d).

    Positions may be updated in place one particle at a time via `move`.
    """

    def __init__(self, positions, d: int | None = None):
        pos = np.array(positions, dtype=float)
        if pos.size == 0:
            pos = pos.reshape(0, d if d is not None else 0)
        if pos.ndim != 2:
            raise ValueError("positions must have shape (M, d)")
        if d is not None and pos.shape[1] != d:
            raise ValueError(f"expected dimension {d}, got {pos.shape[1]}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValueError("configuration is not simple: two positions coincide")
        self.positions = pos

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.m

    def __getitem__(self, i):
        return self.positions[i]

    def move(self, i: int, x) -> None:
        self.positions[i] = x

    def copy(self) -> Configuration:
        c = object.__new__(Configuration)
        c.positions = self.positions.copy()
        return c

    def permuted(self, perm) -> Configuration:
        return Configuration(self.positions[np.asarray(perm)])

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.positions, other.positions)

    def __repr__(self):
        return f"Configuration(m={self.m}, d={self.d})"


@dataclass
class FrozenExterior:
    """Finite nonnegative point measure mu = sum_a w_a delta_{x_a}."""

    atoms: np.ndarray
    weights: np.ndarray
    support_region: Region | None = None

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.atoms.ndim != 2:
            raise ValueError("atoms must have shape (K, d)")
        if len(self.atoms) != len(self.weights):
            raise ValueError("atoms and weights differ in length")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("atom weights must be finite and nonnegative")
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("atom positions must be finite")
        if self.support_region is not None and len(self.atoms):
            if not np.all(self.support_region.contains(self.atoms)):
                raise ValueError("an atom lies outside the support region")

    @classmethod
    def empty(cls, d: int) -> FrozenExterior:
        return cls(np.zeros((0, d)), np.zeros(0))

    @classmethod
    def unit_atoms(cls, points, support_region=None) -> FrozenExterior:
        points = np.asarray(points, dtype=float)
        return cls(points, np.ones(len(points)), support_region)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)

    def translated(self, shift) -> FrozenExterior:
        return FrozenExterior(self.atoms + np.asarray(shift, dtype=float), self.weights.copy())


def _no_mu(mu):
    return mu is None or len(mu) == 0


def _pair_terms(p: GasParams, pos: np.ndarray) -> list[float]:
    m = len(pos)
    out = []
    for i in range(m):
        diff = pos[i + 1:] - pos[i]
        r = np.sqrt(np.sum(diff * diff, axis=1))
        out.extend(p.g(r).tolist())
    return out


def hamiltonian(p: GasParams, c: Configuration, exact: bool = True) -> float:
    """H(c); +inf when two particles coincide.

    With ``exact`` the terms are summed in index order with compensated
    summation (`math.fsum`), which the incremental path is checked against.
    """
    pos = c.positions if isinstance(c, Configuration) else np.asarray(c, dtype=float)
    terms = _pair_terms(p, pos)
    terms.extend(p.potential(pos).tolist())
    if any(t == math.inf for t in terms):
        return math.inf
    return math.fsum(terms) if exact else float(sum(terms))


def _mu_terms(p: GasParams, pos: np.ndarray, mu: FrozenExterior) -> list[float]:
    if _no_mu(mu):
        return []
    out = []
    for a, w in zip(mu.atoms, mu.weights):
        diff = pos - a
        r = np.sqrt(np.sum(diff * diff, axis=1))
        if w == 0:
            continue
        out.extend((w * p.g(r)).tolist())
    return out


def conditional_hamiltonian(p: GasParams, c: Configuration, mu: FrozenExterior | None) -> float:
    pos = c.positions if isinstance(c, Configuration) else np.asarray(c, dtype=float)
    terms = _pair_terms(p, pos)
    terms.extend(p.potential(pos).tolist())
    terms.extend(_mu_terms(p, pos, mu))
    if any(t == math.inf for t in terms):
        return math.inf
    return math.fsum(terms)


def particle_energy(p: GasParams, pos: np.ndarray, mu: FrozenExterior | None, i: int, x) -> float:
    """All terms of H^mu that involve particle i, with particle i placed at x."""
    x = np.asarray(x, dtype=float)
    others = np.delete(pos, i, axis=0)
    diff = others - x
    r2 = np.sum(diff * diff, axis=1)
    if np.any(r2 == 0.0):
        return math.inf
    total = float(np.sum(p.g(np.sqrt(r2)))) + float(p.potential(x))
    if not _no_mu(mu):
        diff = mu.atoms - x
        r2 = np.sum(diff * diff, axis=1)
        live = mu.weights > 0
        if np.any(r2[live] == 0.0):
            return math.inf
        total += float(np.sum(mu.weights[live] * p.g(np.sqrt(r2[live]))))
    return total


def _kernel_differences(p: GasParams, r2_old: np.ndarray, dr2: np.ndarray) -> np.ndarray:
    """g(sqrt(r2_old + dr2)) - g(sqrt(r2_old)) without cancellation for small dr2."""
    u = np.log1p(dr2 / r2_old)
    if p.kernel.is_log:
        return -0.5 * u
    q = p.kernel.power(p.d)
    return r2_old ** (-0.5 * q) * np.expm1(-0.5 * q * u)


def energy_delta_move(p: GasParams, c: Configuration, mu: FrozenExterior | None, i: int, new_pos) -> float:
    """H^mu after moving particle i to new_pos, minus H^mu before. O(M + atoms).

    Each term is differenced directly: with v = new - old the squared distance
    to y changes by v . (new + old - 2y), which keeps the result accurate
    relative to the delta itself even for very short moves.
    """
    pos = c.positions
    old = pos[i]
    new_pos = np.asarray(new_pos, dtype=float)
    if np.array_equal(new_pos, old):
        return 0.0
    v = new_pos - old
    w = new_pos + old
    others = np.delete(pos, i, axis=0)
    if not _no_mu(mu):
        live = mu.weights > 0
        others = np.concatenate([others, mu.atoms[live]])
        weights = np.concatenate([np.ones(len(pos) - 1), mu.weights[live]])
    else:
        weights = np.ones(len(pos) - 1)
    diff_new = others - new_pos
    if np.any(np.sum(diff_new * diff_new, axis=1) == 0.0):
        return math.inf
    diff_old = others - old
    r2_old = np.sum(diff_old * diff_old, axis=1)
    dr2 = (w - 2.0 * others) @ v
    terms = (weights * _kernel_differences(p, r2_old, dr2)).tolist()
    terms.append(p.potential.a * float(v @ w))
    return math.fsum(terms)
