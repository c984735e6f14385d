"""Metropolis-Hastings chains for the free gas and the annulus-conditioned gas.

Two proposal types are mixed with a fixed, state-independent probability:

* single-site Gaussian displacement of a uniformly chosen particle;
* mimicry: a uniformly chosen ordered pair (i, j) and y_i <- y_j + U with U
  uniform on the unit ball.  The reverse proposal density is evaluated as the
  full mixture over pair choices, which makes the acceptance ratio depend on
  the number of particles within unit distance of y_i before and after.

Proposals leaving B_R union the complement of B_S are rejected.  The free gas
runs through the same code with R = inf.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from coulomblab import _kernels
from coulomblab.diagnostics import ObservableSummary, energy_trace_slope, split_chain_gap, summarize
from coulomblab.geometry import Annulus, Ball, EventSpec, unit_ball_volume
from coulomblab.model import Configuration, FrozenExterior, GasParams, conditional_hamiltonian
from coulomblab.observables import observe
from coulomblab.rng import derive_seed, make_rng, uniform_in_ball

THREADS_ENV = "COULOMBLAB_THREADS"


@dataclass(frozen=True)
class FreeGas:
    gas: GasParams

    R = math.inf
    S = math.inf
    mu = None


@dataclass(frozen=True)
class ConditionalGas:
    """Gas on B_R union B_S^c interacting with frozen atoms mu in between.

    S = inf gives the gas confined to B_R.
    """

    gas: GasParams
    mu: FrozenExterior | None
    R: float
    S: float

    def __post_init__(self):
        if not 0 < self.R < self.S:
            raise ValueError(f"conditional gas needs 0 < R < S, got R={self.R}, S={self.S}")
        if self.mu is not None and len(self.mu):
            r = np.sqrt(np.sum(self.mu.atoms ** 2, axis=1))
            if np.any(r < self.R) or np.any(r > self.S):
                raise ValueError("frozen atoms must lie in the closed annulus R <= |x| <= S")

    @property
    def forbidden(self):
        if math.isinf(self.S):
            return None
        return Annulus((0.0,) * self.gas.d, self.R, self.S)


@dataclass
class ChainConfig:
    target: FreeGas | ConditionalGas
    n_steps: int
    n_burnin: int | None = None
    thinning: int = 1
    seed: int = 0
    mim_move_prob: float = 0.1
    step_scale: float | None = None
    tune: bool = True
    resync_every: int = 10_000
    block_size: int = 1 << 14

    def __post_init__(self):
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if not 0 <= self.mim_move_prob < 1:
            raise ValueError("mim_move_prob must lie in [0, 1)")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.step_scale is not None and not self.step_scale > 0:
            raise ValueError("step_scale must be positive")

    @property
    def gas(self) -> GasParams:
        return self.target.gas

    @property
    def burnin(self) -> int:
        if self.n_burnin is not None:
            return self.n_burnin
        return 100_000 * max(1, self.gas.n_particles)


@dataclass
class ChainState:
    config: Configuration
    energy: float
    step_scale: float
    rng: np.random.Generator
    step_count: int = 0
    tallies: np.ndarray = field(default_factory=lambda: np.zeros(_kernels.N_TALLIES, dtype=np.int64))
    max_drift: float = 0.0

    def acceptance(self) -> dict:
        t = self.tallies
        rate = lambda a, b: float(t[a] / t[b]) if t[b] else math.nan  # noqa: E731
        return {
            "gauss": rate(_kernels.GAUSS_ACCEPTED, _kernels.GAUSS_PROPOSED),
            "mim": rate(_kernels.MIM_ACCEPTED, _kernels.MIM_PROPOSED),
            "gauss_proposed": int(t[_kernels.GAUSS_PROPOSED]),
            "mim_proposed": int(t[_kernels.MIM_PROPOSED]),
            "domain_rejected": int(t[_kernels.DOMAIN_REJECTED]),
        }


@dataclass
class ChainStats:
    chain_id: int
    seed: int
    m: int
    d: int
    n_steps: int
    n_samples: int
    series: dict
    acceptance: dict
    step_scale: float
    max_energy_drift: float
    domain_violations: int
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    def summary(self, name: str) -> ObservableSummary:
        if name not in self.series:
            raise KeyError(f"observable {name!r} was not recorded")
        return summarize(name, self.series[name])

    def estimate(self, name: str) -> tuple[float, float]:
        s = self.summary(name)
        return s.estimate, s.se

    def summaries(self) -> list[ObservableSummary]:
        return [self.summary(k) for k in self.series]


def _bounding_radius(target, m: int) -> float:
    gas = target.gas
    spread = (max(m, 1) / gas.delta) ** (1.0 / gas.d)
    if math.isinf(target.R):
        return spread
    if math.isinf(target.S):
        return target.R
    return max(3.0 * target.S, spread)


def _allowed(target, x) -> bool:
    r2 = float(np.dot(x, x))
    return r2 < target.R ** 2 or r2 >= target.S ** 2


def _kernel_args(target):
    gas = target.gas
    mu = target.mu
    if mu is None or len(mu) == 0:
        atoms, weights = np.zeros((0, gas.d)), np.zeros(0)
    else:
        atoms, weights = np.ascontiguousarray(mu.atoms), np.ascontiguousarray(mu.weights)
    return atoms, weights, gas.kernel.is_log, gas.kernel.power(gas.d), gas.potential.a


def init_chain(cc: ChainConfig) -> ChainState:
    """Uniform rejection-sampled start inside the allowed domain; deterministic in the seed."""
    target = cc.target
    gas = target.gas
    m, d = gas.n_particles, gas.d
    if target.R <= 0:
        raise ValueError("allowed domain has zero volume")
    rng = make_rng(cc.seed)
    L = _bounding_radius(target, m)
    pos = np.empty((m, d))
    for k in range(m):
        for _ in range(100_000):
            x = uniform_in_ball(rng, d, L)
            if _allowed(target, x):
                break
        else:
            raise ValueError("could not place a particle in the allowed domain")
        pos[k] = x
    config = Configuration(pos, d=d)
    energy = conditional_hamiltonian(gas, config, target.mu)
    if cc.step_scale is not None:
        scale = cc.step_scale
    else:
        spacing = (max(m, 1) / (unit_ball_volume(d) * L ** d)) ** (-1.0 / d)
        scale = 0.5 * spacing
    return ChainState(config, energy, scale, rng)


def _draw(rng, m: int, d: int, n: int):
    move_u = rng.random(n)
    pick_i = rng.integers(0, max(m, 1), n)
    pick_j = rng.integers(0, max(m - 1, 1), n)
    normals = rng.standard_normal((n, d))
    ball_u = uniform_in_ball(rng, d, 1.0, n)
    acc_u = rng.random(n)
    return move_u, pick_i, pick_j, normals, ball_u, acc_u


def _advance(cs: ChainState, cc: ChainConfig, n: int, rng, step0: int = 0, thin: int = 0,
             rec_pos=None, rec_energy=None):
    target = cc.target
    atoms, weights, is_log, p, a = _kernel_args(target)
    gas = target.gas
    mim_prob = cc.mim_move_prob if gas.n_particles > 1 else 0.0
    draws = _draw(rng, gas.n_particles, gas.d, n)
    if rec_pos is None:
        rec_pos = np.empty((0, gas.n_particles, gas.d))
        rec_energy = np.empty(0)
    drift = np.array([cs.max_drift])
    energy, n_rec = _kernels.run_steps(
        cs.config.positions, cs.energy, atoms, weights, is_log, p, a, gas.beta,
        target.R ** 2, target.S ** 2, cs.step_scale, mim_prob, *draws,
        step0, thin, rec_pos, rec_energy, cs.tallies, cc.resync_every, drift,
    )
    cs.energy = energy
    cs.max_drift = float(drift[0])
    cs.step_count += n
    return n_rec


def step(cs: ChainState, cc: ChainConfig, rng=None) -> ChainState:
    """One Metropolis-Hastings proposal (Gaussian or mimicry)."""
    _advance(cs, cc, 1, rng if rng is not None else cs.rng)
    return cs


def burn_in(cs: ChainState, cc: ChainConfig, chunk: int = 2000) -> ChainState:
    """Run the burn-in, tuning the Gaussian scale to acceptance in [0.2, 0.5]."""
    left = cc.burnin
    done = 0
    tune = cc.tune and cc.step_scale is None
    while left > 0:
        n = min(chunk if tune else cc.block_size, left)
        before = cs.tallies.copy()
        _advance(cs, cc, n, cs.rng, step0=done)
        if tune:
            prop = cs.tallies[_kernels.GAUSS_PROPOSED] - before[_kernels.GAUSS_PROPOSED]
            acc = cs.tallies[_kernels.GAUSS_ACCEPTED] - before[_kernels.GAUSS_ACCEPTED]
            if prop:
                rate = acc / prop
                if rate < 0.2:
                    cs.step_scale *= 0.7
                elif rate > 0.5:
                    cs.step_scale *= 1.3
        left -= n
        done += n
    cs.tallies[:] = 0
    return cs


def run_chain(cc: ChainConfig, observers=(), chain_id: int = 0, on_block=None) -> ChainStats:
    """Burn-in, then `n_steps` proposals recording every `thinning`-th state.

    ``on_block(steps, energies, positions)`` receives each block of recorded
    samples (e.g. to write snapshots).
    """
    gas = cc.gas
    m, d = gas.n_particles, gas.d
    observers = list(observers)
    keys = [o.key for o in observers]
    if len(set(keys)) != len(keys):
        raise ValueError("observer keys must be unique")
    cs = init_chain(cc)
    burn_in(cs, cc)
    forbidden = getattr(cc.target, "forbidden", None)
    chunks = {k: [] for k in keys}
    energies = []
    violations = 0
    done = 0
    block = max(cc.block_size - cc.block_size % cc.thinning, cc.thinning)
    while done < cc.n_steps:
        n = min(block, cc.n_steps - done)
        cap = (done + n) // cc.thinning - done // cc.thinning
        rec_pos = np.empty((cap, m, d))
        rec_energy = np.empty(cap)
        n_rec = _advance(cs, cc, n, cs.rng, step0=done, thin=cc.thinning,
                         rec_pos=rec_pos, rec_energy=rec_energy)
        rec_pos, rec_energy = rec_pos[:n_rec], rec_energy[:n_rec]
        if n_rec:
            if forbidden is not None and m:
                violations += int(np.count_nonzero(np.any(forbidden.contains(rec_pos), axis=-1)))
            for o, k in zip(observers, keys):
                chunks[k].append(observe(o, rec_pos, rec_energy))
            energies.append(rec_energy.copy())
            if on_block is not None:
                first = (done // cc.thinning + 1) * cc.thinning
                steps = first + cc.thinning * np.arange(n_rec)
                on_block(steps, rec_energy, rec_pos)
        done += n
    series = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in chunks.items()}
    energy_series = np.concatenate(energies) if energies else np.zeros(0)
    n_samples = len(energy_series)
    diagnostics = {
        "energy_slope": energy_trace_slope(energy_series),
        "energy_split_gap": split_chain_gap(energy_series),
    }
    return ChainStats(
        chain_id=chain_id,
        seed=cc.seed,
        m=m,
        d=d,
        n_steps=cc.n_steps,
        n_samples=n_samples,
        series=series,
        acceptance=cs.acceptance(),
        step_scale=cs.step_scale,
        max_energy_drift=cs.max_drift,
        domain_violations=violations,
        diagnostics=diagnostics,
        error=None if n_samples else "no production samples recorded",
    )


def thread_count(default: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


def run_ensemble(cc: ChainConfig, observers, n_chains: int, master_seed: int,
                 threads: int | None = None, on_block=None) -> list[ChainStats]:
    """Independent chains with seeds derived from `master_seed`, ordered by chain id."""
    from dataclasses import replace

    configs = [replace(cc, seed=derive_seed(master_seed, k)) for k in range(n_chains)]

    def work(k):
        cb = None if on_block is None else (lambda *a: on_block(k, *a))
        return run_chain(configs[k], observers, chain_id=k, on_block=cb)

    workers = min(thread_count(threads), n_chains) if n_chains else 1
    if workers <= 1:
        return [work(k) for k in range(n_chains)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(work, range(n_chains)))
