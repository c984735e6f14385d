"""Compiled inner loops for the Metropolis chain.

All random numbers are drawn outside in numpy and passed in per block, so a
chain's trajectory depends only on its seed and block layout.
"""

import math

import numpy as np
from numba import njit

# tally slots
GAUSS_PROPOSED, GAUSS_ACCEPTED, MIM_PROPOSED, MIM_ACCEPTED, DOMAIN_REJECTED = range(5)
N_TALLIES = 5


@njit(cache=True, nogil=True)
def _g(r2, is_log, p):
    if r2 == 0.0:
        return math.inf
    if is_log:
        return -0.5 * math.log(r2)
    if p == 1.0:
        return 1.0 / math.sqrt(r2)
    return r2 ** (-0.5 * p)


@njit(cache=True, nogil=True)
def _sq(x):
    s = 0.0
    for c in range(x.shape[0]):
        s += x[c] * x[c]
    return s


@njit(cache=True, nogil=True)
def _dist2(x, y):
    s = 0.0
    for c in range(x.shape[0]):
        t = x[c] - y[c]
        s += t * t
    return s


@njit(cache=True, nogil=True)
def particle_energy(pos, i, x, atoms, weights, is_log, p, a):
    e = 0.0
    for k in range(pos.shape[0]):
        if k == i:
            continue
        r2 = _dist2(x, pos[k])
        if r2 == 0.0:
            return math.inf
        e += _g(r2, is_log, p)
    for k in range(atoms.shape[0]):
        w = weights[k]
        if w == 0.0:
            continue
        r2 = _dist2(x, atoms[k])
        if r2 == 0.0:
            return math.inf
        e += w * _g(r2, is_log, p)
    return e + a * _sq(x)


@njit(cache=True, nogil=True)
def total_energy(pos, atoms, weights, is_log, p, a):
    m = pos.shape[0]
    e = 0.0
    for i in range(m):
        for k in range(i + 1, m):
            e += _g(_dist2(pos[i], pos[k]), is_log, p)
        e += a * _sq(pos[i])
        for k in range(atoms.shape[0]):
            if weights[k] != 0.0:
                e += weights[k] * _g(_dist2(pos[i], atoms[k]), is_log, p)
    return e


@njit(cache=True, nogil=True)
def _allowed(x, r_in2, r_out2):
    r2 = _sq(x)
    return r2 < r_in2 or r2 >= r_out2


@njit(cache=True, nogil=True)
def _neighbours(pos, i, x):
    n = 0
    for k in range(pos.shape[0]):
        if k != i and _dist2(x, pos[k]) < 1.0:
            n += 1
    return n


@njit(cache=True, nogil=True)
def run_steps(pos, energy, atoms, weights, is_log, p, a, beta, r_in2, r_out2,
              step_scale, mim_prob, move_u, pick_i, pick_j, normals, ball_u, acc_u,
              step0, thin, rec_pos, rec_energy, tallies, resync_every, drift):
    """Advance the chain over one block of pre-drawn random numbers.

    Returns (energy, number of recorded samples).  `drift[0]` keeps the
    largest relative gap seen between the cached and recomputed energy.
    """
    m, d = pos.shape
    n_rec = 0
    new = np.empty(d)
    for t in range(move_u.shape[0]):
        if m > 0:
            i = pick_i[t]
            mim = m > 1 and move_u[t] < mim_prob
            if mim:
                j = (i + 1 + pick_j[t]) % m
                for c in range(d):
                    new[c] = pos[j, c] + ball_u[t, c]
                tallies[MIM_PROPOSED] += 1
            else:
                for c in range(d):
                    new[c] = pos[i, c] + step_scale * normals[t, c]
                tallies[GAUSS_PROPOSED] += 1
            if not _allowed(new, r_in2, r_out2):
                tallies[DOMAIN_REJECTED] += 1
            else:
                log_q = 0.0
                ok = True
                if mim:
                    # proposal density is a mixture over pair choices; only the
                    # neighbour counts within the unit ball survive in the ratio
                    rev = _neighbours(pos, i, pos[i])
                    if rev == 0:
                        ok = False
                    else:
                        log_q = math.log(rev / _neighbours(pos, i, new))
                if ok:
                    e_new = particle_energy(pos, i, new, atoms, weights, is_log, p, a)
                    if e_new < math.inf:
                        de = e_new - particle_energy(pos, i, pos[i], atoms, weights, is_log, p, a)
                        log_acc = -beta * de + log_q
                        if log_acc >= 0.0 or acc_u[t] < math.exp(log_acc):
                            for c in range(d):
                                pos[i, c] = new[c]
                            energy += de
                            tallies[MIM_ACCEPTED if mim else GAUSS_ACCEPTED] += 1
        step = step0 + t + 1
        if resync_every > 0 and step % resync_every == 0:
            full = total_energy(pos, atoms, weights, is_log, p, a)
            gap = abs(energy - full) / max(1.0, abs(full))
            if gap > drift[0]:
                drift[0] = gap
            energy = full
        if thin > 0 and step % thin == 0:
            for k in range(m):
                for c in range(d):
                    rec_pos[n_rec, k, c] = pos[k, c]
            rec_energy[n_rec] = energy
            n_rec += 1
    return energy, n_rec
