"""Ball averages of radial functions by one-dimensional Gauss-Legendre rules.

For a radial function f and a point z at distance t from the center of a
ball of radius a in R^d, the average of f(|x - z|) over the ball reduces to

    (d / a^d) * [ int_0^{max(a-t,0)} f(u) u^{d-1} du
                  + int_{|a-t|}^{a+t} f(u) u^{d-1} F(u) du ]

where F(u) is the fraction of the sphere |x - z| = u lying inside the ball.
The first piece has closed forms for power and logarithmic kernels, which
absorbs the singularity at u = 0.  The second piece is smooth in the
interior, and the substitution u = m - h cos(theta) flattens the square-root
behaviour of F at both ends.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import betainc


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def cap_fraction(cos_alpha, d: int) -> np.ndarray:
    """Fraction of the unit sphere in R^d within angle alpha of a fixed axis."""
    c = np.clip(np.asarray(cos_alpha, dtype=float), -1.0, 1.0)
    if d == 2:
        return np.arccos(c) / np.pi
    if d == 3:
        return 0.5 * (1.0 - c)
    half = 0.5 * betainc(0.5 * (d - 1), 0.5, 1.0 - c * c)
    return np.where(c >= 0, half, 1.0 - half)


def _cosine_rule(lo, hi, n):
    """Nodes/weights on [lo, hi] (arrays broadcast to (..., n)) via u = m - h cos(theta)."""
    x, w = gauss_legendre(n)
    theta = 0.5 * np.pi * (x + 1.0)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
    u = m - h * np.cos(theta)
    wu = 0.5 * np.pi * w * h * np.sin(theta)
    return u, wu


def _integrate(f, lo, hi, n, breaks=()):
    """int_lo^hi f(u) du, vectorized over lo/hi, splitting at interior breakpoints."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    cuts = [lo]
    for b in sorted(breaks):
        cuts.append(np.clip(b, lo, hi))
    cuts.append(hi)
    total = np.zeros(np.broadcast(lo, hi).shape)
    for a, b in zip(cuts[:-1], cuts[1:]):
        u, wu = _cosine_rule(a, np.maximum(a, b), n)
        vals = np.where(wu > 0, f(u), 0.0)
        total = total + np.sum(vals * wu, axis=-1)
    return total


def power_core(b, d: int, p: float) -> np.ndarray:
    """int_0^b u^{d-1-p} du."""
    b = np.asarray(b, dtype=float)
    return b ** (d - p) / (d - p)


def log_core(b, d: int) -> np.ndarray:
    """int_0^b -log(u) u^{d-1} du."""
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = b ** d / d ** 2 - b ** d * np.log(b) / d
    return np.where(b > 0, out, 0.0)


def ball_average_radial(f, d: int, a: float, t, n: int = 64, core=None, breaks=()):
    """Average of f(|x - z|) over x uniform in a ball of radius a, |center - z| = t.

    ``core(b)`` may supply int_0^b f(u) u^{d-1} du in closed form; otherwise
    that piece is integrated numerically as well.
    """
    t = np.abs(np.asarray(t, dtype=float))
    inner = np.maximum(a - t, 0.0)
    if core is not None:
        full = core(inner)
    else:
        full = _integrate(lambda u: f(u) * u ** (d - 1), 0.0, inner, n, breaks)

    lo, hi = np.abs(a - t), a + t
    tt = t[..., None]

    def partial(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            cos_alpha = (u * u + tt * tt - a * a) / (2.0 * u * tt)
        frac = cap_fraction(np.where(np.isfinite(cos_alpha), cos_alpha, 1.0), d)
        return f(u) * u ** (d - 1) * frac

    part = _integrate(partial, lo, hi, n, breaks)
    part = np.where(t > 0, part, 0.0)
    return d / a ** d * (full + part)
