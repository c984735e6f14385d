"""Number distributions and implied-constant checks of the non-rigidity inequalities.

The inequalities proved for the conditional gas carry non-explicit constants,
so each check reports the smallest constant that makes the inequality hold at
the recorded point estimates ("implied constant").  What is testable at desk
scale is whether that constant is finite and stable across seeds, and whether
the predicted scaling in T or in ball radius is respected.

Conventions: particle indices are 0-based, so the index set [n] is
{0, ..., n-1} and "particle n+1" is index n.  Probabilities below the noise
floor 3 / (number of samples) are treated as zero at resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from coulomblab.diagnostics import batch_means_cov, pooled, summarize
from coulomblab.geometry import (
    AllOccupied,
    AllOf,
    Ball,
    CountAtLeast,
    CountAtMost,
    CountEquals,
    EventSpec,
    IndexedInside,
    Inside,
    Region,
    annulus,
    ball,
    first_indices,
)
from coulomblab.observables import NeighborCount

SIGNIFICANCE = 3.0


def _as_list(stats):
    return list(stats) if isinstance(stats, (list, tuple)) else [stats]


def _series(stats, key: str) -> list[np.ndarray]:
    out = []
    for s in _as_list(stats):
        if key not in s.series:
            raise KeyError(f"observer {key!r} was not recorded")
        out.append(np.asarray(s.series[key], dtype=float))
    return out


def _pooled_estimate(stats, key: str) -> tuple[float, float, int]:
    xs = _series(stats, key)
    summaries = [summarize(key, x) for x in xs if len(x)]
    n = sum(len(x) for x in xs)
    if not summaries:
        return math.nan, math.nan, 0
    mean, se = pooled(summaries)
    return mean, _se_floor(mean, se, n), n


def _se_floor(p: float, se: float, n: int) -> float:
    """Batch-means s.e., with fallbacks where it is degenerate.

    A zero estimate gets the rule-of-three bound, a certain event gets 0, and
    an interior estimate from too few batches gets the binomial value.
    """
    if n == 0:
        return math.nan
    if not math.isnan(se) and se > 0:
        return se
    if p == 0.0:
        return 3.0 / n
    if p == 1.0:
        return 0.0
    return math.sqrt(p * (1 - p) / n)


def noise_floor(total: int) -> float:
    return 3.0 / total if total else math.inf


# --- number distribution --------------------------------------------------


@dataclass
class NumberDistribution:
    """Distribution of the count in `region`: probs[n] = (estimate, s.e.)."""

    region: Region
    probs: dict
    total: int
    meta: dict = field(default_factory=dict)

    def p(self, n: int) -> float:
        return self.probs.get(n, (0.0, 0.0))[0]

    def se(self, n: int) -> float:
        return self.probs.get(n, (0.0, 0.0))[1]

    @property
    def floor(self) -> float:
        return noise_floor(self.total)

    def support(self) -> list[int]:
        return [n for n, (p, _) in sorted(self.probs.items()) if p > self.floor]

    def entropy(self) -> float:
        ps = np.array([p for p, _ in self.probs.values() if p > 0])
        return float(-np.sum(ps * np.log(ps)))

    @classmethod
    def from_probabilities(cls, probs, total: int, region: Region | None = None, se=None):
        """Build from plain masses, e.g. for arithmetic checks."""
        probs = {int(n): float(p) for n, p in dict(probs).items()}
        se = se or {}
        return cls(region, {n: (p, float(se.get(n, 0.0))) for n, p in probs.items()}, total)


def number_distribution(stats, region: Region) -> NumberDistribution:
    """Normalized distribution of the count in `region` from CountEquals observers.

    `stats` is a ChainStats or a list of them (pooled with sample-size weights).
    """
    chains = _as_list(stats)
    m = chains[0].m
    if any(c.m != m for c in chains):
        raise ValueError("chains have different particle numbers")
    probs = {}
    total = 0
    for n in range(m + 1):
        key = str(CountEquals(region, n))
        p, se, total = _pooled_estimate(chains, key)
        probs[n] = (p, se)
    if total == 0:
        raise ValueError("no samples recorded")
    norm = math.fsum(p for p, _ in probs.values())
    probs = {n: (p / norm, se) for n, (p, se) in probs.items()}
    for n, (p, se) in probs.items():
        if 0 < p < 1 and not se > 0:
            probs[n] = (p, math.sqrt(p * (1 - p) / total))
    meta = {"chains": [c.chain_id for c in chains], "seeds": [c.seed for c in chains], "m": m}
    return NumberDistribution(region, probs, total, meta)


# --- reports ---------------------------------------------------------------


@dataclass
class InequalityReport:
    name: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    implied_constant: float
    passed: bool
    params: dict = field(default_factory=dict)
    relaxed: bool = False
    hard_failure: bool = False
    details: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "rhs": self.rhs,
            "rhs_se": self.rhs_se,
            "implied_constant": self.implied_constant,
            "passed": self.passed,
            "relaxed": self.relaxed,
            "hard_failure": self.hard_failure,
            "details": self.details,
        }


@dataclass(frozen=True)
class BadTermEstimate:
    value: float
    se: float
    terms: tuple = ()
    total: int = 0


# --- bad term ----------------------------------------------------------------


def bad_events(T: float, rho0: float, R: float, n: int, d: int) -> tuple[EventSpec, EventSpec, EventSpec]:
    """The three atypical-density events, with thresholds rounded to integer counts.

    Y(B_3T minus B_T/2) > rho0 T^d, Y(B_2T minus B_T) < T^d / rho0 and
    Y(B_R minus B_(R-1)) >= (1 - 1/rho0) n.
    """
    big = rho0 * T ** d
    small = T ** d / rho0
    edge = (1.0 - 1.0 / rho0) * n
    return (
        CountAtLeast(annulus(T / 2, 3 * T, d), math.floor(big) + 1),
        CountAtMost(annulus(T, 2 * T, d), math.ceil(small) - 1),
        CountAtLeast(annulus(max(R - 1, 0.0), R, d), math.ceil(edge - 1e-12)),
    )


def bad_term(stats, T: float, rho0: float, R: float, n: int) -> BadTermEstimate:
    """Sum of the three event probabilities with a joint batch-means s.e.

    The events are evaluated on the same samples, so the s.e. comes from the
    series of summed indicators.  An estimate of zero gets the rule-of-three
    bound 3 / samples.
    """
    chains = _as_list(stats)
    events = bad_events(T, rho0, R, n, _dim(chains))
    terms = []
    total = 0
    for e in events:
        p, se, total = _pooled_estimate(chains, e.key)
        terms.append((e.key, p, se))
    parts = [sum(np.asarray(c.series[e.key], dtype=float) for e in events) for c in chains]
    summaries = [summarize("bad", x) for x in parts if len(x)]
    if not summaries:
        return BadTermEstimate(math.nan, math.nan, tuple(terms), 0)
    value, se = pooled(summaries)
    if value == 0.0:
        se = 3.0 / total
    elif math.isnan(se) or se <= 0:
        se = math.sqrt(value * max(1 - value, 0.0) / total) if value < 1 else 0.0
    return BadTermEstimate(value, se, tuple(terms), total)


def _dim(chains) -> int:
    return chains[0].d


# --- three-point inequality ----------------------------------------------------


def three_point_check(dist: NumberDistribution, bad, params: dict | None = None,
                      relaxed: bool = False) -> InequalityReport:
    """Implied constants C_n = max(0, (p_n - bad) / (p_(n+1) + p_(n-1))).

    `bad` is a BadTermEstimate, a float, or a mapping n -> either.  Masses below
    the noise floor count as zero in the denominator.  A significant p_n with
    both neighbours at zero is a hard failure (a degenerate, non-mixing input).
    """
    floor = dist.floor
    per_n = {}
    bad_free = {}
    hard = []
    best_n, best_c = None, 0.0
    for n in dist.support():
        b, _ = _bad_at(bad, n)
        pn, se_n = dist.p(n), dist.se(n)
        up, down = dist.p(n + 1), dist.p(n - 1)
        denom = (up if up > floor else 0.0) + (down if down > floor else 0.0)
        if denom == 0.0:
            if pn > SIGNIFICANCE * se_n:
                hard.append(n)
            per_n[n] = math.inf if pn > b else 0.0
            bad_free[n] = math.inf
            continue
        c = max(0.0, (pn - b) / denom)
        per_n[n] = c
        bad_free[n] = pn / denom
        if best_n is None or c > best_c:
            best_n, best_c = n, c
    finite = {n: c for n, c in per_n.items() if math.isfinite(c)}
    implied = max(per_n.values()) if per_n else 0.0
    if best_n is None:
        lhs = lhs_se = rhs = rhs_se = 0.0
    else:
        b, b_se = _bad_at(bad, best_n)
        lhs, lhs_se = dist.p(best_n), dist.se(best_n)
        denom = dist.p(best_n + 1) + dist.p(best_n - 1)
        rhs = best_c * denom + b
        rhs_se = math.hypot(best_c * math.hypot(dist.se(best_n + 1), dist.se(best_n - 1)), b_se)
    details = {
        "implied_by_n": {str(n): c for n, c in sorted(per_n.items())},
        "bad_free_by_n": {str(n): c for n, c in sorted(bad_free.items())},
        "bad_free_max": max((c for c in bad_free.values()), default=0.0),
        "hard_failure_n": hard,
        "noise_floor": floor,
        "finite_n": sorted(finite),
    }
    return InequalityReport(
        name="three_point",
        lhs=lhs,
        lhs_se=lhs_se,
        rhs=rhs,
        rhs_se=rhs_se,
        implied_constant=implied,
        passed=math.isfinite(implied) and not hard,
        params=dict(params or {}),
        relaxed=relaxed,
        hard_failure=bool(hard),
        details=details,
    )


def _bad_at(bad, n: int) -> tuple[float, float]:
    if isinstance(bad, dict):
        bad = bad.get(n, 0.0)
    if isinstance(bad, BadTermEstimate):
        return bad.value, bad.se
    return float(bad), 0.0


def seed_stability(values, tol: float = 0.5) -> tuple[bool, float, float]:
    """Every value within `tol` relative of the mean: (stable, mean, max relative deviation)."""
    v = np.asarray(list(values), dtype=float)
    if len(v) == 0 or not np.all(np.isfinite(v)):
        return False, math.nan, math.inf
    mean = float(np.mean(v))
    if mean == 0.0:
        dev = 0.0 if np.all(v == 0) else math.inf
    else:
        dev = float(np.max(np.abs(v - mean)) / abs(mean))
    return dev < tol, mean, dev


# --- overcrowding ------------------------------------------------------------


def overcrowding_condition(T: float, rho0: float | None, d: int, U: Region | None = None) -> EventSpec:
    """{y_0 in U} and {Y(B_3T minus B_T/2) <= rho0 T^d}; U defaults to B_5T/2 minus B_3T/4.

    rho0 = None drops the density cap.
    """
    U = U if U is not None else annulus(0.75 * T, 2.5 * T, d)
    if rho0 is None:
        return AllOf((Inside(0, U),))
    return AllOf((Inside(0, U), CountAtMost(annulus(T / 2, 3 * T, d), math.floor(rho0 * T ** d))))


@dataclass
class OvercrowdingCurve:
    r: float
    points: list
    slope: float
    slope_se: float
    n_conditioned: int
    fit_rhos: list
    cov: np.ndarray = field(default=None, repr=False)

    def record(self) -> dict:
        return {
            "r": self.r,
            "points": [list(p) for p in self.points],
            "slope": self.slope,
            "slope_se": self.slope_se,
            "n_conditioned": self.n_conditioned,
            "fit_rhos": self.fit_rhos,
        }

    def usable(self) -> list:
        """Grid values whose tail probability lies strictly between the noise floor and 1."""
        floor = noise_floor(self.n_conditioned)
        return [rho for rho, p, _ in self.points if floor < p < 1.0]

    def fit(self, rhos) -> tuple[float, float]:
        """Slope of log P against rho^2 over `rhos` with its delta-method s.e.

        Weighted least squares with inverse-variance weights on log P; the
        s.e. uses the full batch-means covariance of the tail indicators.
        """
        grid = [p[0] for p in self.points]
        use = [grid.index(rho) for rho in rhos]
        if len(use) < 2:
            return math.nan, math.nan
        p = np.array([self.points[k][1] for k in use])
        cov = self.cov[np.ix_(use, use)] / np.outer(p, p)
        var = np.diag(cov).copy()
        var[~(var > 0)] = np.max(var[var > 0]) if np.any(var > 0) else 1.0
        x = np.array([grid[k] ** 2 for k in use])
        w = 1.0 / var
        xbar = np.sum(w * x) / np.sum(w)
        coef = w * (x - xbar) / np.sum(w * (x - xbar) ** 2)
        slope = float(coef @ np.log(p))
        v = float(coef @ cov @ coef)
        return slope, (math.sqrt(v) if v > 0 else math.nan)


MIN_CONDITIONED = 200


def overcrowding_curve(stats, r: float, rho_grid, condition: EventSpec | None = None,
                       min_samples: int = MIN_CONDITIONED) -> OvercrowdingCurve:
    """P(Y(B_r(y_0)) >= rho r^d | condition) for each rho, and the slope of log P vs rho^2.

    Conditioning is by sample filtering, requiring at least `min_samples`
    accepted samples.  The slope is fitted over grid points above the noise
    floor and below 1 (see `OvercrowdingCurve.fit`).
    """
    chains = _as_list(stats)
    d = _dim(chains)
    counts_key = str(NeighborCount(0, r))
    rows = []
    for c in chains:
        counts = np.asarray(c.series[counts_key], dtype=float)
        if condition is not None:
            mask = np.asarray(c.series[condition.key], dtype=bool)
            counts = counts[mask]
        rows.append(counts)
    counts = np.concatenate(rows) if rows else np.zeros(0)
    n = len(counts)
    if n < min_samples:
        raise ValueError(f"conditioning event observed {n} times, below the floor of {min_samples}")
    rhos = [float(x) for x in rho_grid]
    ind = np.stack([counts >= rho * r ** d for rho in rhos], axis=1).astype(float)
    means, cov = batch_means_cov(ind)
    ses = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    points = [(rho, float(p), _se_floor(float(p), float(se), n)) for rho, p, se in zip(rhos, means, ses)]
    curve = OvercrowdingCurve(r, points, math.nan, math.nan, n, [], cov)
    curve.fit_rhos = curve.usable()
    curve.slope, curve.slope_se = curve.fit(curve.fit_rhos)
    return curve


def compare_slopes(low: OvercrowdingCurve, high: OvercrowdingCurve) -> InequalityReport:
    """Paired runs at beta and 2 beta, refitted on their common usable grid points.

    Passes when both slopes are negative and the second is steeper at 3 s.e.
    """
    common = [rho for rho in low.usable() if rho in set(high.usable())]
    s_low, se_low = low.fit(common)
    s_high, se_high = high.fit(common)
    diff = s_high - s_low
    se = math.hypot(se_low, se_high)
    ok = s_low < 0 and s_high < 0 and diff < -SIGNIFICANCE * se
    return InequalityReport(
        name="overcrowding",
        lhs=s_high,
        lhs_se=se_high,
        rhs=s_low,
        rhs_se=se_low,
        implied_constant=diff / se if se > 0 else math.nan,
        passed=bool(ok),
        details={"slope_difference": diff, "difference_se": se, "common_rhos": common},
    )


# --- k-point correlations ------------------------------------------------------


def _check_balls(balls, R: float) -> float:
    balls = list(balls)
    if not balls:
        raise ValueError("need at least one ball")
    for b in balls:
        if not isinstance(b, Ball):
            raise ValueError("correlation check needs Ball regions")
    for a, b in combinations(balls, 2):
        gap = math.dist(a.center, b.center) - a.radius - b.radius
        if gap <= 0:
            raise ValueError(f"balls {a} and {b} overlap or touch")
    r = min(R - math.hypot(*b.center) - b.radius for b in balls)
    if r <= 0:
        raise ValueError("balls must lie strictly inside B_R")
    return r


def halved(balls) -> tuple:
    return tuple(Ball(b.center, b.radius / 2) for b in balls)


def kpoint_correlation_check(stats, balls, R: float, relaxed: bool = False) -> InequalityReport:
    """P(every ball occupied) against r^(-dn) prod vol(A_i), with r = min dist(A_i, boundary of B_R).

    If the halved balls were also recorded, the log2 of the probability ratio
    is compared with the exponent d n at 3 s.e. (same-chain covariance).
    """
    balls = tuple(balls)
    r = _check_balls(balls, R)
    chains = _as_list(stats)
    d = len(balls[0].center)
    n = len(balls)
    full = AllOccupied(balls)
    p, se, total = _pooled_estimate(chains, full.key)
    vol = math.prod(b.volume() for b in balls)
    scale = r ** (-d * n) * vol
    details = {"r": r, "bound_scale": scale, "samples": total, "exponent": d * n}
    passed = math.isfinite(p)
    half = AllOccupied(halved(balls))
    if all(half.key in c.series for c in chains):
        x = np.concatenate([np.stack([np.asarray(c.series[full.key], float),
                                      np.asarray(c.series[half.key], float)], axis=1) for c in chains])
        means, cov = batch_means_cov(x)
        details["p_half"] = float(means[1])
        if means[0] > 0 and means[1] > 0:
            jac = np.array([1 / means[0], -1 / means[1]]) / math.log(2)
            ratio = float(np.log2(means[0] / means[1]))
            ratio_se = math.sqrt(max(float(jac @ cov @ jac), 0.0))
            ok = abs(ratio - d * n) <= SIGNIFICANCE * ratio_se
            details.update({"log2_ratio": ratio, "log2_ratio_se": ratio_se, "scaling_ok": bool(ok)})
            passed = passed and ok
        else:
            details["scaling_ok"] = False
            passed = False
    return InequalityReport(
        name="kpoint",
        lhs=p,
        lhs_se=se,
        rhs=scale,
        rhs_se=0.0,
        implied_constant=p / scale,
        passed=bool(passed),
        params={"n": n, "R": R, "balls": [str(b) for b in balls]},
        relaxed=relaxed,
        details=details,
    )


# --- transport lemmas --------------------------------------------------------------


def lemma_events(n: int, T: float, rho0: float, R: float, d: int, fav_in, fav_out):
    """Events (A, target, A', target') for the two transport lemmas.

    `fav_in` is the event Fav_{n -> 0}, `fav_out` is Fav_{0 -> n}.
    """
    E = IndexedInside(first_indices(n), ball(R, d))
    shell = Inside(n, annulus(T, 2 * T, d))
    A = AllOf((E, fav_in, shell, Inside(0, ball(R - 1, d))))
    target = IndexedInside(first_indices(n + 1), ball(R, d))
    A2 = AllOf((E, fav_out, shell, CountAtMost(annulus(T / 2, 3 * T, d), math.floor(rho0 * T ** d))))
    target2 = IndexedInside(frozenset(range(1, n)), ball(R, d))
    return A, target, A2, target2


def lemma_transport_check(stats, n: int, T: float, rho0: float, R: float, fav_in, fav_out,
                          relaxed: bool = True) -> tuple[InequalityReport, InequalityReport]:
    """Implied constants Q(A) / (T^d Q(E_[n+1])) and Q(A') (M-n)(M-n+1) / (T^d Q(E_{1..n-1}))."""
    chains = _as_list(stats)
    m = chains[0].m
    d = _dim(chains)
    A, target, A2, target2 = lemma_events(n, T, rho0, R, d, fav_in, fav_out)
    out = []
    for name, src, tgt, factor in (
        ("lemma_out_to_in", A, target, T ** d),
        ("lemma_in_to_out", A2, target2, T ** d / max((m - n) * (m - n + 1), 1)),
    ):
        lhs, lhs_se, total = _pooled_estimate(chains, src.key)
        q, q_se, _ = _pooled_estimate(chains, tgt.key)
        floor = noise_floor(total)
        hard = q <= floor and lhs > SIGNIFICANCE * lhs_se and lhs > floor
        if lhs <= floor:
            implied = 0.0
        elif q > 0:
            implied = lhs / (factor * q)
        else:
            implied = math.inf
        out.append(InequalityReport(
            name=name,
            lhs=lhs,
            lhs_se=lhs_se,
            rhs=factor * q,
            rhs_se=factor * q_se,
            implied_constant=implied,
            passed=math.isfinite(implied) and not hard,
            params={"n": n, "T": T, "rho0": rho0, "R": R},
            relaxed=relaxed,
            hard_failure=bool(hard),
            details={"source": src.key, "target": tgt.key},
        ))
    return out[0], out[1]


def lemma_scaling_ok(small: InequalityReport, large: InequalityReport, d: int) -> bool:
    """Source probability grows no faster than T^d between two T values (log scale, 3 s.e.)."""
    t1, t2 = small.params["T"], large.params["T"]
    if small.lhs <= 0 or large.lhs <= 0:
        return True
    growth = math.log(large.lhs / small.lhs)
    se = math.hypot(small.lhs_se / small.lhs, large.lhs_se / large.lhs)
    return growth <= d * math.log(t2 / t1) + SIGNIFICANCE * se


# --- non-rigidity indicator ---------------------------------------------------------


def nonrigidity_indicator(runs) -> dict:
    """Support width and entropy of X(B_R) for a sequence of (S, NumberDistribution).

    The signature of non-rigidity is a width of at least 2 persisting as S grows.
    """
    rows = []
    for S, dist in runs:
        support = dist.support()
        rows.append({"S": S, "width": len(support), "support": support, "entropy": dist.entropy()})
    rigid_like = any(r["width"] < 2 for r in rows) or not rows
    return {"name": "nonrigidity", "rows": rows, "rigid_like": rigid_like, "passed": not rigid_like}


# --- de-indexing ------------------------------------------------------------------


def _inflation(p: float, se: float, total: int) -> float:
    """Batch-means variance over the independent-sample binomial variance (at least 1)."""
    if not 0 < p < 1 or not se > 0:
        return 1.0
    return max(1.0, se * se * total / (p * (1 - p)))


def deindexing_check(stats, R: float, n: int, d: int) -> InequalityReport:
    """binom(M, n) Q(E_[n],R) against Q(E_n,R) within 3 combined s.e.

    The labelled event is rare (its probability is Q(E_n,R) / binom(M, n)),
    and a Wald s.e. shrinks together with the estimate when a run happens to
    see few hits, which gives heavy-tailed z scores.  The labelled side
    therefore uses a score-type s.e.: the binomial variance at the value the
    identity predicts, times the larger of the autocorrelation inflations
    measured on the labelled and the unlabelled series.  The count side uses
    pooled batch means.  The plain batch-means and between-chain s.e. are kept
    in the details.
    """
    chains = _as_list(stats)
    m = chains[0].m
    idx, cnt = IndexedInside(first_indices(n), ball(R, d)), CountEquals(ball(R, d), n)
    k = math.comb(m, n)
    p_idx, se_idx, total = _pooled_estimate(chains, idx.key)
    rhs, rhs_se, _ = _pooled_estimate(chains, cnt.key)
    lhs = k * p_idx
    p0 = rhs / k
    infl = max(_inflation(p_idx, se_idx, total), _inflation(rhs, rhs_se, total))
    lhs_se = k * math.sqrt(p0 * (1 - p0) * infl / total) if 0 < p0 < 1 else k * se_idx
    details = {"binom": k, "samples": total, "inflation": infl, "batch_means_se": k * se_idx}
    if len(chains) >= 2:
        per_chain = np.array([[k * np.mean(np.asarray(c.series[idx.key], float)),
                               np.mean(np.asarray(c.series[cnt.key], float))] for c in chains])
        spread = per_chain.std(axis=0, ddof=1) / math.sqrt(len(chains))
        details["between_chain_se"] = [float(spread[0]), float(spread[1])]
    ok = abs(lhs - rhs) <= SIGNIFICANCE * math.hypot(lhs_se, rhs_se)
    return InequalityReport(
        name="deindexing",
        lhs=lhs,
        lhs_se=lhs_se,
        rhs=rhs,
        rhs_se=rhs_se,
        implied_constant=lhs / rhs if rhs > 0 else math.nan,
        passed=bool(ok),
        params={"n": n, "R": R},
        details=details,
    )
