"""Regions of R^d and the counting / indexed events built on them.

Balls are open and complements closed, so a point exactly on a sphere
belongs to the complement of the ball.  Membership is decided by comparing
squared distances, without square roots.

Regions and events have a canonical text form used in config files::

    ball(0,0,0;1.5)          open ball, center then radius
    annulus(0,0,0;1,2)       B_2 minus B_1, i.e. 1 <= |x| < 2
    compl(ball(0,0,0;4))     closed complement
    union(ball(0,0,0;2),compl(ball(0,0,0;4)))
    all

    count_eq(ball(0,0,0;2);3)      count_ge(...;n)   count_le(...;n)
    indexed(0,1,2;ball(0,0,0;2))   particles 0,1,2 inside, all others outside
    pair_close(0,3;1)              |y_0 - y_3| <= 1
    inside(0;ball(0,0,0;1))        y_0 in the region
    occupied(ball(..),ball(..))    every listed region holds at least one particle
    and(event,event,...)           conjunction

Particle indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from coulomblab.model import Configuration


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _sqdist(points, center) -> np.ndarray:
    diff = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    return np.sum(diff * diff, axis=-1)


class Region:
    bounded = False

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    def volume(self, d: int | None = None) -> float:
        raise ValueError(f"volume undefined for unbounded or composite region {self}")


@dataclass(frozen=True)
class Ball(Region):
    center: tuple
    radius: float

    bounded = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def d(self) -> int:
        return len(self.center)

    def contains(self, points):
        return _sqdist(points, self.center) < self.radius * self.radius

    def volume(self, d=None):
        return unit_ball_volume(self.d) * self.radius ** self.d

    def __str__(self):
        return f"ball({','.join(map(_fmt, self.center))};{_fmt(self.radius)})"


@dataclass(frozen=True)
class Annulus(Region):
    """B_{r_out}(center) minus B_{r_in}(center): r_in <= |x - center| < r_out."""

    center: tuple
    r_in: float
    r_out: float

    bounded = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not 0 <= self.r_in < self.r_out:
            raise ValueError("annulus needs 0 <= r_in < r_out")

    @property
    def d(self) -> int:
        return len(self.center)

    def contains(self, points):
        r2 = _sqdist(points, self.center)
        return (r2 >= self.r_in * self.r_in) & (r2 < self.r_out * self.r_out)

    def volume(self, d=None):
        return unit_ball_volume(self.d) * (self.r_out ** self.d - self.r_in ** self.d)

    def __str__(self):
        c = ",".join(map(_fmt, self.center))
        return f"annulus({c};{_fmt(self.r_in)},{_fmt(self.r_out)})"


@dataclass(frozen=True)
class Complement(Region):
    inner: Region

    def contains(self, points):
        return ~self.inner.contains(points)

    def __str__(self):
        return f"compl({self.inner})"


@dataclass(frozen=True)
class Union(Region):
    left: Region
    right: Region

    def contains(self, points):
        return self.left.contains(points) | self.right.contains(points)

    def __str__(self):
        return f"union({self.left},{self.right})"


@dataclass(frozen=True)
class All(Region):
    def contains(self, points):
        return np.ones(np.shape(points)[:-1], dtype=bool)

    def __str__(self):
        return "all"


def ball(radius: float, d: int, center=None) -> Ball:
    """Ball about the origin (or `center`) in dimension d."""
    return Ball(tuple(center) if center is not None else (0.0,) * d, radius)


def annulus(r_in: float, r_out: float, d: int) -> Annulus:
    return Annulus((0.0,) * d, r_in, r_out)


def allowed_domain(R: float, S: float, d: int) -> Region:
    """B_R union the closed complement of B_S."""
    if math.isinf(R):
        return All()
    if math.isinf(S):
        return ball(R, d)
    return Union(ball(R, d), Complement(ball(S, d)))


def region_contains(r: Region, x) -> bool:
    return bool(r.contains(np.asarray(x, dtype=float)))


def region_volume(r: Region) -> float:
    return r.volume()


def count_in(c: Configuration, r: Region) -> int:
    if c.m == 0:
        return 0
    return int(np.count_nonzero(r.contains(c.positions)))


# --- events -----------------------------------------------------------------


class EventSpec:
    """Boolean function of a configuration, vectorized over leading axes.

    `evaluate` takes positions of shape (..., M, d) and returns bool (...).
    """

    def evaluate(self, positions) -> np.ndarray:
        raise NotImplementedError

    @property
    def key(self) -> str:
        return str(self)


def _counts(region: Region, positions) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    if positions.shape[-2] == 0:
        return np.zeros(positions.shape[:-2], dtype=np.int64)
    return np.count_nonzero(region.contains(positions), axis=-1)


@dataclass(frozen=True)
class CountEquals(EventSpec):
    region: Region
    n: int

    def evaluate(self, positions):
        return _counts(self.region, positions) == self.n

    def __str__(self):
        return f"count_eq({self.region};{self.n})"


@dataclass(frozen=True)
class CountAtLeast(EventSpec):
    region: Region
    n: float

    def evaluate(self, positions):
        return _counts(self.region, positions) >= self.n

    def __str__(self):
        return f"count_ge({self.region};{_fmt(self.n)})"


@dataclass(frozen=True)
class CountAtMost(EventSpec):
    region: Region
    n: float

    def evaluate(self, positions):
        return _counts(self.region, positions) <= self.n

    def __str__(self):
        return f"count_le({self.region};{_fmt(self.n)})"


@dataclass(frozen=True)
class IndexedInside(EventSpec):
    """Exactly the particles in `indices` lie in the region."""

    indices: frozenset
    region: Region

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))

    def evaluate(self, positions):
        positions = np.asarray(positions, dtype=float)
        m = positions.shape[-2]
        if any(i < 0 or i >= m for i in self.indices):
            raise IndexError(f"index out of range for {m} particles")
        inside = self.region.contains(positions)
        want = np.zeros(m, dtype=bool)
        want[list(self.indices)] = True
        return np.all(inside == want, axis=-1)

    def __str__(self):
        idx = ",".join(str(i) for i in sorted(self.indices))
        return f"indexed({idx};{self.region})"


@dataclass(frozen=True)
class PairClose(EventSpec):
    i: int
    j: int
    distance: float

    def evaluate(self, positions):
        positions = np.asarray(positions, dtype=float)
        diff = positions[..., self.i, :] - positions[..., self.j, :]
        return np.sum(diff * diff, axis=-1) <= self.distance * self.distance

    def __str__(self):
        return f"pair_close({self.i},{self.j};{_fmt(self.distance)})"


@dataclass(frozen=True)
class Inside(EventSpec):
    i: int
    region: Region

    def evaluate(self, positions):
        positions = np.asarray(positions, dtype=float)
        return self.region.contains(positions[..., self.i, :])

    def __str__(self):
        return f"inside({self.i};{self.region})"


@dataclass(frozen=True)
class AllOccupied(EventSpec):
    regions: tuple

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))

    def evaluate(self, positions):
        positions = np.asarray(positions, dtype=float)
        out = np.ones(positions.shape[:-2], dtype=bool)
        for r in self.regions:
            out &= _counts(r, positions) >= 1
        return out

    def __str__(self):
        return f"occupied({','.join(map(str, self.regions))})"


@dataclass(frozen=True)
class AllOf(EventSpec):
    events: tuple

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def evaluate(self, positions):
        positions = np.asarray(positions, dtype=float)
        out = np.ones(positions.shape[:-2], dtype=bool)
        for e in self.events:
            out &= e.evaluate(positions)
        return out

    def __str__(self):
        return f"and({','.join(map(str, self.events))})"


def event_holds(e: EventSpec, c: Configuration) -> bool:
    return bool(e.evaluate(c.positions))


def count_events(region: Region, m: int) -> list[CountEquals]:
    return [CountEquals(region, n) for n in range(m + 1)]


def first_indices(n: int) -> frozenset:
    """The index set [n] in 0-based form: {0, ..., n-1}."""
    return frozenset(range(n))


# --- parsing ----------------------------------------------------------------


class ParseError(ValueError):
    pass


class _Parser:
    def __init__(self, text: str):
        self.s = "".join(text.split())
        self.k = 0

    def peek(self, n=1):
        return self.s[self.k:self.k + n]

    def expect(self, tok):
        if not self.s.startswith(tok, self.k):
            raise ParseError(f"expected {tok!r} at offset {self.k} in {self.s!r}")
        self.k += len(tok)

    def ident(self):
        j = self.k
        while j < len(self.s) and (self.s[j].isalpha() or self.s[j] == "_"):
            j += 1
        if j == self.k:
            raise ParseError(f"expected a name at offset {self.k} in {self.s!r}")
        name, self.k = self.s[self.k:j], j
        return name

    def number_list(self, stop):
        j = self.k
        while j < len(self.s) and self.s[j] not in stop:
            j += 1
        chunk, self.k = self.s[self.k:j], j
        if not chunk:
            return []
        try:
            return [float(v) for v in chunk.split(",")]
        except ValueError:
            raise ParseError(f"bad number list {chunk!r}") from None

    def region(self) -> Region:
        name = self.ident()
        if name == "all":
            return All()
        self.expect("(")
        if name in ("ball", "annulus"):
            center = self.number_list(";")
            self.expect(";")
            radii = self.number_list(")")
            self.expect(")")
            if name == "ball":
                if len(radii) != 1:
                    raise ParseError("ball takes one radius")
                return Ball(tuple(center), radii[0])
            if len(radii) != 2:
                raise ParseError("annulus takes two radii")
            return Annulus(tuple(center), radii[0], radii[1])
        if name == "compl":
            inner = self.region()
            self.expect(")")
            return Complement(inner)
        if name == "union":
            left = self.region()
            self.expect(",")
            right = self.region()
            self.expect(")")
            return Union(left, right)
        raise ParseError(f"unknown region {name!r}")

    def event(self) -> EventSpec:
        name = self.ident()
        self.expect("(")
        if name in ("count_eq", "count_ge", "count_le"):
            region = self.region()
            self.expect(";")
            (n,) = self.number_list(")")
            self.expect(")")
            if name == "count_eq":
                return CountEquals(region, int(n))
            return (CountAtLeast if name == "count_ge" else CountAtMost)(region, n)
        if name == "indexed":
            idx = self.number_list(";")
            self.expect(";")
            region = self.region()
            self.expect(")")
            return IndexedInside(frozenset(int(i) for i in idx), region)
        if name == "pair_close":
            ij = self.number_list(";")
            self.expect(";")
            (dist,) = self.number_list(")")
            self.expect(")")
            return PairClose(int(ij[0]), int(ij[1]), dist)
        if name == "inside":
            (i,) = self.number_list(";")
            self.expect(";")
            region = self.region()
            self.expect(")")
            return Inside(int(i), region)
        if name in ("occupied", "and"):
            items = [self.region() if name == "occupied" else self.event()]
            while self.peek() == ",":
                self.expect(",")
                items.append(self.region() if name == "occupied" else self.event())
            self.expect(")")
            return AllOccupied(tuple(items)) if name == "occupied" else AllOf(tuple(items))
        raise ParseError(f"unknown event {name!r}")

    def done(self):
        if self.k != len(self.s):
            raise ParseError(f"trailing text {self.s[self.k:]!r}")


def parse_region(text: str) -> Region:
    p = _Parser(text)
    r = p.region()
    p.done()
    return r


def parse_event(text: str) -> EventSpec:
    p = _Parser(text)
    e = p.event()
    p.done()
    return e
