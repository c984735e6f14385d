"""Scalar observables recorded along a chain.

Each observable maps a block of recorded configurations, positions of shape
(n, M, d) with energies (n,), to one value per configuration.  Events from
`coulomblab.geometry` are recorded the same way as 0/1 series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coulomblab.geometry import EventSpec, Region, _fmt


class Observable:
    def evaluate(self, positions, energies) -> np.ndarray:
        raise NotImplementedError

    @property
    def key(self) -> str:
        return str(self)


@dataclass(frozen=True)
class Energy(Observable):
    def evaluate(self, positions, energies):
        return np.asarray(energies, dtype=float)

    def __str__(self):
        return "energy"


@dataclass(frozen=True)
class SquaredNorm(Observable):
    index: int = 0

    def evaluate(self, positions, energies):
        x = np.asarray(positions)[:, self.index, :]
        return np.sum(x * x, axis=-1)

    def __str__(self):
        return f"sqnorm({self.index})"


@dataclass(frozen=True)
class Count(Observable):
    region: Region

    def evaluate(self, positions, energies):
        positions = np.asarray(positions)
        if positions.shape[1] == 0:
            return np.zeros(len(positions))
        return np.count_nonzero(self.region.contains(positions), axis=-1).astype(float)

    def __str__(self):
        return f"count({self.region})"


@dataclass(frozen=True)
class NeighborCount(Observable):
    """Y(B_r(y_index)), counting the tagged particle itself."""

    index: int
    r: float

    def evaluate(self, positions, energies):
        positions = np.asarray(positions)
        diff = positions - positions[:, self.index:self.index + 1, :]
        return np.count_nonzero(np.sum(diff * diff, axis=-1) < self.r * self.r, axis=-1).astype(float)

    def __str__(self):
        return f"neighbors({self.index};{_fmt(self.r)})"


def observe(obs, positions, energies) -> np.ndarray:
    if isinstance(obs, EventSpec):
        return np.asarray(obs.evaluate(positions), dtype=bool)
    return np.asarray(obs.evaluate(positions, energies), dtype=float)


def parse_observable(text: str):
    """Inverse of `str` for observables: energy, sqnorm(i), count(region), neighbors(i;r).

    Anything else is parsed as an event.
    """
    from coulomblab.geometry import parse_event, parse_region

    s = "".join(text.split())
    if s == "energy":
        return Energy()
    if s.startswith("sqnorm(") and s.endswith(")"):
        return SquaredNorm(int(s[7:-1]))
    if s.startswith("count(") and s.endswith(")"):
        return Count(parse_region(s[6:-1]))
    if s.startswith("neighbors(") and s.endswith(")"):
        i, r = s[10:-1].split(";")
        return NeighborCount(int(i), float(r))
    return parse_event(s)
