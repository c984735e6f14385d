import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomblab.geometry import (
    All,
    AllOccupied,
    AllOf,
    Annulus,
    Ball,
    Complement,
    CountAtLeast,
    CountAtMost,
    CountEquals,
    IndexedInside,
    Inside,
    PairClose,
    ParseError,
    Union,
    allowed_domain,
    annulus,
    ball,
    count_events,
    count_in,
    first_indices,
    parse_event,
    parse_region,
    region_volume,
    unit_ball_volume,
)
from coulomblab.model import Configuration


def test_ball_is_open_and_complement_closed():
    b = ball(2.0, 3)
    assert not b.contains(np.array([2.0, 0, 0]))
    assert Complement(b).contains(np.array([2.0, 0, 0]))


def test_annulus_includes_inner_boundary_only():
    a = annulus(2.0, 4.0, 3)
    assert a.contains(np.array([2.0, 0, 0]))
    assert not a.contains(np.array([4.0, 0, 0]))


def test_allowed_domain_and_annulus_partition_space():
    rng = np.random.default_rng(0)
    x = rng.uniform(-6, 6, (5000, 3))
    x[:3] = [[2.0, 0, 0], [0, 4.0, 0], [0, 0, 0]]
    dom = allowed_domain(2.0, 4.0, 3)
    assert np.all(dom.contains(x) ^ annulus(2.0, 4.0, 3).contains(x))


def test_volumes():
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert region_volume(annulus(1, 2, 3)) == pytest.approx(4 * math.pi / 3 * 7)
    with pytest.raises(ValueError):
        region_volume(All())


def test_count_in():
    c = Configuration([[0, 0, 0], [1.5, 0, 0], [5, 0, 0]])
    assert count_in(c, ball(2, 3)) == 2
    assert count_in(c, annulus(2, 4, 3)) == 0


radii = st.floats(0.1, 10, allow_nan=False)
centers = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(tuple)


@st.composite
def regions(draw, depth=2):
    kind = draw(st.sampled_from(["ball", "annulus", "all"] + (["compl", "union"] if depth else [])))
    if kind == "ball":
        return Ball(draw(centers), draw(radii))
    if kind == "annulus":
        r1, r2 = sorted([draw(radii), draw(radii)])
        return Annulus(draw(centers), r1, r2 + 0.1)
    if kind == "compl":
        return Complement(draw(regions(depth - 1)))
    if kind == "union":
        return Union(draw(regions(depth - 1)), draw(regions(depth - 1)))
    return All()


@st.composite
def events(draw, depth=1):
    r = draw(regions())
    kind = draw(st.sampled_from(["eq", "ge", "le", "idx", "pair", "in", "occ"] + (["and"] if depth else [])))
    n = draw(st.integers(0, 4))
    if kind == "eq":
        return CountEquals(r, n)
    if kind == "ge":
        return CountAtLeast(r, n)
    if kind == "le":
        return CountAtMost(r, n)
    if kind == "idx":
        return IndexedInside(frozenset(draw(st.sets(st.integers(0, 3)))), r)
    if kind == "pair":
        return PairClose(0, 1, draw(radii))
    if kind == "in":
        return Inside(draw(st.integers(0, 3)), r)
    if kind == "occ":
        return AllOccupied(tuple(draw(st.lists(regions(1), min_size=1, max_size=3))))
    return AllOf(tuple(draw(st.lists(events(0), min_size=1, max_size=3))))


@given(regions())
def test_region_text_round_trip(r):
    assert parse_region(str(r)) == r


@given(events())
def test_event_text_round_trip(e):
    assert parse_event(str(e)) == e


@given(events(), st.integers(0, 2 ** 32 - 1))
def test_parsed_event_evaluates_identically(e, seed):
    x = np.random.default_rng(seed).uniform(-6, 6, (20, 4, 3))
    assert np.array_equal(parse_event(str(e)).evaluate(x), e.evaluate(x))


def test_parse_tolerates_whitespace():
    assert parse_region(" ball( 0, 0, 0 ; 2 ) ") == ball(2.0, 3)


@pytest.mark.parametrize("text", ["ball(0,0;)", "blob(1)", "annulus(0,0,0;1)", "count_eq(ball(0,0,0;1))"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_event(text) if text.startswith("count") else parse_region(text)


@given(st.integers(0, 6), st.integers(0, 2 ** 32 - 1))
def test_count_events_partition_every_sample(m, seed):
    x = np.random.default_rng(seed).uniform(-3, 3, (50, m, 3))
    total = sum(e.evaluate(x).astype(int) for e in count_events(ball(2.0, 3), m))
    assert np.all(total == 1)


def test_indexed_inside_requires_exact_partition():
    x = np.array([[0.0, 0, 0], [0.5, 0, 0], [5.0, 0, 0]])
    b = ball(2.0, 3)
    assert IndexedInside(first_indices(2), b).evaluate(x)
    assert not IndexedInside(first_indices(1), b).evaluate(x)
    assert first_indices(3) == frozenset({0, 1, 2})


def test_indexed_events_sum_to_count_event():
    # summing E_I over all |I| = n gives E_n on every sample
    from itertools import combinations

    x = np.random.default_rng(1).uniform(-3, 3, (200, 5, 3))
    b = ball(2.0, 3)
    for n in range(6):
        total = sum(IndexedInside(frozenset(I), b).evaluate(x).astype(int) for I in combinations(range(5), n))
        assert np.array_equal(total, CountEquals(b, n).evaluate(x).astype(int))
