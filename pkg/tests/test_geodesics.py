import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gogmetric import errors
from gogmetric.geodesics import geodesic, rescale_to_morphism, verify_path
from gogmetric.gog import labeled_isomorphic
from gogmetric.lipschitz import distance
from gogmetric.marking import identity_marking
from gogmetric.samples import barbell, random_marked_pair, rose, theta
from _support import load

FREE = [rose(2), rose(3), theta(), theta(extra_loop=True), barbell()]


def rose_pair():
    T, T2 = load("rose_half.gog"), load("rose_third.gog")
    return T, T2, identity_marking(T, T2)


def test_rose_path_phases():
    T, T2, m = rose_pair()
    p = geodesic(T, T2, m, samples=4)
    assert p.sigma == Fraction(4, 3)
    assert [s.t for s in p.samples][0] == 0 and p.samples[-1].t == 1
    assert [(s.t, s.phase) for s in p.samples] == [
        (0, "Shrink"), (Fraction(1, 8), "Shrink"), (Fraction(1, 4), "Shrink"), (Fraction(3, 8), "Shrink"),
        (Fraction(1, 2), "Homothety"), (1, "Fold"),
    ]
    assert p.sigma_from_start(len(p.samples) - 1) == p.sigma
    assert labeled_isomorphic(p.samples[-1].gog, T2)
    assert verify_path(p).ok


def test_morphism_lengths():
    T, T2, m = rose_pair()
    T_bar, C, mor = rescale_to_morphism(T, T2, m)
    assert C == distance(T, T2, m).sigma
    assert T_bar.covolume() > 0


def test_nonfree_rejected():
    g = load("fig1_gamma.gog")
    with pytest.raises(errors.NotRepresentable):
        geodesic(g, g, identity_marking(g))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, len(FREE) - 1), st.integers(0, 2**32 - 1))
def test_random_paths_are_geodesic(k, seed):
    rng = random.Random(seed)
    T, T2, m = random_marked_pair(FREE[k], rng, steps=rng.randint(1, 3))
    p = geodesic(T, T2, m, samples=2)
    chk = verify_path(p)
    assert chk.additive and chk.witness_persistent and chk.endpoint_lengths_match, chk.failures[:3]
    # sigma along the path is monotone from the start
    vals = [p.sigma_from_start(i) for i in range(len(p.samples))]
    assert vals == sorted(vals) and vals[-1] == p.sigma
