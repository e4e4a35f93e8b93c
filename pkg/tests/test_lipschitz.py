import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gogmetric import errors
from gogmetric.deformation import twist
from gogmetric.lipschitz import (
    candidate_maximum, check_witness, descend, detect_non_isometry, distance, enumerate_candidates,
    image_ratio, initial_map, is_optimal, sigma, sym_distance,
)
from gogmetric.marking import identity_marking
from gogmetric.samples import random_lengths, random_marked_pair, remark
from gogmetric.words import format_word, parse_word
from _support import finite_shapes, free_shapes, load, load_marking

SHAPES = free_shapes() + finite_shapes()


def test_rose_rescaling():
    T, T2 = load("rose_half.gog"), load("rose_third.gog")
    r = distance(T, T2, identity_marking(T, T2))
    assert r.sigma == Fraction(4, 3)
    assert r.label == "confirmed" and r.witness.valid
    assert format_word(T, r.witness.candidate) == "b"
    back = distance(T2, T, identity_marking(T2, T))
    assert back.sigma == Fraction(3, 2)


def test_identity_distance_is_one():
    for g in SHAPES:
        assert sigma(g, g, identity_marking(g)) == 1


def test_marking_mismatch():
    T, T2 = load("rose_half.gog"), load("rose_third.gog")
    with pytest.raises(errors.InvalidMarking):
        distance(T2, T, identity_marking(T, T2))


def test_optimal_map_has_two_gates():
    rng = random.Random(4)
    T, T2, m = random_marked_pair(SHAPES[0], rng, steps=3)
    f = descend(initial_map(m))
    assert is_optimal(f)
    assert f.lipschitz_constant() == distance(T, T2, m).sigma


def test_candidate_budget_monotone():
    rng = random.Random(11)
    T, T2, m = random_marked_pair(SHAPES[1], rng, steps=4)
    s = distance(T, T2, m, cross_check=False).sigma
    prev = Fraction(0)
    for b in (1, 2, 3):
        cmax, w = candidate_maximum(m, enumerate_candidates(T, b))
        assert prev <= cmax <= s
        assert image_ratio(m, w) == cmax
        prev = cmax


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(SHAPES) - 1), st.integers(0, 2**32 - 1))
def test_witness_and_candidates_agree(k, seed):
    rng = random.Random(seed)
    T, T2, m = random_marked_pair(SHAPES[k], rng, steps=rng.randint(0, 4))
    r = distance(T, T2, m)
    assert r.sigma >= 1
    assert r.witness.valid
    assert check_witness(r.optimal, r.witness.candidate).valid
    assert r.candidate_max == r.sigma and r.label == "confirmed"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, len(SHAPES) - 1), st.integers(0, 2**32 - 1))
def test_triangle_inequality(k, seed):
    rng = random.Random(seed)
    sh = SHAPES[k]
    T1, T2, T3 = (random_lengths(sh, rng) for _ in range(3))
    a = remark(identity_marking(sh), T1, T2)
    b = remark(identity_marking(sh), T2, T3)
    c = remark(identity_marking(sh), T1, T3)
    assert sigma(T1, T3, c) <= sigma(T1, T2, a) * sigma(T2, T3, b)


def test_sym_distance_fig1():
    g, h = load("fig1_gamma.gog"), load("fig1_gamma_prime.gog")
    fwd, back = sym_distance(g, h, load_marking("fig1.marking", g, h))
    assert fwd.sigma == 1 and back.sigma > 1


def test_detector_on_twisted_bs():
    bs = load("bs16_f2.gog")
    phi = load_marking("bs16_f2.aut", bs)
    tw, mt = twist(bs, phi)
    rep = detect_non_isometry(mt, enumerate_candidates(bs, 2).words(), elliptic=parse_word(bs, "x"))
    assert rep.fires
    assert "d" in rep.newly_fixed


def test_detector_quiet_on_identity():
    g = load("rose_half.gog")
    rep = detect_non_isometry(identity_marking(g), enumerate_candidates(g, 2).words())
    assert not rep.fires
