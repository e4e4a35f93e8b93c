import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gogmetric import errors
from gogmetric.gog import labeled_isomorphic, normalize, parse_gog, subdivide, valence_profile, validate
from gogmetric.tree import oracle_translation_length
from gogmetric.words import (
    concat, format_word, inverse, parse_word, power, reduce_word, tl, translation_length, words_equal,
)
from _support import AMALGAM, BS12, cyclic_shapes, finite_shapes, free_shapes, load, random_word

ALL_SHAPES = free_shapes() + finite_shapes() + cyclic_shapes()
shape_idx = st.integers(0, len(ALL_SHAPES) - 1)
seeds = st.integers(0, 2**32 - 1)


# --- parsing ---------------------------------------------------------------

def test_parse_data_files():
    for name in ["fig1_gamma.gog", "fig1_gamma_prime.gog", "bs16.gog", "bs16_f2.gog", "rose_half.gog"]:
        g = load(name)
        validate(g)
        assert g.covolume() > 0


@given(shape_idx, st.lists(st.integers(1, 9), min_size=4, max_size=4))
def test_text_round_trip(k, ls):
    g = ALL_SHAPES[k].with_lengths([Fraction(x, 7) for x in ls[: len(ALL_SHAPES[k].edges)]])
    again = parse_gog(g.to_text())
    assert again == g
    assert again.to_text() == g.to_text()


@pytest.mark.parametrize("text,exc", [
    ("[vertices]\nv trivial\n[edges]\na v v len=0 inc_src=trivial inc_dst=trivial\n[base] v\n",
     errors.NonpositiveLength),
    ("[vertices]\nv trivial\nw trivial\n[edges]\na v v len=1 inc_src=trivial inc_dst=trivial\n[base] v\n",
     errors.DisconnectedGraph),
    ("[vertices]\nv finite n=2 table=0,1,1,1\n[edges]\n[base] v\n", errors.NonGroupTable),
    ("[vertices]\nv cyclic\n[edges]\nt v v len=1 inc_src=index=0 inc_dst=index=1\n[base] v\n",
     errors.NonInjectiveInclusion),
    ("[vertices]\nv trivial\n[edges]\na v v len=1 inc_src=trivial\n[base] v\n", errors.ParseError),
])
def test_malformed_input(text, exc):
    with pytest.raises(exc):
        validate(parse_gog(text))


def test_subdivide_and_normalize_undo():
    g = load("fig1_gamma.gog")
    s = subdivide(g, "a", Fraction(1, 9))
    assert len(s.edges) == 4 and s.covolume() == g.covolume()
    assert labeled_isomorphic(normalize(s), g)


def test_fig1_valence_profiles_differ():
    g, h = load("fig1_gamma.gog"), load("fig1_gamma_prime.gog")
    assert valence_profile(g) != valence_profile(h)
    assert not labeled_isomorphic(g, h)


# --- words -----------------------------------------------------------------

@settings(max_examples=80)
@given(shape_idx, seeds)
def test_reduce_idempotent(k, seed):
    g = ALL_SHAPES[k]
    w = random_word(g, random.Random(seed), 6)
    r = reduce_word(g, w)
    assert reduce_word(g, r) == r
    assert words_equal(g, w, r)


@settings(max_examples=60)
@given(shape_idx, seeds)
def test_format_parse_round_trip(k, seed):
    g = ALL_SHAPES[k]
    w = random_word(g, random.Random(seed))
    assert words_equal(g, parse_word(g, format_word(g, w)), w)


@settings(max_examples=80, deadline=None)
@given(shape_idx, seeds)
def test_oracle_matches_normal_form(k, seed):
    g = ALL_SHAPES[k]
    w = random_word(g, random.Random(seed))
    assert tl(g, w) == oracle_translation_length(g, w)


@settings(max_examples=60, deadline=None)
@given(shape_idx, seeds, st.integers(-3, 3))
def test_power_law(k, seed, n):
    g = ALL_SHAPES[k]
    w = random_word(g, random.Random(seed))
    assert tl(g, power(g, w, n)) == abs(n) * tl(g, w)


@settings(max_examples=60, deadline=None)
@given(shape_idx, seeds)
def test_conjugation_invariance(k, seed):
    g = ALL_SHAPES[k]
    rng = random.Random(seed)
    w, h = random_word(g, rng), random_word(g, rng)
    assert tl(g, concat(g, h, w, inverse(g, h))) == tl(g, w)


def test_bs_words():
    g = parse_gog(BS12)
    # t x t^-1 = x^2 is elliptic; t is hyperbolic of length 1
    assert tl(g, parse_word(g, "t x t^-1")) == 0
    assert tl(g, parse_word(g, "t")) == 1
    assert words_equal(g, parse_word(g, "t x t^-1"), parse_word(g, "x^2"))
    nf = translation_length(g, parse_word(g, "t x t x^-1"))
    assert not nf.elliptic and nf.translation_length == 2


def test_amalgam_relation():
    g = parse_gog(AMALGAM)
    assert words_equal(g, parse_word(g, "x^2"), parse_word(g, "s y^3 s^-1"))


def test_malformed_word():
    g = load("rose_half.gog")
    with pytest.raises(errors.MalformedWord):
        parse_word(g, "a q")
    with pytest.raises(errors.MalformedWord):
        parse_word(g, "a^")
