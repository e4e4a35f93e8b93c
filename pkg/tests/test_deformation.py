import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gogmetric import errors
from gogmetric.deformation import (
    collapse, expand, has_nontrivial_integral_modulus, index_invariant, maximal_elliptics, modulus,
    projectivize, subdivide_marked, twist, type_IIA_fold,
)
from gogmetric.gog import Inclusion, labeled_isomorphic, parse_gog
from gogmetric.samples import random_automorphism, random_finite_tree, rose, virtually_free, zn
from gogmetric.words import concat, parse_word, tl
from _support import AMALGAM, BS12, load, random_word

SEGMENT = """
[vertices]
p finite n=6 table={z6}
q finite n=4 table={z4}
[edges]
e p q len=2/3 inc_src=map=0:0,1:3 inc_dst=map=0:0,1:2
[base] p
"""


def _table(n):
    return ",".join(str((i + j) % n) for i in range(n) for j in range(n))


def segment():
    return parse_gog(SEGMENT.format(z6=_table(6), z4=_table(4)))


def test_collapse_then_expand():
    g = load("fig1_gamma_prime.gog")
    c, m = collapse(g, "c")
    assert len(c.vids) == 1 and len(c.edges) == 2
    m.validate()
    inc = Inclusion.finite({0: 0, 1: 1})
    back, m2 = expand(c, c.vids[0], "w2", zn(2), inc, inc, [("b'", "src"), ("b'", "dst")], Fraction(1, 3), "c")
    m2.validate()
    assert labeled_isomorphic(back, g)


def test_collapse_rejects_loops_and_proper_ends():
    g = load("fig1_gamma.gog")
    with pytest.raises(errors.NotCollapsible):
        collapse(g, "a")
    with pytest.raises(errors.NotCollapsible):
        collapse(virtually_free(0), "s")  # trivial edge between Z/2 and Z/3


def test_expand_rejects_bad_embedding():
    g = virtually_free(2)
    with pytest.raises(errors.GogError):
        expand(g, "v", "v", zn(2), Inclusion.trivial(), Inclusion.trivial(), [], Fraction(1))


def test_projectivize():
    g = load("bs16.gog")
    assert projectivize(g).covolume() == 1


def test_index_invariant_segment():
    g = segment()
    assert sorted(maximal_elliptics(g, "e")) == [("p", 3), ("q", 2)]
    assert index_invariant(g).value == 5 * Fraction(2, 3)


def test_index_invariant_free_rose():
    assert index_invariant(rose(3)).value == 1


def test_iia_example_drops_index():
    # pull the generator of Z/4 along e towards a Z/2 vertex equal to the edge group
    text = f"""
[vertices]
p finite n=4 table={_table(4)}
q finite n=2 table={_table(2)}
[edges]
e p q len=1 inc_src=map=0:0,1:2 inc_dst=map=0:0,1:1
f q q len=1 inc_src=trivial inc_dst=trivial
[base] p
"""
    g = parse_gog(text)
    new, fmap = type_IIA_fold(g, "e", 1)
    assert fmap.lipschitz_constant() == 1
    assert new.groups[new.vindex["q"]].n == 4
    assert index_invariant(new).value < index_invariant(g).value
    with pytest.raises(errors.ElementAlreadyInEdgeGroup):
        type_IIA_fold(g, "e", 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_iia_monotone_random(seed):
    rng = random.Random(seed)
    g = random_finite_tree(rng)
    assert not has_nontrivial_integral_modulus(g)
    before = index_invariant(g).value
    for e in g.edges:
        i = g.eindex[e.id]
        for rev in (False, True):
            G = g.groups[g.tail[2 * i + rev]]
            for x in range(getattr(G, "n", 1)):
                try:
                    new, fmap = type_IIA_fold(g, e.id, x, rev)
                except (errors.ElementAlreadyInEdgeGroup, errors.NotRepresentable):
                    continue
                assert fmap.lipschitz_constant() == 1
                assert index_invariant(new).value < before


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_index_invariant_under_twist_and_subdivision(seed):
    rng = random.Random(seed)
    g = random_finite_tree(rng)
    val = index_invariant(g).value
    phi = random_automorphism(g, rng, steps=3)
    assert index_invariant(twist(g, phi)[0]).value == val
    e = rng.choice(g.edges)
    sub, m = subdivide_marked(g, e.id, e.length / 3)
    assert index_invariant(sub).value == val
    w = random_word(g, rng)
    assert tl(sub, m.apply(w)) == tl(g, w)


def test_modulus_values():
    g = parse_gog(BS12)
    assert modulus(g, parse_word(g, "t")) in (2, Fraction(1, 2))
    assert modulus(g, parse_word(g, "x")) == 1
    assert has_nontrivial_integral_modulus(g)
    assert not has_nontrivial_integral_modulus(parse_gog(AMALGAM))
    assert not has_nontrivial_integral_modulus(rose(2))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([BS12, AMALGAM]), st.integers(0, 2**32 - 1))
def test_modulus_is_a_homomorphism(text, seed):
    g = parse_gog(text)
    rng = random.Random(seed)
    u, v = random_word(g, rng), random_word(g, rng)
    assert modulus(g, concat(g, u, v)) == modulus(g, u) * modulus(g, v)
