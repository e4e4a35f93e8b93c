"""Standard small graphs of groups, random metrics and random automorphisms.

Used by the spot checks in the dynamics module, by the CLI and by the tests.
"""
from __future__ import annotations

import random
from fractions import Fraction
from typing import Sequence

from .errors import InvalidMarking
from .gog import EdgeSpec, GraphOfGroups, Inclusion, validate
from .groups import FiniteGroup, TrivialGroup, cyclic_table
from .marking import Marking, generators
from .words import Word, concat, inverse, reduce_word

LENGTH_POOL = [Fraction(k) for k in range(1, 7)]


def _edges_from(spec: Sequence[tuple[str, str, str]], lengths: Sequence[Fraction] | None) -> list[EdgeSpec]:
    n = len(spec)
    lengths = list(lengths) if lengths is not None else [Fraction(1, n)] * n
    t = Inclusion.trivial()
    return [EdgeSpec(eid, s, d, Fraction(l), t, t) for (eid, s, d), l in zip(spec, lengths)]


def rose(n: int, lengths: Sequence[Fraction] | None = None) -> GraphOfGroups:
    names = "abcdefgh"[:n]
    g = GraphOfGroups({"v": TrivialGroup()}, _edges_from([(x, "v", "v") for x in names], lengths), "v")
    validate(g)
    return g


def theta(lengths: Sequence[Fraction] | None = None, extra_loop: bool = False) -> GraphOfGroups:
    spec = [("a", "u", "w"), ("b", "u", "w"), ("c", "u", "w")]
    if extra_loop:
        spec.append(("d", "w", "w"))
    g = GraphOfGroups({"u": TrivialGroup(), "w": TrivialGroup()}, _edges_from(spec, lengths), "u")
    validate(g)
    return g


def barbell(lengths: Sequence[Fraction] | None = None) -> GraphOfGroups:
    spec = [("a", "u", "u"), ("s", "u", "w"), ("b", "w", "w")]
    g = GraphOfGroups({"u": TrivialGroup(), "w": TrivialGroup()}, _edges_from(spec, lengths), "u")
    validate(g)
    return g


def zn(n: int) -> FiniteGroup:
    return FiniteGroup(cyclic_table(n))


def virtually_free(kind: int, lengths: Sequence[Fraction] | None = None) -> GraphOfGroups:
    """A few small virtually free graphs of groups with Z/2 and Z/3 vertex groups.

    kind 0: Z/2 and Z/3 joined by a trivial edge, with a loop at the Z/2 vertex.
    kind 1: Z/2 with a loop, joined to a trivial vertex with a loop (the shape of Fig. 1).
    kind 2: Z/3 vertex with two loops.
    kind 3: Z/2, Z/3 and Z/2 in a chain, loop at the middle.
    """
    if kind == 0:
        verts = {"u": zn(2), "w": zn(3)}
        spec = [("s", "u", "w"), ("a", "u", "u")]
    elif kind == 1:
        verts = {"u": TrivialGroup(), "w": zn(2)}
        spec = [("a", "u", "u"), ("s", "u", "w"), ("b", "w", "w")]
    elif kind == 2:
        verts = {"v": zn(3)}
        spec = [("a", "v", "v"), ("b", "v", "v")]
    elif kind == 3:
        verts = {"u": zn(2), "w": zn(3), "y": zn(2)}
        spec = [("s", "u", "w"), ("r", "w", "y"), ("a", "w", "w")]
    else:
        raise ValueError("unknown kind")
    g = GraphOfGroups(verts, _edges_from(spec, lengths), next(iter(verts)))
    validate(g)
    return g


def random_lengths(gog: GraphOfGroups, rng: random.Random, normalize: bool = True) -> GraphOfGroups:
    ls = [rng.choice(LENGTH_POOL) for _ in gog.edges]
    if normalize:
        tot = sum(ls)
        ls = [x / tot for x in ls]
    out = gog.with_lengths(ls)
    out.build()
    return out


def _letter_gens(gog: GraphOfGroups) -> list[str]:
    gens = generators(gog)
    return [n for v in sorted(gens.letter_gens) for n, _ in gens.letter_gens[v]]


def _free_gens(gog: GraphOfGroups) -> list[str]:
    gens = generators(gog)
    return [gens.edge_gen[i] for i in sorted(gens.edge_gen) if gog.edge_kind[i] == "trivial"]


def random_automorphism(gog: GraphOfGroups, rng: random.Random, steps: int = 3) -> Marking:
    """Product of random elementary moves (Nielsen moves on free generators, partial conjugations).

    Moves that break a defining relation are skipped; every move carries its
    explicit inverse so the result is a validated self-marking.
    """
    gog.build()
    gens = generators(gog)
    words = gens.words
    fwd = dict(words)
    bwd = dict(words)
    free = _free_gens(gog)
    letters = _letter_gens(gog)

    def sub(images, name, w):
        out = dict(images)
        out[name] = reduce_word(gog, w)
        return out

    def compose(images, move):
        # images of the composite "first images, then move"
        m = Marking(gog, gog, move)
        return {n: m.apply(w) for n, w in images.items()}

    for _ in range(steps):
        options = []
        if len(free) >= 2:
            options.append("nielsen")
        if free:
            options.append("invert")
        if free and letters:
            options.append("conj")
            options.append("mult")
        if not options:
            break
        kind = rng.choice(options)
        if kind == "nielsen":
            i, j = rng.sample(free, 2)
            sgn = rng.choice([1, -1])
            wj = words[j] if sgn == 1 else inverse(gog, words[j])
            move = sub(words, i, concat(gog, words[i], wj))
            back = sub(words, i, concat(gog, words[i], inverse(gog, wj)))
            if rng.random() < 0.5:
                move = sub(words, i, concat(gog, wj, words[i]))
                back = sub(words, i, concat(gog, inverse(gog, wj), words[i]))
        elif kind == "invert":
            i = rng.choice(free)
            move = back = sub(words, i, inverse(gog, words[i]))
        elif kind == "mult":
            i = rng.choice(free)
            h = words[rng.choice(letters)]
            move = sub(words, i, concat(gog, words[i], h))
            back = sub(words, i, concat(gog, words[i], inverse(gog, h)))
        else:
            # conjugate every letter generator of one vertex by a free generator
            v = rng.choice(sorted(v for v, lg in gens.letter_gens.items() if lg))
            z = words[rng.choice(free)]
            if rng.random() < 0.5:
                z = inverse(gog, z)
            zi = inverse(gog, z)
            move, back = dict(words), dict(words)
            for n, _ in gens.letter_gens[v]:
                move[n] = reduce_word(gog, concat(gog, z, words[n], zi))
                back[n] = reduce_word(gog, concat(gog, zi, words[n], z))
        try:
            Marking(gog, gog, move).check_relations()
        except InvalidMarking:
            continue
        fwd = compose(fwd, move)
        bwd = _precompose(gog, back, bwd)
    m = Marking(gog, gog, fwd, bwd)
    m.validate()
    return m


def _precompose(gog: GraphOfGroups, first: dict[str, Word], then: dict[str, Word]) -> dict[str, Word]:
    """Images of ``then . first`` where both are given on generators."""
    m = Marking(gog, gog, then)
    return {n: m.apply(w) for n, w in first.items()}


def random_marked_pair(shape: GraphOfGroups, rng: random.Random, steps: int = 3) -> tuple[GraphOfGroups, GraphOfGroups, Marking]:
    """Two random covolume-one metrics on ``shape`` related by a random automorphism."""
    T = random_lengths(shape, rng)
    T2 = random_lengths(shape, rng)
    phi = random_automorphism(shape, rng, steps)
    return T, T2, Marking(T, T2, phi.images, phi.backward)


def remark(m: Marking, source: GraphOfGroups | None = None, target: GraphOfGroups | None = None) -> Marking:
    """The same generator images between metric variants of the same graphs."""
    return Marking(source or m.source, target or m.target, m.images, m.backward)


CYCLIC_ORDERS = (1, 2, 3, 4, 6)


def random_finite_tree(rng: random.Random, n_vertices: int | None = None, loops: int | None = None) -> GraphOfGroups:
    """Random tree of finite cyclic groups with nontrivial edge groups where possible.

    Each tree edge carries a random common subgroup Z/d of its two end groups, so
    some ends are bijective and type-IIA folds are available. Extra loops have
    trivial edge groups.
    """
    n = n_vertices or rng.randint(2, 4)
    k = rng.randint(0, 1) if loops is None else loops
    orders = [rng.choice(CYCLIC_ORDERS) for _ in range(n)]
    names = [f"v{i}" for i in range(n)]
    verts = {nm: (TrivialGroup() if o == 1 else zn(o)) for nm, o in zip(names, orders)}
    t = Inclusion.trivial()
    edges = []
    for j in range(1, n):
        p = rng.randrange(j)
        a, b = orders[p], orders[j]
        common = [d for d in range(1, min(a, b) + 1) if a % d == 0 and b % d == 0]
        d = rng.choice(common)
        if d == 1:
            inc_p = inc_j = t
        else:
            inc_p = Inclusion.finite({c: c * (a // d) for c in range(d)})
            inc_j = Inclusion.finite({c: c * (b // d) for c in range(d)})
        edges.append(EdgeSpec(f"e{j}", names[p], names[j], Fraction(1), inc_p, inc_j))
    for j in range(k):
        v = rng.choice(names)
        edges.append(EdgeSpec(f"l{j}", v, v, Fraction(1), t, t))
    g = GraphOfGroups(verts, edges, names[0])
    validate(g)
    return random_lengths(g, rng)
