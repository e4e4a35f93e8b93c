"""Deformation moves and invariants: collapse/expansion, type IIA folds, modulus, 𝓘(T), twists."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Sequence

from .errors import (
    ChainDiverges,
    ElementAlreadyInEdgeGroup,
    InvalidEmbedding,
    MalformedWord,
    NotCollapsible,
    NotRepresentable,
)
from .gog import EdgeSpec, GraphOfGroups, Inclusion, is_bijective_end, subdivide, validate
from .groups import CyclicGroup, FiniteGroup, TrivialGroup, VertexGroup, finite_from_subgroup
from .marking import Marking, WordMap, generators, marking_from_maps
from .words import Word, concat, identity_word, reduce_word


def covolume(gog: GraphOfGroups) -> Fraction:
    return gog.covolume()


def projectivize(gog: GraphOfGroups) -> GraphOfGroups:
    vol = gog.covolume()
    if vol == 1:
        return gog
    return gog.scaled(1 / vol)


# --- inclusion algebra -----------------------------------------------------


def _incl_of(gog: GraphOfGroups, oe: int) -> Inclusion:
    e = gog.edges[oe >> 1]
    return e.inc_src if oe % 2 == 0 else e.inc_dst


def _with_incl(e: EdgeSpec, at_src: bool, inc: Inclusion, vertex: str | None = None) -> EdgeSpec:
    if at_src:
        return EdgeSpec(e.id, vertex or e.src, e.dst, e.length, inc, e.inc_dst)
    return EdgeSpec(e.id, e.src, vertex or e.dst, e.length, e.inc_src, inc)


def _compose(inc: Inclusion, psi, group_from: VertexGroup, group_to: VertexGroup) -> Inclusion:
    """Post-compose an inclusion into ``group_from`` with the homomorphism ``psi`` into ``group_to``."""
    if inc.kind == "trivial":
        return Inclusion.trivial()
    if inc.kind == "index":
        return Inclusion.cyclic(psi(inc.index))
    return Inclusion.finite({c: psi(g) for c, g in inc.mapping})


# --- collapse / expand -----------------------------------------------------


def collapsible_end(gog: GraphOfGroups, oe: int) -> bool:
    """Whether ``oe`` can be collapsed into its tail (the head group equals the edge group)."""
    return is_bijective_end(gog, oe ^ 1)


def _collapse_data(gog: GraphOfGroups, oe: int):
    """Collapse ``oe`` into its tail. Returns (new gog, forward WordMap, backward WordMap)."""
    gog.build()
    i = oe >> 1
    v, w = gog.tail[oe], gog.head[oe]
    Gv, Gw = gog.groups[v], gog.groups[w]
    # psi: G_w -> G_v, h -> near(far^-1(h))
    if gog.edge_kind[i] == "cyclic":
        near, far = gog._near_map[oe], gog._far_inv[oe]  # far = +-1

        def psi(h: int) -> int:
            return h * near * far
    else:
        near_map, far_inv = gog._near_map[oe], gog._far_inv[oe]

        def psi(h: int) -> int:
            return near_map[far_inv[h]]

    vname, wname = gog.vids[v], gog.vids[w]
    edges = []
    for e in gog.edges:
        if e.id == gog.edges[i].id:
            continue
        src_w, dst_w = e.src == wname, e.dst == wname
        inc_s = _compose(e.inc_src, psi, Gw, Gv) if src_w else e.inc_src
        inc_d = _compose(e.inc_dst, psi, Gw, Gv) if dst_w else e.inc_dst
        edges.append(EdgeSpec(e.id, vname if src_w else e.src, vname if dst_w else e.dst, e.length, inc_s, inc_d))
    vertices = {k: g for k, g in gog.vertices.items() if k != wname}
    base = vname if gog.base == wname else gog.base
    new = GraphOfGroups(vertices, edges, base)
    new.build()
    # index translation for oriented edges
    old_to_new = {}
    for j, e in enumerate(gog.edges):
        if j == i:
            continue
        k = new.eindex[e.id]
        old_to_new[2 * j] = 2 * k
        old_to_new[2 * j + 1] = 2 * k + 1
    vmap = [new.vindex[gog.vids[x]] if x != w else new.vindex[vname] for x in range(len(gog.vids))]
    nv = new.vindex[vname]

    def f_letter(x: int, g: int) -> Word:
        if x == w:
            return Word(nv, (psi(g),))
        return Word(vmap[x], (g,))

    def f_edge(o: int) -> Word:
        if o >> 1 == i:
            return identity_word(new, nv)
        a, b = vmap[gog.tail[o]], vmap[gog.head[o]]
        return Word(a, (new.groups[a].identity, old_to_new[o], new.groups[b].identity))

    fwd = WordMap(gog, new, vmap, f_letter, f_edge)
    new_to_old = {b: a for a, b in old_to_new.items()}
    bvmap = [gog.vindex[new.vids[x]] for x in range(len(new.vids))]
    e_word = Word(v, (Gv.identity, oe, Gw.identity))
    e_inv = Word(w, (Gw.identity, oe ^ 1, Gv.identity))

    def b_letter(x: int, g: int) -> Word:
        return Word(bvmap[x], (g,))

    def b_edge(o: int) -> Word:
        oo = new_to_old[o]
        t, h = gog.tail[oo], gog.head[oo]
        core = Word(t, (gog.groups[t].identity, oo, gog.groups[h].identity))
        parts = []
        if t == w:
            parts.append(e_word)
        parts.append(core)
        if h == w:
            parts.append(e_inv)
        return concat(gog, *parts)

    bwd = WordMap(new, gog, bvmap, b_letter, b_edge)
    return new, fwd, bwd


def _base_paths(gog: GraphOfGroups, new: GraphOfGroups, fwd: WordMap, bwd: WordMap, oe: int):
    """Paths fixing the base points of the induced markings."""
    v, w = gog.tail[oe], gog.head[oe]
    fb = identity_word(new, new.base_index) if fwd.vmap[gog.base_index] == new.base_index else None
    # the backward map sends the new base to itself unless the old base was the collapsed vertex
    if gog.base_index == w:
        bb = Word(w, (gog.groups[w].identity, oe ^ 1, gog.groups[v].identity))
    else:
        bb = identity_word(gog, gog.base_index)
    return fb, bb


def collapse(gog: GraphOfGroups, edge: str) -> tuple[GraphOfGroups, Marking]:
    """Collapse a non-loop edge whose group equals one endpoint group; the larger group survives."""
    gog.build()
    if edge not in gog.eindex:
        raise NotCollapsible(f"no edge {edge!r}")
    i = gog.eindex[edge]
    oe = 2 * i
    if gog.tail[oe] == gog.head[oe]:
        raise NotCollapsible(f"edge {edge} is a loop")
    if collapsible_end(gog, oe):
        pass
    elif collapsible_end(gog, oe ^ 1):
        oe ^= 1
    else:
        raise NotCollapsible(f"edge {edge}: neither inclusion is onto its vertex group")
    new, fwd, bwd = _collapse_data(gog, oe)
    fb, bb = _base_paths(gog, new, fwd, bwd, oe)
    m = marking_from_maps(fwd, bwd, fb, bb)
    return new, m


def expand(
    gog: GraphOfGroups,
    vertex: str,
    new_vertex: str,
    new_group: VertexGroup,
    inc_old: Inclusion,
    inc_new: Inclusion,
    moved: Sequence[tuple[str, str]],
    length: Fraction,
    new_edge: str | None = None,
) -> tuple[GraphOfGroups, Marking]:
    """Elementary expansion: split ``vertex`` by a new edge towards ``new_vertex``.

    The new edge runs from ``vertex`` to ``new_vertex`` with inclusions ``inc_old``
    (into the group of ``vertex``) and ``inc_new``. ``moved`` lists edge ends
    ``(edge id, "src"|"dst")`` that get re-attached to ``new_vertex``; their groups
    must lie in the image of ``inc_old`` and are transported through the edge group.
    """
    gog.build()
    if vertex not in gog.vindex:
        raise InvalidEmbedding(f"no vertex {vertex!r}")
    if new_vertex in gog.vertices or new_vertex in gog.eindex:
        raise InvalidEmbedding(f"name {new_vertex!r} already used")
    from .gog import fresh_name

    new_edge = new_edge or fresh_name(gog, f"{vertex}_{new_vertex}")
    if length <= 0:
        raise InvalidEmbedding("expansion length must be positive")
    v = gog.vindex[vertex]
    Gv = gog.groups[v]
    spec = EdgeSpec(new_edge, vertex, new_vertex, Fraction(length), inc_old, inc_new)
    probe_vertices = dict(gog.vertices)
    probe_vertices[new_vertex] = new_group
    probe = GraphOfGroups(probe_vertices, list(gog.edges) + [spec], gog.base)
    try:
        probe.build()
    except Exception as exc:  # inclusion malformed for the groups given
        raise InvalidEmbedding(str(exc)) from None
    k = len(gog.edges)
    oe_new = 2 * k
    if not is_bijective_end(probe, oe_new ^ 1):
        raise InvalidEmbedding("the new vertex group must equal the new edge group")
    # transport G_v-elements of the moved edges into the new group through the edge group
    if probe.edge_kind[k] == "cyclic":
        a, b = probe._near_map[oe_new], probe._far_inv[oe_new]

        def chi(g: int) -> int:
            if g % a:
                raise InvalidEmbedding(f"x^{g} is not in the image of the new edge group")
            return (g // a) * b
    else:
        near_inv = {g: c for c, g in probe._near_map[oe_new].items()}
        far_of = {c: g for g, c in probe._far_inv[oe_new].items()}

        def chi(g: int) -> int:
            if g not in near_inv:
                raise InvalidEmbedding(f"element {g} is not in the image of the new edge group")
            return far_of[near_inv[g]]

    moved_set = set(moved)
    for eid, end in moved_set:
        if eid not in gog.eindex or end not in ("src", "dst"):
            raise InvalidEmbedding(f"bad edge end {(eid, end)!r}")
        e = gog.edges[gog.eindex[eid]]
        if (e.src if end == "src" else e.dst) != vertex:
            raise InvalidEmbedding(f"edge end {eid}.{end} is not at {vertex}")
    edges = []
    for e in gog.edges:
        s_m, d_m = (e.id, "src") in moved_set, (e.id, "dst") in moved_set
        inc_s = _compose(e.inc_src, chi, Gv, new_group) if s_m else e.inc_src
        inc_d = _compose(e.inc_dst, chi, Gv, new_group) if d_m else e.inc_dst
        edges.append(EdgeSpec(e.id, new_vertex if s_m else e.src, new_vertex if d_m else e.dst, e.length, inc_s, inc_d))
    edges.append(spec)
    vertices = dict(gog.vertices)
    vertices[new_vertex] = new_group
    out = GraphOfGroups(vertices, edges, gog.base)
    try:
        validate(out)
    except Exception as exc:
        raise InvalidEmbedding(str(exc)) from None
    # collapsing the new edge into ``vertex`` recovers the input with identical indexing,
    # so words of the collapsed graph are words of the input
    coll, fwd, bwd = _collapse_data(out, oe_new)
    if [e.id for e in coll.edges] != [e.id for e in gog.edges] or coll.vids != gog.vids:
        raise InvalidEmbedding("expansion does not collapse back to the input")
    g_gens = generators(gog)
    fwd_images = {n: bwd.apply(w) for n, w in g_gens.words.items()}
    back_images = fwd.marking_images(identity_word(coll, coll.base_index))
    back_images = {n: Word(w.start, w.letters) for n, w in back_images.items()}
    return out, Marking(gog, out, fwd_images, back_images)


# --- type IIA folds --------------------------------------------------------


def type_IIA_fold(gog: GraphOfGroups, edge: str, element: int, reverse: bool = False):
    """Pull ``element`` (of the group at the tail) along ``edge``.

    Returns ``(new gog, GoGMap)``; the map is the equivariant fold morphism, an
    isometry on edges. ``reverse`` pulls from the destination end instead.
    """
    gog.build()
    if edge not in gog.eindex:
        raise MalformedWord(f"no edge {edge!r}")
    i = gog.eindex[edge]
    oe = 2 * i + (1 if reverse else 0)
    v, w = gog.tail[oe], gog.head[oe]
    Gv, Gw = gog.groups[v], gog.groups[w]
    if isinstance(Gv, TrivialGroup):
        raise ElementAlreadyInEdgeGroup("the vertex group is trivial")
    if isinstance(Gv, FiniteGroup) and not 0 <= element < Gv.n:
        raise MalformedWord(f"element {element} not in the vertex group")
    near = gog.near_sub[oe]
    if Gv.contains(near, element):
        raise ElementAlreadyInEdgeGroup(f"element already lies in the group of {edge}")
    if v == w:
        raise NotRepresentable("pulling along a loop creates an HNN-type relation outside the regime")
    if not is_bijective_end(gog, oe ^ 1):
        raise NotRepresentable(
            "the far vertex group is larger than the edge group; the enlarged group is an amalgam"
        )
    wname = gog.vids[w]
    at_src = oe % 2 == 0
    if isinstance(Gv, CyclicGroup):
        a = gog._near_map[oe]
        b = gog._far_inv[oe]  # +-1
        d = gcd(abs(a), abs(element))
        new_w = CyclicGroup(Gw.symbol)
        factor = Fraction(a * b, d)  # old x_w = (new x_w)^(a b / d)

        def to_new(h: int) -> int:
            return int(h * factor)

        inc_near = Inclusion.cyclic(d)
        inc_far = Inclusion.cyclic(1)
        # x_v^d corresponds to the new generator at w
        k_of = lambda hp: hp * d  # element of G_v for a new w-element
    else:
        sub = Gv.generate(list(near) + [element])
        new_w, relabel = finite_from_subgroup(Gv, sub)
        psi = {h: gog._near_map[oe][gog._far_inv[oe][h]] for h in gog._far_inv[oe]}  # G_w -> G_v

        def to_new(h: int) -> int:
            return relabel[psi[h]]

        # new edge group = the subgroup, identity on both sides
        inc_near = Inclusion.finite({relabel[g]: g for g in sub})
        inc_far = Inclusion.finite({relabel[g]: relabel[g] for g in sub})
        unlabel = {r: g for g, r in relabel.items()}
        k_of = lambda hp: unlabel[hp]
    edges = []
    for j, x in enumerate(gog.edges):
        if j == i:
            if at_src:
                edges.append(EdgeSpec(x.id, x.src, x.dst, x.length, inc_near, inc_far))
            else:
                edges.append(EdgeSpec(x.id, x.src, x.dst, x.length, inc_far, inc_near))
            continue
        inc_s = _compose(x.inc_src, to_new, Gw, new_w) if x.src == wname else x.inc_src
        inc_d = _compose(x.inc_dst, to_new, Gw, new_w) if x.dst == wname else x.inc_dst
        edges.append(EdgeSpec(x.id, x.src, x.dst, x.length, inc_s, inc_d))
    vertices = dict(gog.vertices)
    vertices[wname] = new_w
    new = GraphOfGroups(vertices, edges, gog.base)
    validate(new)

    def f_letter(x: int, g: int) -> Word:
        return Word(x, (to_new(g),)) if x == w else Word(x, (g,))

    def f_edge(o: int) -> Word:
        t, h = gog.tail[o], gog.head[o]
        return Word(t, (new.groups[t].identity, o, new.groups[h].identity))

    fwd = WordMap(gog, new, list(range(len(gog.vids))), f_letter, f_edge)

    def b_letter(x: int, g: int) -> Word:
        if x != w:
            return Word(x, (g,))
        k = k_of(g)
        return Word(w, (Gw.identity, oe ^ 1, k, oe, Gw.identity))

    def b_edge(o: int) -> Word:
        t, h = new.tail[o], new.head[o]
        return Word(t, (gog.groups[t].identity, o, gog.groups[h].identity))

    bwd = WordMap(new, gog, list(range(len(new.vids))), b_letter, b_edge)
    m = marking_from_maps(fwd, bwd)
    from .lipschitz import initial_map

    return new, initial_map(m, prefer_vertices=True)


# --- modulus ---------------------------------------------------------------


def edge_modulus(gog: GraphOfGroups, oe: int) -> Fraction:
    """Modulus contributed by crossing ``oe`` (1 for finite or trivial edge groups)."""
    gog.build()
    if gog.edge_kind[oe >> 1] != "cyclic":
        return Fraction(1)
    return Fraction(abs(gog._near_map[oe]), abs(gog._far_inv[oe]))


def modulus(gog: GraphOfGroups, w: Word) -> Fraction:
    gog.build()
    if w.start != w.end(gog):
        raise MalformedWord("modulus needs a loop word")
    if gog.regime() != "cyclic":
        return Fraction(1)
    r = reduce_word(gog, w)
    out = Fraction(1)
    for oe in r.edges:
        out *= edge_modulus(gog, oe)
    return out


def has_nontrivial_integral_modulus(gog: GraphOfGroups, depth: int = 4) -> bool:
    """Semi-decision: some product of at most ``depth`` generator moduli is an integer > 1."""
    gog.build()
    if gog.regime() != "cyclic":
        return False
    gens = generators(gog)
    vals = set()
    for n in gens.names:
        mu = modulus(gog, gens.words[n])
        if mu != 1:
            vals.add(mu)
            vals.add(1 / mu)
    vals = sorted(vals)
    frontier = {Fraction(1)}
    for _ in range(depth):
        frontier = {a * b for a in frontier for b in vals} | frontier
        if any(q.denominator == 1 and q > 1 for q in frontier):
            return True
    return False


# --- maximal elliptic subgroups and 𝓘(T) -------------------------------------


@dataclass(frozen=True)
class IndexInvariant:
    value: Fraction
    breakdown: tuple[tuple[str, int], ...]


def _is_maximal_vertex(gog: GraphOfGroups, v: int) -> bool:
    """No incident edge embeds G_v properly into a neighbouring vertex group."""
    for oe in gog.out_edges[v]:
        if is_bijective_end(gog, oe) and not is_bijective_end(gog, oe ^ 1):
            return False
    return True


def _sub_key(G: VertexGroup, K):
    return K if isinstance(G, CyclicGroup) else frozenset(K)


def maximal_elliptics(gog: GraphOfGroups, edge: str, state_cap: int = 4096) -> list[tuple[str, int]]:
    """Maximal vertex groups containing the edge group, one per class, with the largest index.

    Explores the fixed subtree of the edge group in the Bass-Serre tree as states
    (vertex, conjugate of the edge group inside that vertex group).
    """
    gog.build()
    i = gog.eindex[edge]
    oe0 = 2 * i
    v0 = gog.tail[oe0]
    G0 = gog.groups[v0]
    start = _sub_key(G0, gog.near_sub[oe0])
    seen = {(v0, start)}
    q = deque([(v0, start)])
    per_vertex: dict[int, set] = {}
    while q:
        v, K = q.popleft()
        per_vertex.setdefault(v, set()).add(K)
        if len(per_vertex[v]) > 64 or len(seen) > state_cap:
            raise ChainDiverges(
                f"fixed subtree of the group of {edge} keeps producing new subgroups at {gog.vids[v]}"
            )
        G = gog.groups[v]
        for oe in gog.out_edges[v]:
            near = gog.near_sub[oe]
            H = gog.groups[gog.head[oe]]
            if isinstance(G, CyclicGroup):
                if gog.edge_kind[oe >> 1] != "cyclic":
                    if K != 0:
                        continue
                    nxt = [0]
                elif K == 0 or K % near:
                    if K != 0:
                        continue
                    nxt = [0]
                else:
                    nxt = [abs((K // gog._near_map[oe]) * gog._far_inv[oe])]
            else:
                nxt = []
                try:
                    reps = G.transversal(near)
                except ValueError:
                    reps = [G.identity]
                for c in reps:
                    conj = G.conj_sub(G.inv(c), K)
                    if conj <= near:
                        img = frozenset(gog.cross(oe ^ 1, g) for g in conj)
                        nxt.append(img)
            for K2 in nxt:
                key = (gog.head[oe], _sub_key(H, K2))
                if key not in seen:
                    seen.add(key)
                    q.append(key)
    # union-find over vertices with equal groups across doubly-bijective edges
    parent = list(range(len(gog.vids)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for j in range(len(gog.edges)):
        o = 2 * j
        if is_bijective_end(gog, o) and is_bijective_end(gog, o ^ 1):
            parent[find(gog.tail[o])] = find(gog.head[o])
    not_max = {find(v) for v in range(len(gog.vids)) if not _is_maximal_vertex(gog, v)}
    best: dict[int, tuple[int, int]] = {}
    for v, subs in per_vertex.items():
        if find(v) in not_max:
            continue
        G = gog.groups[v]
        for K in subs:
            if isinstance(G, CyclicGroup):
                if K == 0:
                    raise ChainDiverges("trivial subgroup of an infinite cyclic group has infinite index")
                idx = K
            else:
                idx = G.order // len(K)
            r = find(v)
            if r not in best or idx > best[r][0] or (idx == best[r][0] and v < best[r][1]):
                best[r] = (idx, v if r not in best else min(v, best[r][1]))
    if not best:
        raise ChainDiverges(f"no maximal elliptic subgroup contains the group of {edge}")
    return sorted(((gog.vids[v], idx) for idx, v in best.values()), key=lambda t: (t[0], t[1]))


def index_invariant(gog: GraphOfGroups) -> IndexInvariant:
    gog.build()
    total = Fraction(0)
    rows = []
    for e in gog.edges:
        ell = maximal_elliptics(gog, e.id)
        val = sum(idx for _, idx in ell)
        rows.append((e.id, val))
        total += e.length * val
    return IndexInvariant(total, tuple(rows))


# --- automorphisms ---------------------------------------------------------


def copy_gog(gog: GraphOfGroups) -> GraphOfGroups:
    out = GraphOfGroups(gog.vertices, gog.edges, gog.base)
    out.build()
    return out


def twist(gog: GraphOfGroups, phi: Marking) -> tuple[GraphOfGroups, Marking]:
    """The same metric graph of groups with the action precomposed by ``phi``.

    Translation lengths satisfy l_{TΦ}(g) = l_T(Φ(g)); the returned marking from
    ``gog`` to the copy sends each generator to its substituted image.
    """
    if phi.source is not gog and phi.source != gog:
        raise MalformedWord("automorphism is defined on a different graph of groups")
    twin = copy_gog(gog)
    back = phi.backward
    return twin, Marking(gog, twin, phi.images, back)


def subdivide_marked(gog: GraphOfGroups, edge: str, at: Fraction) -> tuple[GraphOfGroups, Marking]:
    """Subdivide an edge and return the (isometric) marking to the subdivided graph."""
    gog.build()
    new = subdivide(gog, edge, at)
    validate(new)
    i = gog.eindex[edge]
    k, k2 = i, i + 1  # the first half keeps the index, the second half follows it
    mid = new.vindex[new.edges[k].dst]
    shift = {j: (j if j <= i else j + 1) for j in range(len(gog.edges))}
    vm = [new.vindex[name] for name in gog.vids]

    def f_letter(x: int, g: int) -> Word:
        return Word(vm[x], (g,))

    def f_edge(o: int) -> Word:
        t, h = vm[gog.tail[o]], vm[gog.head[o]]
        if o >> 1 != i:
            return Word(t, (new.groups[t].identity, 2 * shift[o >> 1] + (o & 1), new.groups[h].identity))
        if o % 2 == 0:
            return Word(t, (new.groups[t].identity, 2 * k, new.groups[mid].identity, 2 * k2, new.groups[h].identity))
        return Word(t, (new.groups[t].identity, 2 * k2 + 1, new.groups[mid].identity, 2 * k + 1,
                        new.groups[h].identity))

    fwd = WordMap(gog, new, vm, f_letter, f_edge)
    old_head = gog.head[2 * i]
    unshift = {b: a for a, b in shift.items()}

    def b_letter(x: int, g: int) -> Word:
        if x == mid:
            return Word(old_head, (new.cross(2 * k2 + 1, g),))
        return Word(gog.vindex[new.vids[x]], (g,))

    def b_edge(o: int) -> Word:
        j = o >> 1
        if j == k2:
            return identity_word(gog, old_head)
        oo = 2 * unshift[j] + (o & 1)
        t, h = gog.tail[oo], gog.head[oo]
        if j == k:
            if o % 2 == 0:
                return Word(t, (gog.groups[t].identity, oo, gog.groups[h].identity))
            return Word(old_head, (gog.groups[old_head].identity, oo, gog.groups[gog.head[oo]].identity))
        return Word(t, (gog.groups[t].identity, oo, gog.groups[h].identity))

    bvmap = [gog.vindex[name] if name in gog.vindex else old_head for name in new.vids]
    bwd = WordMap(new, gog, bvmap, b_letter, b_edge)
    return new, marking_from_maps(fwd, bwd)
