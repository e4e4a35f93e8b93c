"""Equivariant Lipschitz maps between G-trees, stored at the quotient level.

A map is a marking together with one image point per source vertex. The lift
of a source vertex ``v`` reached by the tree path ``p_v`` goes to ``q_v`` in the
target tree; the lift of an edge ``e`` from ``u`` to ``w`` runs from ``q_u`` to
``phi(gamma_e) q_w`` where ``gamma_e = p_u e p_w^-1``. Equivariance forces
``phi(p_v G_v p_v^-1)`` to fix ``q_v``. The straightened map is linear on edges,
so its Lipschitz constant is the largest slope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .errors import (
    CollapsedEdgeInForest,
    ExplosionGuard,
    InternalInvariant,
    InvalidMarking,
    NotMinimal,
    SearchExhausted,
)
from .gog import GraphOfGroups, format_rational
from .lp import maximize
from .groups import CyclicGroup, FiniteGroup
from .marking import Marking, generators, to_base
from .tree import (
    TreePoint,
    act,
    act_germ,
    base_point,
    geodesic,
    make_point,
    point_along,
    distance as tree_distance,
    vertex_geodesic,
    vertex_point,
)
from .words import Word, cyclic_reduce, format_word, tl

DEFAULT_MAX_STEPS = 20_000
INFINITE_INDEX_SAMPLES = (0, 1, -1, 2, -2)


def letter_reps(G, sub, samples: Iterable[int] = INFINITE_INDEX_SAMPLES) -> list[int]:
    """Left coset representatives of ``sub``; a bounded sample when the index is infinite."""
    try:
        return G.transversal(sub)
    except ValueError:
        return list(samples)


def _fixes(T: GraphOfGroups, g: Word, x: TreePoint) -> bool:
    return act(T, g, x) == x


class GoGMap:
    """Marking plus vertex images; linear on edges by construction."""

    def __init__(self, marking: Marking, q: list[TreePoint]):
        self.marking = marking
        self.source = marking.source
        self.target = marking.target
        self.q = list(q)
        self._cache: dict = {}

    # geometry of edge images ---------------------------------------------
    def head_image(self, oe: int) -> TreePoint:
        """``phi(gamma_oe) q_head``: where the lift of ``oe`` leaving ``q_tail`` ends."""
        key = ("head", oe)
        if key not in self._cache:
            h = self.source.head[oe]
            self._cache[key] = act(self.target, self.marking.edge_image(oe), self.q[h])
        return self._cache[key]

    def edge_geodesic(self, oe: int):
        key = ("geo", oe)
        if key not in self._cache:
            self._cache[key] = geodesic(self.target, self.q[self.source.tail[oe]], self.head_image(oe))
        return self._cache[key]

    def image_length(self, i: int) -> Fraction:
        return self.edge_geodesic(2 * i).length

    def slope(self, i: int) -> Fraction:
        return self.image_length(i) / self.source.edges[i].length

    def slopes(self) -> dict[str, Fraction]:
        return {e.id: self.slope(i) for i, e in enumerate(self.source.edges)}

    def lipschitz_constant(self) -> Fraction:
        return max(self.slope(i) for i in range(len(self.source.edges)))

    def tension_forest(self) -> frozenset[int]:
        s = self.lipschitz_constant()
        return frozenset(i for i in range(len(self.source.edges)) if self.slope(i) == s)

    def tension_edges(self) -> list[str]:
        return [self.source.edges[i].id for i in sorted(self.tension_forest())]

    def image_word(self, oe: int) -> Word | None:
        """Target path word of the edge image when both ends are vertices."""
        x, y = self.q[self.source.tail[oe]], self.head_image(oe)
        if x.germ is not None or y.germ is not None:
            return None
        return vertex_geodesic(self.target, x.path, y.path)

    # directions ----------------------------------------------------------
    def base_direction(self, oe: int):
        """Direction at ``q_tail`` of the image of the germ ``(1, oe)``; None if collapsed."""
        return self.edge_geodesic(oe).dir_x

    def direction(self, v: int, c: int, oe: int):
        """Image direction of the germ ``(c, oe)`` at the lift ``p_v``."""
        d = self.base_direction(oe)
        if d is None:
            return None
        G = self.source.groups[v]
        x = self.q[v]
        if G.is_identity(c) or x.germ is not None:
            return d
        return act_germ(self.target, self.marking.letter_image(v, c), x.path, d)[1]

    def translate_direction(self, g: Word, x: TreePoint, d):
        if x.germ is not None:
            return d
        return act_germ(self.target, g, x.path, d)[1]

    def forest_germs(self, v: int, forest: frozenset[int] | None = None) -> list[tuple[int, int]]:
        forest = self.tension_forest() if forest is None else forest
        S = self.source
        out = []
        for oe in S.out_edges[v]:
            if oe >> 1 in forest:
                for c in letter_reps(S.groups[v], S.near_sub[oe]):
                    out.append((c, oe))
        return out

    def single_gate(self, v: int, forest: frozenset[int] | None = None):
        """The common image direction if all forest directions at ``v`` form one gate, else None."""
        forest = self.tension_forest() if forest is None else forest
        S = self.source
        dirs = [self.base_direction(oe) for oe in S.out_edges[v] if oe >> 1 in forest]
        if not dirs:
            return None
        if any(d is None for d in dirs):
            raise CollapsedEdgeInForest(f"a tension edge at {S.vids[v]} is mapped to a point")
        D = dirs[0]
        if any(d != D for d in dirs[1:]):
            return None
        x = self.q[v]
        if x.germ is None:
            for name, _ in generators(S).letter_gens[v]:
                if self.translate_direction(self.marking.images[name], x, D) != D:
                    return None
        return D

    def gates(self, forest: frozenset[int] | None = None) -> "TrainTrackStructure":
        """Partition forest directions at every vertex by their image direction."""
        forest = self.tension_forest() if forest is None else forest
        per_vertex = {}
        for v in range(len(self.source.vids)):
            classes: dict = {}
            for c, oe in self.forest_germs(v, forest):
                d = self.direction(v, c, oe)
                if d is None:
                    raise CollapsedEdgeInForest(
                        f"tension edge {self.source.edge_name(oe)} is mapped to a point"
                    )
                classes.setdefault(d, []).append((c, oe))
            if classes:
                per_vertex[v] = list(classes.values())
        approx = any(
            isinstance(G, CyclicGroup) and any(
                S_near == 0 for S_near in (self.source.near_sub[oe] for oe in self.source.out_edges[v])
            )
            for v, G in enumerate(self.source.groups)
        )
        return TrainTrackStructure(self.source, per_vertex, sampled=approx)

    def is_legal_turn(self, v: int, g1: tuple[int, int], g2: tuple[int, int]) -> bool:
        return self.direction(v, *g1) != self.direction(v, *g2)

    # moving --------------------------------------------------------------
    def with_points(self, q: list[TreePoint]) -> "GoGMap":
        return GoGMap(self.marking, q)

    def describe(self) -> dict:
        T = self.target
        pts = {}
        for v, x in enumerate(self.q):
            if x.germ is None:
                pts[self.source.vids[v]] = format_word(T, x.path)
            else:
                pts[self.source.vids[v]] = (
                    f"{format_word(T, x.path)} +{format_rational(x.s)} along {T.edge_name(x.germ[1])}"
                )
        return {"points": pts, "slopes": {k: format_rational(s) for k, s in self.slopes().items()}}


@dataclass
class TrainTrackStructure:
    gog: GraphOfGroups
    gates: dict[int, list[list[tuple[int, int]]]]
    sampled: bool = False  # infinite direction sets were sampled

    def gate_count(self, v: int) -> int:
        return len(self.gates.get(v, []))

    def excess(self) -> int:
        """Sum over vertices of max(0, gates - 2)."""
        return sum(max(0, len(g) - 2) for g in self.gates.values())

    def format(self) -> str:
        parts = []
        for v, gs in sorted(self.gates.items()):
            txt = " | ".join(
                ",".join(
                    (self.gog.edge_name(oe) if self.gog.groups[v].is_identity(c) else f"{c}.{self.gog.edge_name(oe)}")
                    for c, oe in g
                )
                for g in gs
            )
            parts.append(f"{self.gog.vids[v]}: {txt}")
        return "; ".join(parts)


# --- initial maps ------------------------------------------------------------


def _fixed_point(m: Marking, v: int) -> TreePoint:
    S, T = m.source, m.target
    G = S.groups[v]
    gens = generators(S)
    if isinstance(G, CyclicGroup):
        img = m.images[gens.letter_gens[v][0][0]]
        conj, core = cyclic_reduce(T, img)
        if core.n_edges:
            raise InvalidMarking(f"the generator at {S.vids[v]} maps to a hyperbolic element")
        return vertex_point(T, conj)
    b = base_point(T)
    if not isinstance(G, FiniteGroup):
        return b
    orbit = []
    seen = set()
    for g in G.elements():
        w = m.letter_image(v, g)
        if tl(T, w) != 0:
            raise InvalidMarking(f"an element at {S.vids[v]} maps to a hyperbolic element")
        p = act(T, w, b)
        if p not in seen:
            seen.add(p)
            orbit.append(p)
    # the centre of a finite set in a tree is the midpoint of any diameter
    y = max(orbit, key=lambda p: tree_distance(T, orbit[0], p))
    z = max(orbit, key=lambda p: tree_distance(T, y, p))
    return point_along(T, y, z, tree_distance(T, y, z) / 2)


def _fixed_by_group(m: Marking, v: int, x: TreePoint) -> bool:
    for name, _ in generators(m.source).letter_gens[v]:
        if not _fixes(m.target, m.images[name], x):
            return False
    return True


def initial_map(m: Marking, prefer_vertices: bool = False) -> GoGMap:
    """Some equivariant map realizing the marking.

    With ``prefer_vertices`` each vertex is first tried at the target vertex of
    the same name (reached along the target's own tree path), which recovers the
    obvious map for moves that keep the underlying graph.
    """
    S, T = m.source, m.target
    q = []
    tgens = generators(T)
    for v in range(len(S.vids)):
        if prefer_vertices and S.vids[v] in T.vindex:
            cand = vertex_point(T, tgens.tree_paths[T.vindex[S.vids[v]]])
            if _fixed_by_group(m, v, cand):
                q.append(cand)
                continue
        x = _fixed_point(m, v)
        if not _fixed_by_group(m, v, x):
            raise InternalInvariant(f"no fixed point found for the group at {S.vids[v]}")
        q.append(x)
    return GoGMap(m, q)


# --- descent to an optimal map -----------------------------------------------


def _move(T: GraphOfGroups, x: TreePoint, d, eps: Fraction) -> TreePoint:
    if x.germ is None:
        return make_point(T, x.path, d, eps)
    return make_point(T, x.path, x.germ, x.s + (eps if d == 1 else -eps))


def _room(T: GraphOfGroups, x: TreePoint, d) -> Fraction:
    """Distance from ``x`` to the next target vertex in direction ``d``."""
    if x.germ is None:
        return T.length(d[1])
    ell = T.length(x.germ[1])
    return ell - x.s if d == 1 else x.s


@dataclass
class DescentStep:
    sigma: Fraction
    tension: int
    moved: tuple[str, ...]
    step: Fraction
    kind: str


def _end_signs(f: GoGMap, i: int, moving: dict[int, object]) -> tuple[dict[int, int], bool]:
    """Coefficients of the vertex speeds in the rate of change of the length of edge ``i``.

    Returns ``(coeffs, same)``; for a collapsed edge whose ends move the same way
    ``same`` is set and the rate is ``|speed_u - speed_w|`` instead.
    """
    S = f.source
    oe = 2 * i
    u, w = S.tail[oe], S.head[oe]
    geo = f.edge_geodesic(oe)
    du = moving.get(u)
    dw = moving.get(w)
    if dw is not None:
        dw = f.translate_direction(f.marking.edge_image(oe), f.q[w], dw)
    coeffs: dict[int, int] = {}
    if geo.length == 0:
        if du is not None and dw is not None and du == dw:
            if u == w:
                return {}, False
            return {u: 1, w: -1}, True
        if du is not None:
            coeffs[u] = coeffs.get(u, 0) + 1
        if dw is not None:
            coeffs[w] = coeffs.get(w, 0) + 1
        return coeffs, False
    if du is not None:
        coeffs[u] = coeffs.get(u, 0) + (-1 if geo.dir_x == du else 1)
    if dw is not None:
        coeffs[w] = coeffs.get(w, 0) + (-1 if geo.dir_y == dw else 1)
    return coeffs, False


def _rate(coeffs: dict[int, int], same: bool, speed: dict[int, Fraction]) -> Fraction:
    r = sum((c * speed.get(v, 0) for v, c in coeffs.items()), Fraction(0))
    return abs(r) if same else r


def _movable_directions(f: GoGMap, v: int, forest: frozenset[int]) -> list:
    """Forest image directions at ``q_v`` fixed by the image of the vertex group."""
    S = f.source
    out = []
    x = f.q[v]
    for oe in S.out_edges[v]:
        if oe >> 1 not in forest:
            continue
        d = f.base_direction(oe)
        if d is None:
            raise CollapsedEdgeInForest(f"a tension edge at {S.vids[v]} is mapped to a point")
        if d in out:
            continue
        if x.germ is None and any(
            f.translate_direction(f.marking.images[name], x, d) != d
            for name, _ in generators(S).letter_gens[v]
        ):
            continue
        out.append(d)
    return out


def _best_descent(f: GoGMap, forest: frozenset[int]):
    """Directions and speeds lowering every tension slope as fast as possible.

    For each choice of a movable direction per forest vertex an exact LP
    maximizes the common decrease rate ``nu``; returns ``(nu, moving, speed)``.
    """
    S = f.source
    verts = sorted({S.tail[2 * i] for i in forest} | {S.head[2 * i] for i in forest})
    options = [(v, _movable_directions(f, v, forest)) for v in verts]
    options = [(v, ds) for v, ds in options if ds]
    best = (Fraction(0), {}, {})
    if not options:
        return best
    ells = {i: S.edges[i].length for i in forest}

    def rec(k: int, moving: dict):
        nonlocal best
        if k == len(options):
            idx = {v: j for j, v in enumerate(moving)}
            nvar = len(idx) + 1
            A, b = [], []
            for i in sorted(forest):
                coeffs, _ = _end_signs(f, i, moving)
                row = [Fraction(0)] * nvar
                for v, c in coeffs.items():
                    row[idx[v]] += c
                row[-1] = ells[i]
                A.append(row)
                b.append(0)
            for j in range(len(idx)):
                row = [Fraction(0)] * nvar
                row[j] = Fraction(1)
                A.append(row)
                b.append(1)
            c = [0] * (nvar - 1) + [1]
            nu, x = maximize(c, A, b)
            if nu > best[0]:
                best = (nu, dict(moving), {v: x[idx[v]] for v in moving if x[idx[v]] > 0})
            return
        v, ds = options[k]
        for d in ds:
            moving[v] = d
            rec(k + 1, moving)
            del moving[v]

    rec(0, {})
    return best


def _cell_optimum(f: GoGMap, moving: dict, sigma: Fraction, lengths: list[Fraction],
                  ells: list[Fraction]) -> tuple[dict[int, object], dict[int, Fraction]]:
    """Jointly best vertex offsets inside the current cell, as an exact LP.

    Vertices inside a target edge may slide either way along it; vertices at a
    target vertex use the direction in ``moving`` (or stay put). While every
    vertex stays in its edge and no image length changes sign, the image
    lengths are affine in the offsets, so the lowest reachable maximal slope is
    an LP optimum. Moving all vertices at once avoids the zigzag of stepping
    only the currently tense ones. Returns ``(directions, distances)``.
    """
    T = f.target
    dirs: dict[int, object] = {}
    two_sided = set()
    for v, x in enumerate(f.q):
        if x.germ is not None:
            dirs[v] = 1
            two_sided.add(v)
        elif v in moving:
            dirs[v] = moving[v]
    order = sorted(dirs)
    col: dict[int, tuple[int, int | None]] = {}
    k = 0
    for v in order:
        col[v] = (k, k + 1 if v in two_sided else None)
        k += 2 if v in two_sided else 1
    nvar = k + 1  # offsets, then the decrease of sigma

    def row_of(coeffs: dict) -> list[Fraction]:
        row = [Fraction(0)] * nvar
        for v, c in coeffs.items():
            p, m = col[v]
            row[p] += c
            if m is not None:
                row[m] -= c
        return row

    A, b = [], []
    for i, ell in enumerate(ells):
        coeffs, _ = _end_signs(f, i, dirs)
        if not coeffs:
            continue
        row = row_of(coeffs)
        neg = [-x for x in row]
        if f.edge_geodesic(2 * i).length == 0:
            # the image is a segment of length |offset combination|
            for r in (row, neg):
                A.append(r[:-1] + [ell])
                b.append(sigma * ell)
            continue
        A.append(row[:-1] + [ell])
        b.append(sigma * ell - lengths[i])
        A.append(neg[:-1] + [Fraction(0)])
        b.append(lengths[i])
    for v in order:
        p, m = col[v]
        for j, d in ((p, dirs[v]), (m, -1)):
            if j is None:
                continue
            row = [Fraction(0)] * nvar
            row[j] = Fraction(1)
            A.append(row)
            b.append(_room(T, f.q[v], d))
    c = [0] * (nvar - 1) + [1]
    _, x = maximize(c, A, b)
    out_d: dict[int, object] = {}
    out_t: dict[int, Fraction] = {}
    for v in order:
        p, m = col[v]
        t = x[p] - (x[m] if m is not None else 0)
        if t > 0:
            out_d[v], out_t[v] = dirs[v], t
        elif t < 0:
            out_d[v], out_t[v] = -1, -t
    return out_d, out_t


def descend(f: GoGMap, max_steps: int = DEFAULT_MAX_STEPS, trace: list | None = None) -> GoGMap:
    """Lower the Lipschitz constant to its minimum, then make the map optimal.

    While some motion of the forest vertices lowers every tension slope, move
    along the best such motion (an exact LP over the movable directions) until
    the next event: a vertex reaching a target vertex, a length hitting zero or
    another edge reaching the top slope. The maximal slope is convex on the
    space of equivariant maps, so when no such motion exists sigma is minimal.
    Then one-gate vertices slide along their gate by half the slack to the next
    edge, which shrinks the tension forest at constant sigma.
    """
    S, T = f.source, f.target
    nE = len(S.edges)
    ells = [S.edges[i].length for i in range(nE)]
    for _ in range(max_steps):
        sigma = f.lipschitz_constant()
        if sigma == 0:
            raise InvalidMarking("every edge is mapped to a point")
        forest = f.tension_forest()
        lengths = [f.image_length(i) for i in range(nE)]
        nu, moving, speed = _best_descent(f, forest)
        if nu > 0:
            kind = "lower-sigma"
            moving = {v: d for v, d in moving.items() if v in speed}
            moving, speed = _cell_optimum(f, moving, sigma, lengths, ells)
            if not moving:
                raise InternalInvariant("descent direction lowers sigma but its cell does not")
            eps = Fraction(1)
        else:
            fverts = sorted({S.tail[2 * i] for i in forest} | {S.head[2 * i] for i in forest})
            moving = {}
            for v in fverts:
                D = f.single_gate(v, forest)
                if D is not None:
                    moving[v] = D
            if not moving:
                return f
            kind = "shrink-forest"
            speed = {v: Fraction(1) for v in moving}
            rates = [_rate(*_end_signs(f, i, moving), speed) for i in range(nE)]
            bounds = [_room(T, f.q[v], d) for v, d in moving.items()]
            for i in range(nE):
                if rates[i] < 0:
                    bounds.append(lengths[i] / -rates[i])
                elif i not in forest and rates[i] > 0:
                    bounds.append((sigma * ells[i] - lengths[i]) / rates[i] / 2)
            eps = min(bounds)
        if eps <= 0:
            raise InternalInvariant("descent step has no room")
        f = f.with_points(
            [_move(T, x, moving[v], eps * speed[v]) if v in moving else x for v, x in enumerate(f.q)]
        )
        if trace is not None:
            trace.append(DescentStep(sigma, len(forest), tuple(S.vids[v] for v in moving), eps, kind))
    raise SearchExhausted(f"optimal map not reached within {max_steps} steps")


def make_optimal(f: GoGMap, strict: bool = True, max_steps: int = DEFAULT_MAX_STEPS) -> GoGMap:
    """Optimal map homotopic to ``f``.

    With ``strict`` the Lipschitz constant must not drop: a drop means ``f`` was
    not minimal to begin with and NotMinimal is raised.
    """
    before = f.lipschitz_constant()
    g = descend(f, max_steps)
    after = g.lipschitz_constant()
    if strict and after < before:
        raise NotMinimal(f"Lipschitz constant dropped from {before} to {after}")
    return g


def is_optimal(f: GoGMap) -> bool:
    forest = f.tension_forest()
    S = f.source
    verts = {S.tail[2 * i] for i in forest} | {S.head[2 * i] for i in forest}
    return all(f.single_gate(v, forest) is None for v in verts)


# --- legal loops and witnesses ---------------------------------------------


def legal_loop(f: GoGMap) -> Word:
    """A loop inside the tension forest, legal at every turn, for an optimal map.

    Walks the forest turning into a different gate at every vertex; the walk is
    determined by the arriving oriented edge, so it eventually cycles.
    """
    S = f.source
    forest = f.tension_forest()
    start = 2 * min(forest)
    seen: dict[int, int] = {}
    order: list[int] = []
    choice: dict[int, tuple[int, int]] = {}
    oe = start
    while oe not in seen:
        seen[oe] = len(order)
        order.append(oe)
        w = S.head[oe]
        arrive = f.direction(w, S.groups[w].identity, oe ^ 1)
        nxt = None
        for o in S.out_edges[w]:
            if o >> 1 not in forest:
                continue
            for c in letter_reps(S.groups[w], S.near_sub[o]):
                if f.direction(w, c, o) != arrive:
                    nxt = (c, o)
                    break
            if nxt:
                break
        if nxt is None:
            raise NotMinimal(f"vertex {S.vids[w]} has a single gate; the map is not optimal")
        choice[oe] = nxt
        oe = nxt[1]
    cyc = order[seen[oe]:]
    v0 = S.tail[cyc[0]]
    letters = [S.groups[v0].identity]
    for e in cyc:
        c, _ = choice[e]
        letters.extend([e, c])
    return Word(v0, letters)


@dataclass
class WitnessCertificate:
    candidate: Word
    ratio: Fraction
    in_forest: bool
    legal: bool
    sigma: Fraction
    source: GraphOfGroups = field(repr=False)

    @property
    def valid(self) -> bool:
        return self.in_forest and self.legal and self.ratio == self.sigma

    def word_text(self) -> str:
        return format_word(self.source, self.candidate)


def image_ratio(m: Marking, w: Word) -> Fraction:
    """``l_{T'}(m(w)) / l_T(w)`` for a hyperbolic loop word ``w``."""
    S, T = m.source, m.target
    den = tl(S, to_base(S, w))
    if den == 0:
        raise ValueError("ratio of an elliptic element")
    return tl(T, m.apply(w)) / den


def check_witness(f: GoGMap, xi: Word) -> WitnessCertificate:
    """Trace the cyclically reduced core of ``xi`` through the tension forest and the gates."""
    S = f.source
    _, core = cyclic_reduce(S, to_base(S, xi))
    sigma = f.lipschitz_constant()
    if core.n_edges == 0:
        return WitnessCertificate(xi, Fraction(0), False, False, sigma, S)
    forest = f.tension_forest()
    L = core.letters
    edges = L[1::2]
    in_forest = all(oe >> 1 in forest for oe in edges)
    legal = in_forest
    if in_forest:
        n = len(edges)
        for k in range(n):
            e_in = edges[k]
            e_out = edges[(k + 1) % n]
            w = S.head[e_in]
            g = L[2 * k + 2] if k + 1 < n else S.groups[w].mul(L[-1], L[0])
            if f.direction(w, S.groups[w].identity, e_in ^ 1) == f.direction(w, g, e_out):
                legal = False
                break
    return WitnessCertificate(xi, image_ratio(f.marking, xi), in_forest, legal, sigma, S)


# --- candidates ----------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    word: Word
    visits: tuple[int, ...]


@dataclass
class CandidateSet:
    gog: GraphOfGroups
    budget: int
    candidates: list[Candidate]

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def words(self) -> list[Word]:
        return [c.word for c in self.candidates]


def _rotation_key(S: GraphOfGroups, pairs: list[tuple[int, int]]) -> tuple:
    n = len(pairs)
    rots = [tuple(pairs[k:] + pairs[:k]) for k in range(n)]
    # inverse loop: e_n^-1 g_{n-1}^-1 ... e_1^-1 g_n^-1, as (edge, letter after it) pairs
    inv = []
    for k in range(n - 1, -1, -1):
        e = pairs[k][0] ^ 1
        G = S.groups[S.head[e]]
        inv.append((e, G.inv(pairs[k - 1][1])))
    rots += [tuple(inv[k:] + inv[:k]) for k in range(n)]
    return min(rots)


def enumerate_candidates(
    gog: GraphOfGroups,
    budget: int = 10,
    cap: int = 200_000,
    max_edges: int | None = None,
) -> CandidateSet:
    """Cyclically reduced loops visiting every vertex at most ``budget`` times.

    Letters between consecutive edges run over left coset representatives of
    the next edge group; the closing letter runs over the whole group when it
    is finite. Infinite index is sampled. Loops are kept up to rotation and inversion.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    gog.build()
    S = gog
    nV = len(S.vids)
    limit = budget * nV if max_edges is None else min(max_edges, budget * nV)
    keys: set = set()
    out: list[Candidate] = []
    visits = [0] * nV

    def closing_letters(w: int, e_last: int, e_first: int) -> list[int]:
        G = S.groups[w]
        if isinstance(G, FiniteGroup):
            cand = list(range(G.n))
        else:
            cand = letter_reps(G, S.near_sub[e_first])
        return [g for g in cand if not (e_first == (e_last ^ 1) and G.contains(S.near_sub[e_first], g))]

    def emit(pairs_open: list[tuple[int, int]], e_last: int):
        e_first = pairs_open[0][0] if pairs_open else e_last
        w = S.head[e_last]
        for g in closing_letters(w, e_last, e_first):
            pairs = pairs_open + [(e_last, g)]
            key = _rotation_key(S, pairs)
            if key in keys:
                continue
            keys.add(key)
            v0 = S.tail[pairs[0][0]]
            letters = [S.groups[v0].identity]
            for e, c in pairs:
                letters.extend([e, c])
            out.append(Candidate(Word(v0, letters), tuple(visits)))
            if len(out) > cap:
                raise ExplosionGuard(f"more than {cap} candidates at budget {budget}")

    def dfs(v0: int, pairs: list[tuple[int, int]], e_last: int, depth: int):
        w = S.head[e_last]
        visits[w] += 1
        if w == v0:
            emit(pairs, e_last)
        if depth < limit:
            G = S.groups[w]
            for o in S.out_edges[w]:
                if visits[S.head[o]] >= budget and S.head[o] != v0:
                    continue
                if S.head[o] == v0 and visits[v0] >= budget:
                    continue
                for c in letter_reps(G, S.near_sub[o]):
                    if o == (e_last ^ 1) and G.contains(S.near_sub[o], c):
                        continue
                    pairs.append((e_last, c))
                    dfs(v0, pairs, o, depth + 1)
                    pairs.pop()
        visits[w] -= 1

    for v0 in range(nV):
        for o in S.out_edges[v0]:
            dfs(v0, [], o, 1)
    return CandidateSet(gog, budget, out)


def max_visits(gog: GraphOfGroups, w: Word) -> int:
    counts = [0] * len(gog.vids)
    for oe in w.edges:
        counts[gog.head[oe]] += 1
    return max(counts)


def candidate_maximum(m: Marking, cands: CandidateSet) -> tuple[Fraction, Word | None]:
    best, arg = Fraction(0), None
    for c in cands:
        r = image_ratio(m, c.word)
        if r > best:
            best, arg = r, c.word
    return best, arg


# --- distances ---------------------------------------------------------------


@dataclass
class DistanceResult:
    sigma: Fraction
    witness: WitnessCertificate
    optimal: GoGMap
    candidate_max: Fraction | None
    candidate_count: int
    budget: int | None
    label: str  # "confirmed" when the candidate maximum meets the optimal constant

    @property
    def log_sigma(self) -> float:
        return math.log(self.sigma)


def distance(
    T: GraphOfGroups,
    T2: GraphOfGroups,
    m: Marking,
    budget: int | None = None,
    cap: int = 200_000,
    cross_check: bool = True,
    jobs: int = 1,
) -> DistanceResult:
    """sigma(T, T') for the marking ``m`` with a validated witness.

    The optimal map gives the upper bound and its legal loop attains it, so sigma
    is exact. Candidates up to ``budget`` visits are evaluated as an independent
    check; ``budget=None`` uses the visit count of the witness.
    """
    if m.source != T or m.target != T2:
        raise InvalidMarking("marking does not go from the first to the second graph of groups")
    f = descend(initial_map(m))
    sigma = f.lipschitz_constant()
    xi = legal_loop(f)
    cert = check_witness(f, xi)
    if not cert.valid:
        raise InternalInvariant(
            f"legal loop {format_word(T, xi)} has ratio {cert.ratio}, expected {sigma}"
        )
    cmax, count, used = None, 0, budget
    label = "witness"
    if cross_check:
        used = budget if budget is not None else max(1, max_visits(T, xi))
        cands = enumerate_candidates(T, used, cap)
        count = len(cands)
        cmax = _parallel_max(m, cands, jobs)
        if cmax > sigma:
            raise InternalInvariant(f"candidate ratio {cmax} exceeds the Lipschitz constant {sigma}")
        label = "confirmed" if cmax == sigma else "lower bound"
    return DistanceResult(sigma, cert, f, cmax, count, used, label)


def _ratio_job(args):
    m, words = args
    return max((image_ratio(m, w) for w in words), default=Fraction(0))


def _parallel_max(m: Marking, cands: CandidateSet, jobs: int) -> Fraction:
    words = cands.words()
    if jobs <= 1 or len(words) < 200:
        return candidate_maximum(m, cands)[0]
    from concurrent.futures import ThreadPoolExecutor

    chunks = [words[k::jobs] for k in range(jobs)]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return max(ex.map(_ratio_job, [(m, c) for c in chunks]))


def sigma(T: GraphOfGroups, T2: GraphOfGroups, m: Marking) -> Fraction:
    return distance(T, T2, m, cross_check=False).sigma


def sym_distance(T: GraphOfGroups, T2: GraphOfGroups, m: Marking, **kw) -> tuple[DistanceResult, DistanceResult]:
    fwd = distance(T, T2, m, **kw)
    back = distance(T2, T, m.inverse(), **kw)
    return fwd, back


# --- non-isometry -------------------------------------------------------------


@dataclass
class NonIsometryReport:
    discrepancy: Word | None
    length_source: Fraction | None
    length_target: Fraction | None
    fixed_source: list[str]
    fixed_target: list[str]

    @property
    def newly_fixed(self) -> list[str]:
        """Edge orbits at the base fixed by the elliptic element in the target only."""
        return sorted(set(self.fixed_target) - set(self.fixed_source))

    @property
    def fires(self) -> bool:
        return self.discrepancy is not None or self.fixed_source != self.fixed_target


def fixed_edges_at_base(gog: GraphOfGroups, g: Word) -> list[str]:
    """Oriented edge orbits at the base vertex containing an edge fixed by ``g``.

    ``g`` must fix the base vertex, i.e. reduce to a single base letter.
    """
    from .words import reduce_word

    r = reduce_word(gog, g)
    if r.n_edges:
        raise ValueError("element does not fix the base vertex")
    k = r.letters[0]
    b = gog.base_index
    G = gog.groups[b]
    out = []
    for oe in gog.out_edges[b]:
        sub = gog.near_sub[oe]
        for c in letter_reps(G, sub):
            # g fixes the germ (c, oe) iff c^-1 g c lies in the edge group
            if G.contains(sub, G.mul(G.mul(G.inv(c), k), c)):
                out.append(gog.edge_name(oe))
                break
    return sorted(out)


def detect_non_isometry(
    m: Marking, words: Iterable[Word], elliptic: Word | None = None
) -> NonIsometryReport:
    """Look for a loop whose translation length changes under ``m``.

    A change certifies that the two trees are not equivariantly isometric. For an
    optional elliptic element fixing the base vertex, also report which edge
    orbits at the base it fixes in each tree.
    """
    S, T = m.source, m.target
    disc = ls = lt = None
    for w in words:
        a = tl(S, to_base(S, w))
        b = tl(T, m.apply(w))
        if a != b:
            disc, ls, lt = w, a, b
            break
    fs = ft = []
    if elliptic is not None:
        fs = fixed_edges_at_base(S, elliptic)
        ft = fixed_edges_at_base(T, m.apply(elliptic))
    return NonIsometryReport(disc, ls, lt, fs, ft)
