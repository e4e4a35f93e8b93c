"""Finite pieces of the Bass-Serre tree: canonical vertices, points, geodesics, the group action.

A vertex of the tree is a coset ``P G_v`` where ``P`` is a path word from the
base vertex to ``v``. Canonical representatives are obtained by pushing every
vertex letter into a fixed transversal of the near edge-group image, scanning
left to right. A point on an edge is a vertex together with a germ (an outgoing
edge at that vertex) and an offset.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from .errors import BallBudgetExceeded, MalformedWord
from .gog import GraphOfGroups
from .words import Word, concat, inverse, path_length, reduce_word

DEFAULT_BALL_BUDGET = 200_000

Germ = tuple  # (rep, oe): the edge P.rep.oe leaving the vertex P


def canon(gog: GraphOfGroups, w: Word) -> tuple[Word, int]:
    """Split a path word from the base into a canonical vertex word and a trailing letter."""
    r = reduce_word(gog, w)
    L = list(r.letters)
    groups, near_sub, head, tail = gog.groups, gog.near_sub, gog.head, gog.tail
    for i in range(1, len(L), 2):
        oe = L[i]
        G = groups[tail[oe]]
        g = L[i - 1]
        rep = G.coset_rep(near_sub[oe], g)
        if rep != g:
            s = G.mul(G.inv(rep), g)
            L[i - 1] = rep
            H = groups[head[oe]]
            L[i + 1] = H.mul(gog.push(oe, s), L[i + 1])
    k = L[-1]
    end = head[L[-2]] if len(L) > 1 else r.start
    L[-1] = groups[end].identity
    return Word(r.start, L), k


def germ_norm(gog: GraphOfGroups, rep: int, oe: int) -> Germ:
    G = gog.groups[gog.tail[oe]]
    return (G.coset_rep(gog.near_sub[oe], rep), oe)


@dataclass(frozen=True)
class TreePoint:
    """Vertex ``path`` if ``germ`` is None, else the point at distance ``s`` along the germ."""

    path: Word
    germ: Germ | None = None
    s: Fraction = Fraction(0)

    @property
    def is_vertex(self) -> bool:
        return self.germ is None


def vertex_point(gog: GraphOfGroups, w: Word) -> TreePoint:
    return TreePoint(canon(gog, w)[0])


def base_point(gog: GraphOfGroups) -> TreePoint:
    gog.build()
    return TreePoint(Word(gog.base_index, (gog.groups[gog.base_index].identity,)))


def vertex_end(gog: GraphOfGroups, P: Word) -> int:
    return gog.head[P.letters[-2]] if len(P.letters) > 1 else P.start


def germ_target(gog: GraphOfGroups, P: Word, germ: Germ) -> tuple[Word, Germ]:
    """The far endpoint of the edge ``germ`` at ``P`` and the reversed germ there."""
    rep, oe = germ
    G = gog.groups[gog.tail[oe]]
    letters = list(P.letters)
    letters[-1] = G.mul(letters[-1], rep)
    w = Word(P.start, letters + [oe, gog.groups[gog.head[oe]].identity])
    Q, k = canon(gog, w)
    return Q, germ_norm(gog, k, oe ^ 1)


def make_point(gog: GraphOfGroups, P: Word, germ: Germ | None = None, s: Fraction = Fraction(0)) -> TreePoint:
    """Canonical point from a canonical vertex word, an optional germ and offset."""
    if germ is None or s == 0:
        return TreePoint(P)
    rep, oe = germ_norm(gog, *germ)
    ell = gog.length(oe)
    if s == ell:
        return TreePoint(germ_target(gog, P, (rep, oe))[0])
    if not 0 < s < ell:
        raise ValueError("offset outside the edge")
    if oe % 2 == 1:
        Q, g2 = germ_target(gog, P, (rep, oe))
        return TreePoint(Q, g2, ell - s)
    return TreePoint(P, (rep, oe), Fraction(s))


def edge_ends(gog: GraphOfGroups, x: TreePoint) -> list[tuple[Word, Fraction, Germ | None]]:
    """Endpoints of the closed cell containing ``x`` with distances and the germ back toward ``x``."""
    if x.germ is None:
        return [(x.path, Fraction(0), None)]
    Q, back = germ_target(gog, x.path, x.germ)
    ell = gog.length(x.germ[1])
    return [(x.path, x.s, x.germ), (Q, ell - x.s, back)]


def vertex_geodesic(gog: GraphOfGroups, P: Word, Q: Word) -> Word:
    """Reduced path word ``P^-1 Q``; its edges trace the geodesic between the two vertices."""
    return reduce_word(gog, concat(gog, inverse(gog, P), Q))


def vertex_distance(gog: GraphOfGroups, P: Word, Q: Word) -> Fraction:
    return path_length(gog, vertex_geodesic(gog, P, Q))


@dataclass(frozen=True)
class Geodesic:
    length: Fraction
    # Direction leaving each end toward the other. At a vertex this is a germ;
    # at an interior point it is +1 (toward the far end of the canonical germ) or -1.
    dir_x: object
    dir_y: object
    via_x: int  # index into edge_ends(x) used by the geodesic (-1 if on the same cell)
    via_y: int


def _first_germ(gog: GraphOfGroups, W: Word) -> Germ:
    return germ_norm(gog, W.letters[0], W.letters[1])


def geodesic(gog: GraphOfGroups, x: TreePoint, y: TreePoint) -> Geodesic:
    if x.germ is not None and y.germ is not None and x.path == y.path and x.germ == y.germ:
        d = abs(x.s - y.s)
        if d == 0:
            return Geodesic(Fraction(0), None, None, -1, -1)
        sgn = 1 if y.s > x.s else -1
        return Geodesic(d, sgn, -sgn, -1, -1)
    ex, ey = edge_ends(gog, x), edge_ends(gog, y)
    best = None
    for i, (P, dp, _) in enumerate(ex):
        for j, (Q, dq, _) in enumerate(ey):
            W = vertex_geodesic(gog, P, Q)
            d = dp + dq + path_length(gog, W)
            if best is None or d < best[0]:
                best = (d, i, j, W)
    d, i, j, W = best
    if d == 0:
        return Geodesic(Fraction(0), None, None, i, j)

    # direction at x
    if x.germ is not None:
        dx = -1 if i == 0 else 1
    elif W.n_edges:
        dx = _first_germ(gog, W)
    else:
        # x is an endpoint of y's cell: leave along y's germ seen from x
        dx = ey[j][2]
    Wr = inverse(gog, W)
    Wr = reduce_word(gog, Wr)
    if y.germ is not None:
        dy = -1 if j == 0 else 1
    elif Wr.n_edges:
        dy = _first_germ(gog, Wr)
    else:
        dy = ex[i][2]
    return Geodesic(d, dx, dy, i, j)


def distance(gog: GraphOfGroups, x: TreePoint, y: TreePoint) -> Fraction:
    return geodesic(gog, x, y).length


def point_along(gog: GraphOfGroups, x: TreePoint, y: TreePoint, t: Fraction) -> TreePoint:
    """The point at distance ``t`` from ``x`` on the geodesic to ``y``."""
    g = geodesic(gog, x, y)
    if t <= 0:
        return x
    if t >= g.length:
        return y
    if g.via_x == -1:
        return make_point(gog, x.path, x.germ, x.s + (t if g.dir_x == 1 else -t))
    ex, ey = edge_ends(gog, x), edge_ends(gog, y)
    P, dp, _ = ex[g.via_x]
    Q, dq, back = ey[g.via_y]
    if t <= dp:
        return make_point(gog, x.path, x.germ, x.s + (t if g.dir_x == 1 else -t))
    t -= dp
    W = vertex_geodesic(gog, P, Q)
    L = W.letters
    cur = list(P.letters)
    pos = Fraction(0)
    for k in range(1, len(L), 2):
        oe = L[k]
        ell = gog.length(oe)
        if t < pos + ell:
            G = gog.groups[gog.tail[oe]]
            cur[-1] = G.mul(cur[-1], L[k - 1])
            V, kk = canon(gog, Word(P.start, cur))
            return make_point(gog, V, (kk, oe), t - pos)
        pos += ell
        G = gog.groups[gog.tail[oe]]
        cur[-1] = G.mul(cur[-1], L[k - 1])
        cur.extend([oe, gog.groups[gog.head[oe]].identity])
    t -= pos
    # remaining distance lies in y's cell, starting at Q
    if t == 0:
        return TreePoint(Q)
    return make_point(gog, Q, back, t)


def act(gog: GraphOfGroups, g: Word, x: TreePoint) -> TreePoint:
    """Image of a point under a loop word ``g`` at the base."""
    P, k = canon(gog, concat(gog, g, x.path))
    if x.germ is None:
        return TreePoint(P)
    rep, oe = x.germ
    G = gog.groups[gog.tail[oe]]
    return TreePoint(P, germ_norm(gog, G.mul(k, rep), oe), x.s)


def act_germ(gog: GraphOfGroups, g: Word, P: Word, germ: Germ) -> tuple[Word, Germ]:
    Q, k = canon(gog, concat(gog, g, P))
    rep, oe = germ
    G = gog.groups[gog.tail[oe]]
    return Q, germ_norm(gog, G.mul(k, rep), oe)


def neighbours(gog: GraphOfGroups, P: Word) -> Iterator[tuple[Germ, Word]]:
    v = vertex_end(gog, P)
    G = gog.groups[v]
    for oe in gog.out_edges[v]:
        try:
            reps = G.transversal(gog.near_sub[oe])
        except ValueError:
            raise BallBudgetExceeded(
                f"vertex {gog.vids[v]} has infinite valence along {gog.edge_name(oe)}"
            ) from None
        for c in reps:
            yield (c, oe), germ_target(gog, P, (c, oe))[0]


def ball(gog: GraphOfGroups, center: Word, radius: Fraction, budget: int = DEFAULT_BALL_BUDGET) -> list[Word]:
    """All vertices at distance at most ``radius`` from ``center`` (breadth first)."""
    seen = {center: Fraction(0)}
    order = [center]
    q = deque([center])
    while q:
        P = q.popleft()
        dP = seen[P]
        for (c, oe), Q in neighbours(gog, P):
            dQ = dP + gog.length(oe)
            if dQ > radius or Q in seen:
                continue
            seen[Q] = dQ
            order.append(Q)
            if len(order) > budget:
                raise BallBudgetExceeded(f"ball of radius {radius} has more than {budget} vertices")
            q.append(Q)
    return order


def displacement(gog: GraphOfGroups, g: Word, P: Word) -> Fraction:
    """d(P, gP) for a vertex ``P``."""
    return path_length(gog, reduce_word(gog, concat(gog, inverse(gog, P), g, P)))


def oracle_translation_length(gog: GraphOfGroups, g: Word, budget: int = DEFAULT_BALL_BUDGET) -> Fraction:
    """Brute force: minimise d(x, gx) over vertices of a ball around the base vertex."""
    gog.build()
    if g.start != gog.base_index or g.end(gog) != gog.base_index:
        raise MalformedWord("oracle needs a loop word at the base vertex")
    v0 = base_point(gog).path
    d0 = displacement(gog, g, v0)
    best = d0
    if d0 == 0:
        return best
    for P in ball(gog, v0, d0 / 2, budget):
        d = displacement(gog, g, P)
        if d < best:
            best = d
            if best == 0:
                break
    return best
