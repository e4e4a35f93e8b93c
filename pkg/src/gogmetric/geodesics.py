"""Lipschitz geodesics by shrinking, rescaling and folding along a morphism.

Starting from an optimal map f: T -> T' with constant C, edges outside the
tension forest shrink until every slope equals C (edges sent to a point
disappear), the result is scaled by C so that f becomes a local isometry on
edges, and the morphism is then folded at unit speed until it is an
immersion. Every intermediate graph carries a marking from T built from the
fold history, so distances between samples can be computed independently.

Folding is simulated on the quotient graph, which is exact when all vertex
groups are trivial. Graphs with nontrivial vertex groups raise
NotRepresentable.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .errors import InternalInvariant, NotRepresentable, SearchExhausted, ZeroLengthComponent
from .gog import EdgeSpec, GraphOfGroups, Inclusion, labeled_isomorphic, validate
from .groups import TrivialGroup
from .lipschitz import GoGMap, distance as lip_distance, enumerate_candidates
from .marking import Marking, WordMap, generators, identity_marking
from .tree import edge_ends, vertex_geodesic
from .words import Word, format_word, identity_word, tl

MAX_FOLD_EVENTS = 10_000

Piece = tuple[int, Fraction, Fraction]  # (target oriented edge, start offset, length)


def _require_free(gog: GraphOfGroups) -> None:
    gog.build()
    if any(not isinstance(G, TrivialGroup) for G in gog.groups):
        raise NotRepresentable("geodesic folding is implemented for graphs with trivial vertex groups")
    rank = len(gog.edges) - len(gog.vids) + 1
    if rank < 2:
        raise NotRepresentable("the fundamental group is not a nonabelian free group")


def image_pieces(f: GoGMap, oe: int) -> list[Piece]:
    """The image of the edge ``oe`` as a list of pieces of edges of the target quotient."""
    T2 = f.target
    x, y = f.q[f.source.tail[oe]], f.head_image(oe)
    g = f.edge_geodesic(oe)
    if g.length == 0:
        return []
    if g.via_x == -1:
        ox, ell = x.germ[1], T2.length(x.germ[1])
        if y.s > x.s:
            return [(ox, x.s, y.s - x.s)]
        return [(ox ^ 1, ell - x.s, x.s - y.s)]
    P = edge_ends(T2, x)[g.via_x][0]
    Q = edge_ends(T2, y)[g.via_y][0]
    out: list[Piece] = []
    if x.germ is not None:
        ox, ell = x.germ[1], T2.length(x.germ[1])
        out.append((ox ^ 1, ell - x.s, x.s) if g.via_x == 0 else (ox, x.s, ell - x.s))
    for e in vertex_geodesic(T2, P, Q).letters[1::2]:
        out.append((e, Fraction(0), T2.length(e)))
    if y.germ is not None:
        oy, ell = y.germ[1], T2.length(y.germ[1])
        out.append((oy, Fraction(0), y.s) if g.via_y == 0 else (oy ^ 1, Fraction(0), ell - y.s))
    if sum(p[2] for p in out) != g.length:
        raise InternalInvariant("image pieces do not add up to the image length")
    return [p for p in out if p[2] > 0]


# --- the folding graph -------------------------------------------------------


@dataclass
class _Edge:
    tail: int
    head: int
    length: Fraction
    label: int  # target oriented edge
    offset: Fraction  # where the edge starts along ``label``


class FoldGraph:
    """A finite graph mapped to the target quotient, edge by edge isometrically.

    Edge ids are never reused. Every replaced edge records the path that
    replaces it and every merged vertex records where it went, each stamped
    with a sequence number, so maps between any two past states can be read off.
    """

    def __init__(self, target: GraphOfGroups):
        self.target = target
        self.edges: dict[int, _Edge] = {}
        self.vertices: set[int] = set()
        self.repl: dict[int, tuple[int, list[int]]] = {}
        self.merged: dict[int, tuple[int, int]] = {}
        self.seq = 0
        self._next_v = 0
        self._next_e = 0

    # construction ---------------------------------------------------------
    def add_vertex(self) -> int:
        v = self._next_v
        self._next_v += 1
        self.vertices.add(v)
        return v

    def add_edge(self, t: int, h: int, length: Fraction, label: int, offset: Fraction) -> int:
        e = self._next_e
        self._next_e += 1
        self.edges[e] = _Edge(t, h, Fraction(length), label, Fraction(offset))
        return e

    def _tick(self) -> int:
        self.seq += 1
        return self.seq

    # queries ---------------------------------------------------------------
    def end(self, oe: int) -> int:
        e = self.edges[oe >> 1]
        return e.head if oe % 2 == 0 else e.tail

    def start(self, oe: int) -> int:
        return self.end(oe ^ 1)

    def key(self, oe: int):
        """Direction of the image of ``oe`` at its start."""
        e = self.edges[oe >> 1]
        if oe % 2 == 0:
            lab, a = e.label, e.offset
        else:
            lab, a = e.label ^ 1, self.target.length(e.label) - e.offset - e.length
        return (lab,) if a == 0 else (lab, a)

    def valence(self) -> dict[int, int]:
        val = {v: 0 for v in self.vertices}
        for e in self.edges.values():
            val[e.tail] += 1
            val[e.head] += 1
        return val

    def rank(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    def covolume(self) -> Fraction:
        return sum((e.length for e in self.edges.values()), Fraction(0))

    def illegal_groups(self) -> list[list[int]]:
        """Groups of at least two outgoing oriented edges at one vertex with the same image direction."""
        buckets: dict[tuple, list[int]] = defaultdict(list)
        for i in sorted(self.edges):
            for oe in (2 * i, 2 * i + 1):
                buckets[(self.start(oe), self.key(oe))].append(oe)
        return [g for g in buckets.values() if len(g) > 1]

    # history ---------------------------------------------------------------
    def expand(self, oe: int, seq: int) -> list[int]:
        """The path replacing ``oe`` in the state with sequence number ``seq``."""
        hit = self.repl.get(oe >> 1)
        if hit is None or hit[0] > seq:
            return [oe]
        path = hit[1] if oe % 2 == 0 else [x ^ 1 for x in reversed(hit[1])]
        out: list[int] = []
        for x in path:
            out.extend(self.expand(x, seq))
        return out

    def find(self, v: int, seq: int | None = None) -> int:
        while v in self.merged and (seq is None or self.merged[v][1] <= seq):
            v = self.merged[v][0]
        return v

    # moves ------------------------------------------------------------------
    def split(self, e: int, d: Fraction) -> tuple[int, int]:
        E = self.edges.pop(e)
        if not 0 < d < E.length:
            raise InternalInvariant("split point outside the edge")
        n = self.add_vertex()
        e1 = self.add_edge(E.tail, n, d, E.label, E.offset)
        e2 = self.add_edge(n, E.head, E.length - d, E.label, E.offset + d)
        self.repl[e] = (self._tick(), [2 * e1, 2 * e2])
        return e1, e2

    def _merge(self, v: int, w: int) -> None:
        v, w = self.find(v), self.find(w)
        if v == w:
            return
        self.merged[v] = (w, self._tick())
        self.vertices.discard(v)
        for E in self.edges.values():
            if E.tail == v:
                E.tail = w
            if E.head == v:
                E.head = w

    def fold(self, groups: list[list[int]], delta: Fraction) -> None:
        """Identify the initial segments of length ``delta`` within each group."""
        ends: dict[int, set[int]] = defaultdict(set)
        for grp in groups:
            for oe in grp:
                ends[oe >> 1].add(oe & 1)
        piece: dict[int, int] = {}
        for e, es in ends.items():
            if len(es) == 2 and self.edges[e].tail == self.edges[e].head and any(
                2 * e in g and 2 * e + 1 in g for g in groups
            ):
                raise InternalInvariant("a loop would fold onto itself")
            cur = e
            if 0 in es:
                if self.edges[cur].length > delta:
                    first, cur = self.split(cur, delta)
                    piece[2 * e] = 2 * first
                else:
                    piece[2 * e] = 2 * cur
            if 1 in es:
                L = self.edges[cur].length
                if L > delta:
                    _, last = self.split(cur, L - delta)
                    piece[2 * e + 1] = 2 * last + 1
                else:
                    piece[2 * e + 1] = 2 * cur + 1
        for grp in groups:
            kept = piece[grp[0]]
            for oe in grp[1:]:
                p = piece[oe]
                far_p, far_k = self.end(p), self.end(kept)
                self.edges.pop(p >> 1)
                self.repl[p >> 1] = (self._tick(), [kept] if p % 2 == 0 else [kept ^ 1])
                self._merge(far_p, far_k)

    def prune(self) -> None:
        """Remove hanging edges until every vertex has valence at least two."""
        while True:
            val = self.valence()
            leaf = next((v for v in sorted(val) if val[v] == 1), None)
            if leaf is None:
                return
            e = next(i for i, E in self.edges.items() if leaf in (E.tail, E.head))
            E = self.edges.pop(e)
            other = E.head if E.tail == leaf else E.tail
            self.repl[e] = (self._tick(), [])
            self.merged[leaf] = (other, self._tick())
            self.vertices.discard(leaf)

    def step_size(self, groups: list[list[int]]) -> Fraction:
        count: dict[int, int] = defaultdict(int)
        for grp in groups:
            for oe in grp:
                count[oe >> 1] += 1
        return min(self.edges[e].length / c for e, c in count.items())

    def snapshot(self) -> dict[int, tuple[int, int, Fraction]]:
        return {i: (E.tail, E.head, E.length) for i, E in self.edges.items()}


# --- normalized views of a state ---------------------------------------------


@dataclass
class GraphView:
    """A state of the folding graph as a normalized graph of groups.

    ``norm`` sends state oriented edges to paths in ``gog``; ``denorm`` sends
    oriented edges of ``gog`` back to state paths; ``vmap`` sends state
    vertices to vertex indices of ``gog``.
    """

    gog: GraphOfGroups
    seq: int
    norm: dict[int, list[int]]
    denorm: dict[int, list[int]]
    vmap: dict[int, int]
    scale: Fraction  # normalized length = scale * state length


def view_of(edges: dict[int, tuple[int, int, Fraction]], base_vertex: int, seq: int) -> GraphView:
    """Merge valence-two vertices and rescale to covolume one."""
    verts = sorted({x for t, h, _ in edges.values() for x in (t, h)})
    val = {v: 0 for v in verts}
    out_edges: dict[int, list[int]] = defaultdict(list)
    for i in sorted(edges):
        t, h, _ = edges[i]
        val[t] += 1
        val[h] += 1
        out_edges[t].append(2 * i)
        out_edges[h].append(2 * i + 1)

    def head(oe):
        t, h, _ = edges[oe >> 1]
        return h if oe % 2 == 0 else t

    kept = [v for v in verts if val[v] != 2]
    if not kept:
        kept = [base_vertex if base_vertex in val else verts[0]]
    keep = set(kept)
    chains: list[list[int]] = []
    used: set[int] = set()
    for u in kept:
        for oe in out_edges[u]:
            if oe in used:
                continue
            chain = [oe]
            used.add(oe)
            while head(chain[-1]) not in keep:
                w = head(chain[-1])
                nxt = next(x for x in out_edges[w] if x != (chain[-1] ^ 1))
                chain.append(nxt)
                used.add(nxt)
            used.add(chain[-1] ^ 1)
            # mark the reverse of every inner edge too, so the chain is emitted once
            for x in chain:
                used.add(x ^ 1)
            chains.append(chain)
    total = sum((l for _, _, l in edges.values()), Fraction(0))
    scale = 1 / total
    names = {v: f"v{k}" for k, v in enumerate(kept)}
    specs = []
    norm: dict[int, list[int]] = {}
    denorm: dict[int, list[int]] = {}
    vmap: dict[int, int] = {}
    triv = Inclusion.trivial()
    for k, chain in enumerate(chains):
        u, w = names[(edges[chain[0] >> 1][0] if chain[0] % 2 == 0 else edges[chain[0] >> 1][1])], names[head(chain[-1])]
        length = sum((edges[x >> 1][2] for x in chain), Fraction(0)) * scale
        specs.append(EdgeSpec(f"e{k}", u, w, length, triv, triv))
        denorm[2 * k] = list(chain)
        denorm[2 * k + 1] = [x ^ 1 for x in reversed(chain)]
        norm[chain[0]] = [2 * k]
        norm[chain[0] ^ 1] = [2 * k + 1]
        for x in chain[1:]:
            norm[x] = []
            norm[x ^ 1] = []
        for x in chain[:-1]:
            vmap[head(x)] = head(chain[-1])
    gog = GraphOfGroups({names[v]: TrivialGroup() for v in kept}, specs, names[kept[0]])
    validate(gog)
    idx = {v: gog.vindex[names[v]] for v in kept}
    vfinal = {v: idx[v] for v in kept}
    for v, w in vmap.items():
        vfinal[v] = idx[w]
    base = base_vertex if base_vertex in vfinal else kept[0]
    gog = gog.with_base(gog.vids[vfinal[base]])
    validate(gog)
    return GraphView(gog, seq, norm, denorm, vfinal, scale)


def _path_word(gog: GraphOfGroups, start: int, oes: Iterable[int]) -> Word:
    letters = [0]
    for oe in oes:
        letters += [oe, 0]
    return Word(start, letters)


# --- the morphism -------------------------------------------------------------


@dataclass
class Morphism:
    """The rescaled source together with its piecewise isometric image description."""

    source: GraphOfGroups  # T
    target: GraphOfGroups  # T'
    C: Fraction
    image_lengths: list[Fraction]
    pieces: list[list[Piece]]  # per source edge, forward orientation
    collapsed: frozenset[int]  # source edges sent to a point
    optimal: GoGMap

    def rescaled(self) -> GraphOfGroups:
        """The shrunk source: lengths L_e / C on surviving edges (edges sent to points omitted)."""
        return _collapse(self.source, self.collapsed, [L / self.C for L in self.image_lengths])[0]


def _collapse(gog: GraphOfGroups, zero: frozenset[int], lengths: list[Fraction]):
    """Contract the edges in ``zero``; returns the quotient and the vertex class map."""
    gog.build()
    parent = list(range(len(gog.vids)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in sorted(zero):
        a, b = find(gog.tail[2 * i]), find(gog.head[2 * i])
        if a == b:
            raise ZeroLengthComponent(
                f"edges sent to a point contain a cycle through {gog.edges[i].id}"
            )
        parent[a] = b
    cls = [find(v) for v in range(len(gog.vids))]
    verts = {gog.vids[v]: gog.groups[v] for v in sorted(set(cls))}
    specs = [
        EdgeSpec(e.id, gog.vids[cls[gog.tail[2 * i]]], gog.vids[cls[gog.head[2 * i]]], lengths[i], e.inc_src, e.inc_dst)
        for i, e in enumerate(gog.edges)
        if i not in zero
    ]
    out = GraphOfGroups(verts, specs, gog.vids[cls[gog.base_index]])
    validate(out)
    return out, cls


def rescale_to_morphism(T: GraphOfGroups, T2: GraphOfGroups, m: Marking, jobs: int = 1):
    """Optimal map, its constant and the edge-isometric description after shrinking and scaling.

    Returns ``(T_bar, C, morphism)`` where ``T_bar`` is the shrunk source (not
    normalized) and ``C * T_bar`` maps to ``T2`` isometrically on edges.
    """
    _require_free(T)
    _require_free(T2)
    res = lip_distance(T, T2, m, cross_check=False, jobs=jobs)
    f = res.optimal
    C = res.sigma
    L = [f.image_length(i) for i in range(len(T.edges))]
    for i in f.tension_forest():
        if L[i] != C * T.edges[i].length:
            raise InternalInvariant("tension edge does not have the maximal slope")
    zero = frozenset(i for i, x in enumerate(L) if x == 0)
    pieces = [image_pieces(f, 2 * i) for i in range(len(T.edges))]
    mor = Morphism(T, T2, C, L, pieces, zero, f)
    return mor.rescaled(), C, mor


# --- sampled paths --------------------------------------------------------------


@dataclass
class Sample:
    t: Fraction
    phase: str  # "Shrink", "Homothety" or "Fold"
    gog: GraphOfGroups  # covolume one
    marking: Marking  # from the start of the path
    _kind: str = "fold"
    _param: object = None  # shrink parameter, or the fold view


@dataclass
class GeodesicPath:
    source: GraphOfGroups
    target: GraphOfGroups
    marking: Marking
    sigma: Fraction
    witness: Word
    samples: list[Sample]
    fold_events: list[Fraction]
    fold_time: Fraction
    _graph: FoldGraph | None = field(default=None, repr=False)

    def marking_between(self, i: int, j: int) -> Marking:
        """Marking from sample ``i`` to sample ``j`` (``i <= j``) induced by the path."""
        a, b = self.samples[i], self.samples[j]
        if i == j:
            return identity_marking(a.gog)
        if i > j:
            raise ValueError("markings only run forward along the path")
        if a._kind == "shrink":
            # the shrink samples share the generators of the source
            return Marking(a.gog, b.gog, b.marking.images)
        return _fold_marking(self._graph, a._param, b._param, a.gog, b.gog)

    def sigma_from_start(self, i: int) -> Fraction:
        return lip_distance(self.source, self.samples[i].gog, self.samples[i].marking, cross_check=False).sigma

    def verify(self, jobs: int = 1) -> "PathCheck":
        return verify_path(self, jobs)


def _fold_marking(G: FoldGraph, va: GraphView, vb: GraphView, ga: GraphOfGroups, gb: GraphOfGroups) -> Marking:
    def edge(oe: int) -> Word:
        path = []
        for x in va.denorm[oe]:
            for y in G.expand(x, vb.seq):
                path.extend(vb.norm[y])
        start = vmap[ga.tail[oe]]
        return _path_word(gb, start, path)

    state_of = {}
    for v_state, k in va.vmap.items():
        state_of.setdefault(k, v_state)
    vmap = [vb.vmap[G.find(state_of[k], vb.seq)] for k in range(len(ga.vids))]
    wm = WordMap(ga, gb, vmap, lambda v, g: identity_word(gb, vmap[v]), edge)
    return Marking(ga, gb, wm.marking_images())


def _shrink_lengths(T: GraphOfGroups, mor: Morphism, s: Fraction) -> list[Fraction]:
    return [(1 - s) * e.length + s * mor.image_lengths[i] / mor.C for i, e in enumerate(T.edges)]


def _initial_state(mor: Morphism) -> tuple[FoldGraph, int, dict[int, list[int]], list[int]]:
    """The subdivided graph C*T_bar with labels; returns maps from T's edges and vertices."""
    T, T2 = mor.source, mor.target
    _, cls = _collapse(T, mor.collapsed, [L / mor.C for L in mor.image_lengths])
    G = FoldGraph(T2)
    vid = {c: G.add_vertex() for c in sorted(set(cls))}
    tv = [vid[c] for c in cls]
    paths: dict[int, list[int]] = {}
    for i in range(len(T.edges)):
        if i in mor.collapsed:
            paths[2 * i] = paths[2 * i + 1] = []
            continue
        cur = tv[T.tail[2 * i]]
        seq = []
        pcs = mor.pieces[i]
        for k, (lab, a, ln) in enumerate(pcs):
            nxt = tv[T.head[2 * i]] if k == len(pcs) - 1 else G.add_vertex()
            seq.append(2 * G.add_edge(cur, nxt, ln, lab, a))
            cur = nxt
        paths[2 * i] = seq
        paths[2 * i + 1] = [x ^ 1 for x in reversed(seq)]
    return G, tv[T.base_index], paths, tv


def _run_folds(G: FoldGraph, stops: list[Fraction], record) -> tuple[list[Fraction], Fraction]:
    """Fold to the end, calling ``record(tau)`` at each time in ``stops`` and after every event."""
    tau = Fraction(0)
    events: list[Fraction] = []
    stops = sorted(set(stops))
    k = 0
    while k < len(stops) and stops[k] <= 0:
        record(tau)
        k += 1
    for _ in range(MAX_FOLD_EVENTS):
        groups = G.illegal_groups()
        if not groups:
            while k < len(stops):
                if stops[k] > tau:
                    record(stops[k])
                k += 1
            return events, tau
        delta = G.step_size(groups)
        if k < len(stops) and stops[k] < tau + delta:
            delta = stops[k] - tau
            G.fold(groups, delta)
            G.prune()
            tau = stops[k]
            record(tau)
            k += 1
            continue
        G.fold(groups, delta)
        G.prune()
        tau += delta
        events.append(tau)
        while k < len(stops) and stops[k] <= tau:
            k += 1
        record(tau)
    raise SearchExhausted("folding did not terminate within the event budget")


def skora_fold_path(mor: Morphism, times: Iterable[Fraction]) -> list[tuple[Fraction, GraphOfGroups, Marking]]:
    """States of the fold at the requested times, each with its marking from the source."""
    path = _build(mor, list(times), samples=0, include_events=False)
    return [(s.t, s.gog, s.marking) for s in path.samples if s.phase == "Fold"]


def _build(mor: Morphism, fold_times: list[Fraction] | None, samples: int, include_events: bool,
           m: Marking | None = None) -> GeodesicPath:
    T, T2 = mor.source, mor.target
    gens = generators(T)

    # dry run for the event times
    G0 = _initial_state(mor)[0]
    events, tau_end = _run_folds(G0, [], lambda tau: None)

    G, base_v, tpaths, tv = _initial_state(mor)
    if fold_times is None:
        grid = [tau_end * Fraction(k, samples) for k in range(samples + 1)] if samples else [Fraction(0), tau_end]
        fold_times = sorted(set(grid) | (set(events) if include_events else set()))
    recorded: list[tuple[Fraction, GraphView]] = []

    def record(tau):
        G_view = view_of(G.snapshot(), G.find(base_v), G.seq)
        recorded.append((tau, G_view))

    _run_folds(G, list(fold_times), record)
    samples_out: list[Sample] = []
    n = max(samples, 1)
    # shrink phase: same graph, lengths interpolated
    for k in range(n):
        s = Fraction(k, n)
        Ts = T.with_lengths(_shrink_lengths(T, mor, s))
        Ts = Ts.scaled(1 / Ts.covolume())
        validate(Ts)
        mk = Marking(T, Ts, gens.words)
        samples_out.append(Sample(s / 2, "Shrink", Ts, mk, "shrink", s))

    def from_start(view: GraphView) -> Marking:
        gb = view.gog

        def edge(oe: int) -> Word:
            path = []
            for x in tpaths[oe]:
                for y in G.expand(x, view.seq):
                    path.extend(view.norm[y])
            return _path_word(gb, vmap[T.tail[oe]], path)

        vmap = [view.vmap[G.find(tv[v], view.seq)] for v in range(len(T.vids))]
        wm = WordMap(T, gb, vmap, lambda v, g: identity_word(gb, vmap[v]), edge)
        return Marking(T, gb, wm.marking_images())

    seen = set()
    for tau, view in recorded:
        if tau in seen:
            continue
        seen.add(tau)
        t = Fraction(1, 2) + (tau / (2 * tau_end) if tau_end else Fraction(0))
        phase = "Homothety" if tau == 0 else "Fold"
        samples_out.append(Sample(t, phase, view.gog, from_start(view), "fold", view))
    if tau_end == 0 and samples_out[-1].t < 1:
        last = samples_out[-1]
        samples_out.append(Sample(Fraction(1), "Fold", last.gog, last.marking, "fold", last._param))
    return GeodesicPath(T, T2, m, mor.C, None, samples_out, events, tau_end, G)


def geodesic(T: GraphOfGroups, T2: GraphOfGroups, m: Marking, samples: int = 4, jobs: int = 1) -> GeodesicPath:
    """A Lipschitz geodesic from ``T`` to ``T2`` sampled uniformly per phase plus at fold events."""
    _, C, mor = rescale_to_morphism(T, T2, m, jobs=jobs)
    path = _build(mor, None, samples, include_events=True, m=m)
    res = lip_distance(T, T2, m, cross_check=False)
    path.witness = res.witness.candidate
    final = path.samples[-1]
    if not labeled_isomorphic(final.gog, T2):
        raise InternalInvariant("the fold did not end at the target graph")
    return path


# --- verification -----------------------------------------------------------------


@dataclass
class PathCheck:
    sigmas: dict[tuple[int, int], Fraction]
    additive: bool
    witness_persistent: bool
    endpoint_lengths_match: bool
    failures: list[str]

    @property
    def ok(self) -> bool:
        return self.additive and self.witness_persistent and self.endpoint_lengths_match


def verify_path(path: GeodesicPath, jobs: int = 1, candidate_budget: int = 2) -> PathCheck:
    """Exact additivity over all sampled triples and persistence of the path's witness."""
    S = path.samples
    n = len(S)
    sig: dict[tuple[int, int], Fraction] = {}
    failures: list[str] = []
    for i in range(n):
        for j in range(i + 1, n):
            mk = path.marking_between(i, j)
            sig[(i, j)] = lip_distance(S[i].gog, S[j].gog, mk, cross_check=False, jobs=jobs).sigma
    additive = True
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                if sig[(i, j)] * sig[(j, k)] != sig[(i, k)]:
                    additive = False
                    failures.append(f"additivity fails at samples {i},{j},{k}")
    xi = path.witness
    T = path.source
    base_len = tl(T, xi)
    persistent = True
    lengths = [tl(s.gog, s.marking.apply(xi)) for s in S]
    for i in range(n):
        for j in range(i + 1, n):
            if lengths[j] / lengths[i] != sig[(i, j)]:
                persistent = False
                failures.append(f"witness {format_word(T, xi)} misses sigma between samples {i} and {j}")
    if n > 1 and lengths[0] != base_len:
        persistent = False
    # the final sample should carry the same translation lengths as the target
    final = S[-1]
    match = True
    for w in enumerate_candidates(T, candidate_budget).words():
        if tl(final.gog, final.marking.apply(w)) != tl(path.target, path.marking.apply(w)):
            match = False
            failures.append(f"final sample disagrees with the target on {format_word(T, w)}")
            break
    return PathCheck(sig, additive, persistent, match, failures)

