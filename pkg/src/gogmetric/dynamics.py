"""Displacement of automorphisms, train track search, reduction certificates, classification.

The train track search works on topological representatives of automorphisms
of free splittings (trivial vertex groups): a self-map of a finite graph
sending vertices to vertices and edges to reduced edge paths. The metric is
the Perron-Frobenius eigenvector of the transition matrix, so every edge
stretches by the same factor; the gate conditions are then checked
combinatorially and illegal turns are folded.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .deformation import collapse, twist
from .errors import NotRepresentable
from .gog import EdgeSpec, GraphOfGroups, Inclusion, validate
from .groups import TrivialGroup
from .lipschitz import detect_non_isometry, distance, enumerate_candidates
from .marking import Marking, WordMap, generators, identity_marking
from .samples import random_lengths
from .words import Word, format_word, identity_word, reduce_word, translation_length

PF_TOLERANCE = 1e-12
POWER_TOLERANCE = 1e-9
EXACT_DENOMINATOR = 10**6
APPROX_DENOMINATOR = 10**15


def displacement(T: GraphOfGroups, phi: Marking, budget: int | None = None) -> tuple[Fraction, Word]:
    """sigma(T, T phi) and a witness loop."""
    twin, mk = twist(T, phi)
    res = distance(T, twin, mk, budget=budget, cross_check=budget is not None)
    return res.sigma, res.witness.candidate


def power_marking(phi: Marking, k: int) -> Marking:
    out = identity_marking(phi.source)
    for _ in range(k):
        out = out.then(phi)
    return out


# --- topological representatives -------------------------------------------------


def _is_free(gog: GraphOfGroups) -> bool:
    gog.build()
    return all(isinstance(G, TrivialGroup) for G in gog.groups)


@dataclass
class TopRep:
    """A self-map of a graph: vertex images and reduced edge-path images of edges.

    Edges and vertices are keyed by integers; oriented edge ``2*i`` runs from
    ``ends[i][0]`` to ``ends[i][1]``.
    """

    ends: dict[int, tuple[int, int]]
    vmap: dict[int, int]
    images: dict[int, list[int]]
    base: int
    names: dict[int, str] = field(default_factory=dict)

    def tail(self, oe: int) -> int:
        return self.ends[oe >> 1][oe & 1]

    def head(self, oe: int) -> int:
        return self.ends[oe >> 1][1 - (oe & 1)]

    def image(self, oe: int) -> list[int]:
        img = self.images[oe >> 1]
        return list(img) if oe % 2 == 0 else [x ^ 1 for x in reversed(img)]

    def edge_ids(self) -> list[int]:
        return sorted(self.ends)

    def vertices(self) -> list[int]:
        return sorted({v for e in self.ends.values() for v in e} | {self.base})

    def out_edges(self, v: int) -> list[int]:
        out = []
        for i in self.edge_ids():
            if self.ends[i][0] == v:
                out.append(2 * i)
            if self.ends[i][1] == v:
                out.append(2 * i + 1)
        return out

    def name(self, i: int) -> str:
        return self.names.get(i, f"e{i}")

    def oe_name(self, oe: int) -> str:
        return self.name(oe >> 1) + ("+" if oe % 2 == 0 else "-")

    def derivative(self, oe: int) -> int:
        return self.image(oe)[0]

    def transition_matrix(self) -> np.ndarray:
        ids = self.edge_ids()
        pos = {i: k for k, i in enumerate(ids)}
        M = np.zeros((len(ids), len(ids)), dtype=np.int64)
        for i in ids:
            for x in self.images[i]:
                M[pos[i], pos[x >> 1]] += 1
        return M

    def gates(self) -> dict[int, list[list[int]]]:
        out = {}
        for v in self.vertices():
            classes: dict[int, list[int]] = {}
            for oe in self.out_edges(v):
                classes.setdefault(self.derivative(oe), []).append(oe)
            out[v] = sorted(classes.values())
        return out

    def gate_excess(self) -> int:
        return sum(max(0, len(g) - 2) for g in self.gates().values())

    def legal(self, d1: int, d2: int) -> bool:
        return self.derivative(d1) != self.derivative(d2)

    def gog(self, lengths: dict[int, Fraction]) -> GraphOfGroups:
        triv = Inclusion.trivial()
        verts = {f"v{v}": TrivialGroup() for v in self.vertices()}
        specs = [
            EdgeSpec(self.name(i), f"v{self.ends[i][0]}", f"v{self.ends[i][1]}", Fraction(lengths[i]), triv, triv)
            for i in self.edge_ids()
        ]
        g = GraphOfGroups(verts, specs, f"v{self.base}")
        validate(g)
        return g

    def marking(self, gog: GraphOfGroups) -> Marking:
        """The automorphism represented by this map, as a self-marking of ``gog``."""
        ids = self.edge_ids()
        vidx = {v: gog.vindex[f"v{v}"] for v in self.vertices()}
        vm = [0] * len(gog.vids)
        for v, k in vidx.items():
            vm[k] = vidx[self.vmap[v]]
        pos = {i: k for k, i in enumerate(ids)}

        def edge(oe: int) -> Word:
            i = ids[oe >> 1]
            path = self.image(2 * i + (oe & 1))
            letters = [0]
            for x in path:
                letters += [2 * pos[x >> 1] + (x & 1), 0]
            return Word(vm[gog.tail[oe]], letters)

        wm = WordMap(gog, gog, vm, lambda v, g: identity_word(gog, vm[v]), edge)
        return Marking(gog, gog, wm.marking_images())

    def copy(self) -> "TopRep":
        return TopRep(dict(self.ends), dict(self.vmap), {i: list(x) for i, x in self.images.items()},
                      self.base, dict(self.names))


def _free_reduce(path: list[int]) -> list[int]:
    out: list[int] = []
    for x in path:
        if out and out[-1] == x ^ 1:
            out.pop()
        else:
            out.append(x)
    return out


def rose_representative(T: GraphOfGroups, phi: Marking) -> tuple[TopRep, GraphOfGroups, Marking]:
    """Collapse a maximal tree and return the induced map on the rose.

    Also returns the rose (with the lengths it inherits) and the marking from
    ``T`` to it.
    """
    if not _is_free(T):
        raise NotRepresentable("train track search needs trivial vertex groups")
    R, to_rose = T, identity_marking(T)
    while True:
        R.build()
        gens = generators(R)
        tree = sorted(gens.tree_edges)
        if not tree:
            break
        R, c = collapse(R, R.edges[tree[0]].id)
        to_rose = to_rose.then(c)
    phi_R = to_rose.inverse().then(phi).then(to_rose)
    R.build()
    gens = generators(R)
    images = {}
    for i in range(len(R.edges)):
        w = reduce_word(R, phi_R.images[gens.edge_gen[i]])
        images[i] = list(w.letters[1::2])
    top = TopRep({i: (0, 0) for i in range(len(R.edges))}, {0: 0}, images, 0,
                 {i: e.id for i, e in enumerate(R.edges)})
    return top, R, to_rose


# --- Perron-Frobenius metric --------------------------------------------------------


def strongly_connected(M: np.ndarray) -> bool:
    n = len(M)
    reach = (M > 0).astype(np.int64) + np.eye(n, dtype=np.int64)
    for _ in range(n):
        reach = ((reach @ reach) > 0).astype(np.int64)
    return bool(reach.all())


@dataclass
class PFMetric:
    lam: float
    lam_exact: Fraction | None
    lengths: list[Fraction]  # covolume one; exact eigenvector when lam_exact is set
    lengths_float: list[float]
    residual: float


def pf_metric(M: np.ndarray) -> PFMetric:
    """Perron-Frobenius eigenvalue and positive eigenvector of an irreducible matrix."""
    A = M.astype(float)
    vals, vecs = np.linalg.eig(A)
    k = int(np.argmax(vals.real))
    v = np.abs(vecs[:, k].real)
    v = v / v.sum()
    # polish by power iteration on (A + I), which has the same eigenvector
    B = A + np.eye(len(A))
    for _ in range(200):
        w = B @ v
        w = w / w.sum()
        if np.max(np.abs(w - v)) < PF_TOLERANCE * 1e-2:
            v = w
            break
        v = w
    lam = float((A @ v).sum() / v.sum())
    residual = float(np.max(np.abs(A @ v - lam * v) / v))
    # exact rational eigenvector, if one is nearby
    q = [Fraction(float(x)).limit_denominator(EXACT_DENOMINATOR) for x in v]
    tot = sum(q)
    exact = None
    if all(x > 0 for x in q):
        q = [x / tot for x in q]
        Mi = [[int(x) for x in row] for row in M]
        Mq = [sum((Mi[i][j] * q[j] for j in range(len(q))), Fraction(0)) for i in range(len(q))]
        ratio = Mq[0] / q[0]
        if all(Mq[i] == ratio * q[i] for i in range(len(q))):
            exact = ratio
    if exact is None:
        q = [Fraction(float(x)).limit_denominator(APPROX_DENOMINATOR) for x in v]
        tot = sum(q)
        q = [x / tot for x in q]
    return PFMetric(float(exact) if exact is not None else lam, exact, q, [float(x) for x in v], residual)


# --- train tracks -------------------------------------------------------------------


@dataclass
class TrainTrackCheck:
    full_tension: bool
    legal_images: bool
    legal_turns_preserved: bool
    details: list[str]

    @property
    def ok(self) -> bool:
        return self.full_tension and self.legal_images and self.legal_turns_preserved

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.full_tension, self.legal_images, self.legal_turns_preserved)


def illegal_image_turns(top: TopRep) -> list[tuple[int, int, int]]:
    """(edge, direction, direction) for every illegal turn crossed by an edge image."""
    out = []
    for i in top.edge_ids():
        img = top.images[i]
        for x, y in zip(img, img[1:]):
            if not top.legal(x ^ 1, y):
                out.append((i, x ^ 1, y))
    return out


def unstable_legal_turns(top: TopRep) -> list[tuple[int, int]]:
    """Legal turns whose image turn is illegal."""
    out = []
    for v in top.vertices():
        oes = top.out_edges(v)
        for a in range(len(oes)):
            for b in range(a + 1, len(oes)):
                d1, d2 = oes[a], oes[b]
                if top.legal(d1, d2):
                    e1, e2 = top.derivative(d1), top.derivative(d2)
                    if not top.legal(e1, e2):
                        out.append((d1, d2))
    return out


def verify_combinatorics(top: TopRep, lengths: dict[int, Fraction] | None = None,
                         lam: float | None = None, residual: float = 0.0) -> TrainTrackCheck:
    """The three train track conditions.

    With exact ``lengths`` the tension condition is checked exactly. Without
    them it is read off the Perron-Frobenius data: the metric is an eigenvector,
    so all slopes agree up to ``residual``.
    """
    details = []
    if lengths is not None:
        slopes = {i: sum((lengths[x >> 1] for x in top.images[i]), Fraction(0)) / lengths[i] for i in top.edge_ids()}
        tension = len(set(slopes.values())) == 1
        if not tension:
            mx = max(slopes.values())
            loose = [top.name(i) for i in top.edge_ids() if slopes[i] != mx]
            details.append(f"edges below the maximal slope: {', '.join(loose)}")
    else:
        M = top.transition_matrix()
        tension = strongly_connected(M) and residual <= PF_TOLERANCE * max(1.0, lam or 1.0) * 100
        if not tension:
            details.append("metric is not a certified Perron-Frobenius eigenvector")
    bad = illegal_image_turns(top)
    for i, d1, d2 in bad:
        details.append(f"image of {top.name(i)} crosses illegal turn {{{top.oe_name(d1)},{top.oe_name(d2)}}}")
    unstable = unstable_legal_turns(top)
    for d1, d2 in unstable:
        details.append(f"legal turn {{{top.oe_name(d1)},{top.oe_name(d2)}}} maps to an illegal turn")
    return TrainTrackCheck(tension, not bad, not unstable, details)


@dataclass
class TrainTrackMap:
    gog: GraphOfGroups  # metric graph (exact PF metric when rational, else a close rational approximation)
    top: TopRep
    phi: Marking  # the automorphism on ``gog``
    lam: float
    lam_exact: Fraction | None
    residual: float
    matrix: np.ndarray
    lengths_float: list[float]
    from_start: Marking  # marking from the starting graph
    sigma: Fraction  # exact sigma(gog, gog phi) at the stored metric

    @property
    def error_bound(self) -> float:
        return 0.0 if self.lam_exact is not None else max(self.residual, abs(float(self.sigma) - self.lam))

    def gate_text(self) -> str:
        parts = []
        for v, gates in self.top.gates().items():
            inner = " ".join("{" + ",".join(self.top.oe_name(d) for d in g) + "}" for g in gates)
            parts.append(f"v{v}: {inner}")
        return "; ".join(parts)


def verify_train_track(tt: TrainTrackMap) -> TrainTrackCheck:
    if tt.lam_exact is not None:
        lengths = {i: tt.gog.edges[k].length for k, i in enumerate(tt.top.edge_ids())}
        return verify_combinatorics(tt.top, lengths)
    return verify_combinatorics(tt.top, None, tt.lam, tt.residual)


def verify_map(top: TopRep, lengths: dict[int, Fraction]) -> TrainTrackCheck:
    """Exact train track check of a map at a given rational metric."""
    return verify_combinatorics(top, lengths)


@dataclass
class ReductionCertificate:
    gog: GraphOfGroups
    top: TopRep
    invariant: list[str]  # edge names of the invariant subgraph S
    witness: Word  # a loop in S, read in ``gog``

    def replay(self) -> bool:
        """Edges of S map into S, and the witness is hyperbolic with its axis in S."""
        S = set(self.invariant)
        ids = {self.top.name(i): i for i in self.top.edge_ids()}
        for n in S:
            if any(self.top.name(x >> 1) not in S for x in self.top.images[ids[n]]):
                return False
        res = translation_length(self.gog, self.witness)
        if res.elliptic:
            return False
        return all(self.gog.edges[oe >> 1].id in S for oe in res.projected_axis) and len(S) < len(ids)


@dataclass
class Unknown:
    reason: str
    trace: list[dict]


def _closure(top: TopRep, i: int) -> set[int]:
    seen = {i}
    stack = [i]
    while stack:
        j = stack.pop()
        for x in top.images[j]:
            k = x >> 1
            if k not in seen:
                seen.add(k)
                stack.append(k)
    return seen


def _cycle_in(top: TopRep, S: set[int]) -> list[int] | None:
    """An embedded cycle (as oriented edges) in the subgraph spanned by S."""
    parent: dict[int, tuple[int, int] | None] = {}
    for root in sorted({v for i in S for v in top.ends[i]}):
        if root in parent:
            continue
        parent[root] = None
        stack = [root]
        while stack:
            v = stack.pop()
            for oe in top.out_edges(v):
                if (oe >> 1) not in S:
                    continue
                if parent[v] is not None and parent[v][1] == (oe ^ 1):
                    continue
                w = top.head(oe)
                if w in parent:
                    # close the cycle: path root..v, oe, back from w to root
                    def to_root(x):
                        out = []
                        while parent[x] is not None:
                            p, e = parent[x]
                            out.append(e)
                            x = p
                        return list(reversed(out))

                    pv, pw = to_root(v), to_root(w)
                    loop = _free_reduce(pv + [oe] + [x ^ 1 for x in reversed(pw)])
                    if loop:
                        return loop
                    continue
                parent[w] = (v, oe)
                stack.append(w)
    return None


def find_invariant_subgraph(top: TopRep) -> tuple[set[int], list[int]] | None:
    """A smallest proper map-invariant edge set containing a cycle, with that cycle."""
    ids = top.edge_ids()
    best = None
    for i in ids:
        S = _closure(top, i)
        if len(S) == len(ids):
            continue
        cyc = _cycle_in(top, S)
        if cyc is None:
            continue
        if best is None or len(S) < len(best[0]):
            best = (S, cyc)
    return best


def _loop_word(gog: GraphOfGroups, top: TopRep, cyc: list[int]) -> Word:
    ids = top.edge_ids()
    pos = {i: k for k, i in enumerate(ids)}
    start = gog.vindex[f"v{top.tail(cyc[0])}"]
    letters = [0]
    for x in cyc:
        letters += [2 * pos[x >> 1] + (x & 1), 0]
    w = Word(start, letters)
    gens = generators(gog)
    if start != gog.base_index:
        p = gens.tree_paths[start]
        from .words import concat, inverse

        w = concat(gog, p, w, inverse(gog, p))
    return reduce_word(gog, w)


# --- folding --------------------------------------------------------------------------


def fold_turn(top: TopRep, d1: int, d2: int, pmap: dict[int, list[int]] | None = None) -> TopRep | None:
    """Fold the illegal turn {d1, d2}: identify the initial segments mapping onto one edge.

    Returns None when the fold leaves the class of maps handled here (an edge
    would fold onto itself, an image would become trivial, or a vertex would
    become a leaf). ``pmap`` (paths of the starting graph's edges) is updated in place.
    """
    if (d1 >> 1) == (d2 >> 1) or top.derivative(d1) != top.derivative(d2):
        return None
    new = top.copy()
    c = top.derivative(d1)
    nid = max(new.ends) + 1
    nv = max(new.vertices()) + 1
    sub: dict[int, list[int]] = {}

    def split_first(d: int) -> int:
        nonlocal nid, nv
        i = d >> 1
        img = new.images[i]
        if len(img) == 1:
            return d
        t, h = new.ends[i]
        n, j = nv, nid
        nv += 1
        nid += 1
        new.vmap[n] = top.head(c)
        if d % 2 == 0:
            new.ends[i], new.ends[j] = (t, n), (n, h)
            new.images[i], new.images[j] = [img[0]], img[1:]
            piece = 2 * i
        else:
            new.ends[i], new.ends[j] = (t, n), (n, h)
            new.images[i], new.images[j] = img[:-1], [img[-1]]
            piece = 2 * j + 1
        new.names[j] = new.name(i) + "'"
        sub[2 * i] = [2 * i, 2 * j]
        sub[2 * i + 1] = [2 * j + 1, 2 * i + 1]
        return piece

    q1, q2 = split_first(d1), split_first(d2)
    w1, w2 = new.head(q1), new.head(q2)
    if w1 == w2 or new.vmap[w1] != new.vmap[w2]:
        return None
    r = q2 >> 1
    del new.ends[r]
    del new.images[r]
    new.names.pop(r, None)
    merge = {w2: w1}
    new.ends = {i: (merge.get(a, a), merge.get(b, b)) for i, (a, b) in new.ends.items()}
    new.vmap = {v: merge.get(x, x) for v, x in new.vmap.items() if v != w2}
    if new.base == w2:
        new.base = w1
    ident = {q2: [q1], q2 ^ 1: [q1 ^ 1]}

    def push(path: list[int]) -> list[int]:
        out = []
        for x in path:
            for y in sub.get(x, [x]):
                out.extend(ident.get(y, [y]))
        return _free_reduce(out)

    for i in list(new.images):
        new.images[i] = push(new.images[i])
        if not new.images[i]:
            return None
    val: dict[int, int] = {}
    for a, b in new.ends.values():
        val[a] = val.get(a, 0) + 1
        val[b] = val.get(b, 0) + 1
    if any(x < 2 for x in val.values()):
        return None
    if pmap is not None:
        for k in list(pmap):
            pmap[k] = push(pmap[k])
    return new


def _image_size(top: TopRep) -> int:
    return sum(len(x) for x in top.images.values())


def _candidate_turns(top: TopRep) -> list[tuple[int, int]]:
    out = []
    for _, d1, d2 in illegal_image_turns(top):
        out.append((d1, d2))
    for a, b in unstable_legal_turns(top):
        out.append((top.derivative(a), top.derivative(b)))
    seen, uniq = set(), []
    for d1, d2 in out:
        key = (min(d1, d2), max(d1, d2))
        if key not in seen:
            seen.add(key)
            uniq.append(key)
    return uniq


def _best_fold(top: TopRep, lam: float, pmap: dict[int, list[int]]):
    """The fold with the smallest (lambda, gate excess, image length), if it beats the current map.

    A fold producing an invariant subgraph is taken at once.
    """
    tol = PF_TOLERANCE * max(1.0, lam) * 100
    here = (top.gate_excess(), _image_size(top))
    best = None
    for d1, d2 in _candidate_turns(top):
        trial = dict(pmap)
        nxt = fold_turn(top, d1, d2, trial)
        if nxt is None:
            continue
        if find_invariant_subgraph(nxt) is not None:
            return (d1, d2), nxt, trial
        lam2 = pf_metric(nxt.transition_matrix()).lam
        if lam2 > lam + tol:
            continue
        key = (0 if lam2 < lam - tol else 1, lam2, nxt.gate_excess(), _image_size(nxt))
        if key[0] == 1 and (key[2], key[3]) >= here:
            continue
        if best is None or key < best[0]:
            best = (key, (d1, d2), nxt, trial)
    return None if best is None else best[1:]


def _tighten_rose(top: TopRep) -> TopRep:
    """Post-compose a rose map with inner automorphisms while that shortens the images."""
    if len(top.vertices()) != 1:
        return top
    cur = top
    while True:
        size = _image_size(cur)
        better = None
        for x in [2 * i + s for i in cur.edge_ids() for s in (0, 1)]:
            trial = cur.copy()
            for i in trial.edge_ids():
                trial.images[i] = _free_reduce([x ^ 1] + trial.images[i] + [x])
            if all(trial.images.values()) and _image_size(trial) < size:
                if better is None or _image_size(trial) < _image_size(better):
                    better = trial
        if better is None:
            return cur
        cur = better


# --- search ----------------------------------------------------------------------------


def _tt_from(top: TopRep, pf: PFMetric, start: GraphOfGroups, pmap: dict[int, list[int]],
             start_top: TopRep) -> TrainTrackMap:
    ids = top.edge_ids()
    lengths = {i: pf.lengths[k] for k, i in enumerate(ids)}
    gog = top.gog(lengths)
    phi = top.marking(gog)
    twin, mk = twist(gog, phi)
    sig = distance(gog, twin, mk, cross_check=False).sigma
    from_start = _start_marking(start, start_top, top, gog, pmap)
    return TrainTrackMap(gog, top, phi, pf.lam, pf.lam_exact, pf.residual, top.transition_matrix(),
                         pf.lengths_float, from_start, sig)


def _start_marking(start: GraphOfGroups, start_top: TopRep, top: TopRep, gog: GraphOfGroups,
                   pmap: dict[int, list[int]]) -> Marking:
    ids = top.edge_ids()
    pos = {i: k for k, i in enumerate(ids)}
    sid = start_top.edge_ids()
    vm = [gog.vindex[f"v{top.base}"]] * len(start.vids)

    def edge(oe: int) -> Word:
        i = sid[oe >> 1]
        path = pmap[i] if oe % 2 == 0 else [x ^ 1 for x in reversed(pmap[i])]
        letters = [0]
        for x in path:
            letters += [2 * pos[x >> 1] + (x & 1), 0]
        return Word(vm[0], letters)

    wm = WordMap(start, gog, vm, lambda v, g: identity_word(gog, vm[v]), edge)
    return Marking(start, gog, wm.marking_images())


def find_train_track(T: GraphOfGroups, phi: Marking, budget: int | None = None,
                     trace: list | None = None):
    """Train track map, reduction certificate or Unknown for ``phi`` acting on ``T``'s free splitting."""
    top, R, to_rose = rose_representative(T, phi)
    top = _tighten_rose(top)
    if budget is None:
        budget = 10 * len(R.edges) ** 2
    trace = trace if trace is not None else []
    start_top = top.copy()
    pmap = {i: [2 * i] for i in top.edge_ids()}
    for it in range(budget):
        red = find_invariant_subgraph(top)
        if red is not None:
            S, cyc = red
            lengths = {i: Fraction(1, len(top.ends)) for i in top.edge_ids()}
            gog = top.gog(lengths)
            cert = ReductionCertificate(gog, top, sorted(top.name(i) for i in S), _loop_word(gog, top, cyc))
            trace.append({"iteration": it, "event": "reduction", "invariant": ",".join(cert.invariant)})
            return cert
        M = top.transition_matrix()
        pf = pf_metric(M)
        chk = verify_combinatorics(top, None, pf.lam, pf.residual)
        rec = {
            "iteration": it,
            "lambda": f"{pf.lam:.12f}",
            "sigma": str(pf.lam_exact) if pf.lam_exact is not None else f"{pf.lam:.12f}",
            "delta": len(top.ends),
            "excess": top.gate_excess(),
        }
        if chk.ok:
            rec["event"] = "train-track"
            trace.append(rec)
            return _tt_from(top, pf, R, pmap, start_top)
        choice = _best_fold(top, pf.lam, pmap)
        if choice is None:
            rec["event"] = "stuck"
            trace.append(rec)
            return Unknown("no fold lowers the stretch factor, gate excess or image length", trace)
        (d1, d2), nxt, pmap = choice
        rec["event"] = f"fold {{{top.oe_name(d1)},{top.oe_name(d2)}}}"
        top = nxt
        trace.append(rec)
    trace.append({"iteration": budget, "event": "budget"})
    return Unknown("iteration budget exhausted", trace)


# --- spot checks --------------------------------------------------------------------


@dataclass
class SpotCheck:
    sigma: Fraction
    powers: dict[int, Fraction]
    power_law: bool
    trials: int
    minimal: bool
    worst_gap: float  # min over trials of log sigma(T') - log sigma(T)


def minimality_spotcheck(tt: TrainTrackMap, k: int = 3, trials: int = 50, seed: int = 0) -> SpotCheck:
    """Power law at the train track metric and minimality against random points."""
    gog, phi = tt.gog, tt.phi
    sig = tt.sigma
    powers = {}
    ok = True
    for j in range(2, k + 1):
        twin, mk = twist(gog, power_marking(phi, j))
        s = distance(gog, twin, mk, cross_check=False).sigma
        powers[j] = s
        if tt.lam_exact is not None:
            ok &= s == sig**j
        else:
            ok &= abs(float(s) - float(sig) ** j) <= POWER_TOLERANCE * max(1.0, float(sig) ** j)
    rng = random.Random(seed)
    minimal = True
    gap = math.inf
    for _ in range(trials):
        T2 = random_lengths(gog, rng)
        phi2 = Marking(T2, T2, phi.images)
        twin, mk = twist(T2, phi2)
        s2 = distance(T2, twin, mk, cross_check=False).sigma
        g = math.log(s2) - math.log(sig)
        gap = min(gap, g)
        if g < -POWER_TOLERANCE:
            minimal = False
    return SpotCheck(sig, powers, ok, trials, minimal, gap)


# --- thin part -----------------------------------------------------------------------


def _core_edges(gog: GraphOfGroups, edges: set[int]) -> set[int]:
    edges = set(edges)
    while True:
        val: dict[int, int] = {}
        for i in edges:
            for v in (gog.tail[2 * i], gog.head[2 * i]):
                val[v] = val.get(v, 0) + 1
        leaf = [i for i in edges if val[gog.tail[2 * i]] == 1 or val[gog.head[2 * i]] == 1]
        if not leaf:
            return edges
        edges -= set(leaf)


def thin_core(T: GraphOfGroups, eps: Fraction, budget: int = 2) -> frozenset[str]:
    """Core of the union of projected axes of candidate loops of length at most ``eps``."""
    T.build()
    edges: set[int] = set()
    for w in enumerate_candidates(T, budget).words():
        res = translation_length(T, w)
        if not res.elliptic and res.translation_length <= eps:
            edges |= {oe >> 1 for oe in res.projected_axis}
    return frozenset(T.edges[i].id for i in _core_edges(T, edges))


# --- rebalancing ------------------------------------------------------------------------


def rebalance_step(T: GraphOfGroups, phi: Marking, max_halvings: int = 40) -> GraphOfGroups:
    """Scale the tension forest up and the rest down at covolume one.

    The step starts at half the room left for the shrinking edges and is
    halved until sigma drops or the tension forest grows; T is returned
    unchanged when the tension forest is everything.
    """
    twin, mk = twist(T, phi)
    res = distance(T, twin, mk, cross_check=False)
    f = res.optimal
    delta = f.tension_forest()
    n = len(T.edges)
    if len(delta) == n:
        return T
    lD = sum((T.edges[i].length for i in delta), Fraction(0))
    lR = T.covolume() - lD
    t = lR / lD / 2
    for _ in range(max_halvings):
        u = t * lD / lR
        L = [e.length * ((1 + t) if i in delta else (1 - u)) for i, e in enumerate(T.edges)]
        T2 = T.with_lengths(L)
        T2.build()
        phi2 = Marking(T2, T2, phi.images, phi.backward)
        twin2, mk2 = twist(T2, phi2)
        r2 = distance(T2, twin2, mk2, cross_check=False)
        if r2.sigma < res.sigma or len(r2.optimal.tension_forest()) > len(delta):
            return T2
        t /= 2
    return T


# --- classification -------------------------------------------------------------------------


@dataclass
class DisplacementReport:
    classification: str  # Elliptic, Hyperbolic, ParabolicSuspected or Unknown
    best_point: GraphOfGroups
    best_sigma: Fraction
    evidence: dict
    trace: list[dict]


def classify(T: GraphOfGroups, phi: Marking, budget: int | None = None, seed: int = 0) -> DisplacementReport:
    trace: list[dict] = []
    sig, xi = displacement(T, phi)
    trace.append({"iteration": 0, "sigma": str(sig), "event": "start"})
    evidence: dict = {"witness": format_word(T, xi)}
    if sig == 1:
        evidence.update(_isometry_evidence(T, phi))
        return DisplacementReport("Elliptic", T, sig, evidence, trace)
    if not _is_free(T):
        rng = random.Random(seed)
        best, best_T = sig, T
        for k in range(budget or 20):
            T2 = random_lengths(T, rng)
            s2, _ = displacement(T2, Marking(T2, T2, phi.images, phi.backward))
            trace.append({"iteration": k + 1, "sigma": str(s2), "event": "sample"})
            if s2 < best:
                best, best_T = s2, T2
            if s2 == 1:
                evidence.update(_isometry_evidence(T2, Marking(T2, T2, phi.images, phi.backward)))
                return DisplacementReport("Elliptic", T2, s2, evidence, trace)
        return DisplacementReport("Unknown", best_T, best, evidence, trace)
    out = find_train_track(T, phi, budget, trace)
    if isinstance(out, TrainTrackMap):
        evidence["lambda"] = out.lam
        evidence["train_track"] = verify_train_track(out).as_tuple()
        if out.lam_exact == 1 and out.sigma == 1:
            return DisplacementReport("Elliptic", out.gog, out.sigma, evidence, trace)
        return DisplacementReport("Hyperbolic", out.gog, out.sigma, evidence, trace)
    if isinstance(out, ReductionCertificate):
        evidence["reduction"] = out
        evidence["replays"] = out.replay()
        sweep = _thin_sweep(out)
        evidence["sweep"] = sweep
        sigmas = [s for _, s, _ in sweep]
        decreasing = all(b < a for a, b in zip(sigmas, sigmas[1:]))
        in_core = all(core and core <= set(out.invariant) for _, _, core in sweep)
        best = min(sigmas)
        if best == 1:
            return DisplacementReport("Elliptic", out.gog, best, evidence, trace)
        label = "ParabolicSuspected" if decreasing and in_core else "Unknown"
        return DisplacementReport(label, out.gog, best, evidence, trace)
    return DisplacementReport("Unknown", T, sig, evidence, out.trace)


def _isometry_evidence(T: GraphOfGroups, phi: Marking) -> dict:
    twin, mk = twist(T, phi)
    rep = detect_non_isometry(mk, enumerate_candidates(T, 2).words())
    return {"fixed_point": not rep.fires}


def _thin_sweep(cert: ReductionCertificate, steps: int = 5) -> list[tuple[Fraction, Fraction, frozenset]]:
    """Shrink the invariant subgraph geometrically and watch sigma and the thin core."""
    gog, top = cert.gog, cert.top
    S = set(cert.invariant)
    phi = top.marking(gog)
    out = []
    for k in range(1, steps + 1):
        eps = Fraction(1, 2**k)
        L = [e.length * (eps if e.id in S else 1) for e in gog.edges]
        T2 = gog.with_lengths(L)
        T2 = T2.scaled(1 / T2.covolume())
        T2.build()
        s, _ = displacement(T2, Marking(T2, T2, phi.images))
        shortest = min(e.length for e in T2.edges if e.id in S)
        core = thin_core(T2, shortest * len(S))
        out.append((eps, s, core))
    return out
