"""Metric graphs of groups: data model, text format, validation, normalization.

Oriented edges are encoded as ints: ``2*i`` is edge ``i`` in its stored
direction, ``2*i + 1`` the reverse. For an oriented edge ``oe`` the *near*
inclusion lands in the group at ``tail(oe)`` and the *far* inclusion in the
group at ``head(oe)``. The defining relation of the fundamental group is

    oe . far(c) . rev(oe) = near(c)

so that for the loop ``t`` with ``inc_src=index=6 inc_dst=index=1`` one gets
``t^-1 x^6 t = x``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import (
    DisconnectedGraph,
    NonGroupTable,
    NonInjectiveInclusion,
    NonpositiveLength,
    ParseError,
    ValidationError,
)
from .groups import CyclicGroup, FiniteGroup, TrivialGroup, VertexGroup


def rev(oe: int) -> int:
    return oe ^ 1


def parse_rational(text: str, line: int | None = None) -> Fraction:
    m = re.fullmatch(r"\s*([+-]?\d+)(?:\s*/\s*(\d+))?\s*", text)
    if not m:
        raise ParseError(f"malformed rational {text!r}", line)
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise ParseError(f"zero denominator in {text!r}", line)
    return Fraction(num, den)


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Inclusion:
    """Edge group -> vertex group inclusion: ``trivial``, ``index=n`` or ``map=c:g,...``."""

    kind: str
    index: int = 0
    mapping: tuple[tuple[int, int], ...] = ()

    @staticmethod
    def trivial() -> "Inclusion":
        return Inclusion("trivial")

    @staticmethod
    def cyclic(n: int) -> "Inclusion":
        return Inclusion("index", index=int(n))

    @staticmethod
    def finite(mapping: Mapping[int, int]) -> "Inclusion":
        return Inclusion("map", mapping=tuple(sorted((int(k), int(v)) for k, v in mapping.items())))

    def as_dict(self) -> dict[int, int]:
        return dict(self.mapping)

    def to_text(self) -> str:
        if self.kind == "trivial":
            return "trivial"
        if self.kind == "index":
            return f"index={self.index}"
        return "map=" + ",".join(f"{k}:{v}" for k, v in self.mapping)

    @staticmethod
    def from_text(text: str, line: int | None = None) -> "Inclusion":
        if text == "trivial":
            return Inclusion.trivial()
        if text.startswith("index="):
            try:
                return Inclusion.cyclic(int(text[6:]))
            except ValueError:
                raise ParseError(f"bad index {text!r}", line) from None
        if text.startswith("map="):
            body = text[4:]
            out = {}
            for part in filter(None, body.split(",")):
                try:
                    k, v = part.split(":")
                    out[int(k)] = int(v)
                except ValueError:
                    raise ParseError(f"bad map entry {part!r}", line) from None
            return Inclusion.finite(out)
        raise ParseError(f"unknown inclusion spec {text!r}", line)


@dataclass(frozen=True)
class EdgeSpec:
    id: str
    src: str
    dst: str
    length: Fraction
    inc_src: Inclusion
    inc_dst: Inclusion


def group_to_text(g: VertexGroup) -> str:
    if isinstance(g, TrivialGroup):
        return "trivial"
    if isinstance(g, CyclicGroup):
        return "cyclic" if g.symbol == "x" else f"cyclic gen={g.symbol}"
    flat = ",".join(str(x) for row in g.table for x in row)
    return f"finite n={g.n} table={flat}"


class GraphOfGroups:
    """Finite metric graph of groups with a base vertex.

    Construction does not validate; call :func:`validate` (or use
    :meth:`from_text`, which does) before computing with it.
    """

    def __init__(self, vertices: Mapping[str, VertexGroup], edges: Sequence[EdgeSpec], base: str):
        self.vertices: dict[str, VertexGroup] = dict(vertices)
        self.edges: tuple[EdgeSpec, ...] = tuple(edges)
        self.base = base
        self._built = False

    # construction helpers ---------------------------------------------------
    def with_lengths(self, lengths: Mapping[str, Fraction] | Sequence[Fraction]) -> "GraphOfGroups":
        if isinstance(lengths, Mapping):
            edges = [replace(e, length=Fraction(lengths.get(e.id, e.length))) for e in self.edges]
        else:
            edges = [replace(e, length=Fraction(l)) for e, l in zip(self.edges, lengths)]
        return GraphOfGroups(self.vertices, edges, self.base)

    def scaled(self, factor: Fraction) -> "GraphOfGroups":
        return self.with_lengths([e.length * factor for e in self.edges])

    def with_base(self, base: str) -> "GraphOfGroups":
        return GraphOfGroups(self.vertices, self.edges, base)

    # indexing -----------------------------------------------------------------
    def build(self) -> "GraphOfGroups":
        if self._built:
            return self
        self.vids = list(self.vertices)
        self.vindex = {v: i for i, v in enumerate(self.vids)}
        self.groups = [self.vertices[v] for v in self.vids]
        self.eindex = {e.id: i for i, e in enumerate(self.edges)}
        n = len(self.edges)
        self.tail = [0] * (2 * n)
        self.head = [0] * (2 * n)
        self.near_sub = [None] * (2 * n)
        self.far_sub = [None] * (2 * n)
        self._near_map: list = [None] * (2 * n)
        self._far_inv: list = [None] * (2 * n)
        self.edge_kind = [""] * n
        for i, e in enumerate(self.edges):
            s, d = self.vindex[e.src], self.vindex[e.dst]
            self.tail[2 * i], self.head[2 * i] = s, d
            self.tail[2 * i + 1], self.head[2 * i + 1] = d, s
            self._build_edge(i, e)
        self.base_index = self.vindex[self.base]
        self.out_edges = [[] for _ in self.vids]
        for oe in range(2 * n):
            self.out_edges[self.tail[oe]].append(oe)
        self._built = True
        return self

    def _build_edge(self, i: int, e: EdgeSpec):
        gs, gd = self.vertices[e.src], self.vertices[e.dst]
        a, b = e.inc_src, e.inc_dst
        if a.kind == "index" or b.kind == "index":
            if a.kind != "index" or b.kind != "index":
                raise ValidationError(f"edge {e.id}: cyclic index inclusion must be used on both ends")
            if not isinstance(gs, CyclicGroup) or not isinstance(gd, CyclicGroup):
                raise ValidationError(f"edge {e.id}: index inclusion into a non-cyclic vertex group")
            if a.index == 0 or b.index == 0:
                raise NonInjectiveInclusion(f"edge {e.id}: index 0 is not injective")
            self.edge_kind[i] = "cyclic"
            for oe, near, far in ((2 * i, a.index, b.index), (2 * i + 1, b.index, a.index)):
                self.near_sub[oe] = abs(near)
                self.far_sub[oe] = abs(far)
                self._near_map[oe] = near
                self._far_inv[oe] = far
            return
        ma = self._finite_map(e, a, gs)
        mb = self._finite_map(e, b, gd)
        if set(ma) != set(mb):
            raise ValidationError(f"edge {e.id}: inclusions have different edge-group domains")
        self._check_hom(e, ma, mb, gs, gd)
        self.edge_kind[i] = "trivial" if len(ma) == 1 else "finite"
        for oe, near, far in ((2 * i, ma, mb), (2 * i + 1, mb, ma)):
            gnear = gs if oe % 2 == 0 else gd
            gfar = gd if oe % 2 == 0 else gs
            self.near_sub[oe] = frozenset(near.values()) if not isinstance(gnear, CyclicGroup) else 0
            self.far_sub[oe] = frozenset(far.values()) if not isinstance(gfar, CyclicGroup) else 0
            self._near_map[oe] = near
            self._far_inv[oe] = {v: k for k, v in far.items()}

    def _finite_map(self, e: EdgeSpec, inc: Inclusion, g: VertexGroup) -> dict[int, int]:
        if inc.kind == "trivial":
            return {0: g.identity}
        if isinstance(g, CyclicGroup) or isinstance(g, TrivialGroup):
            raise ValidationError(f"edge {e.id}: map inclusion into a {g.kind} vertex group")
        m = inc.as_dict()
        if len(set(m.values())) != len(m):
            raise NonInjectiveInclusion(f"edge {e.id}: inclusion map is not injective")
        for v in m.values():
            if not 0 <= v < g.n:
                raise ValidationError(f"edge {e.id}: inclusion target {v} not in vertex group")
        return m

    def _check_hom(self, e, ma, mb, gs, gd):
        inv_a = {v: k for k, v in ma.items()}
        img = set(ma.values())
        for x in img:
            for y in img:
                if gs.mul(x, y) not in img:
                    raise ValidationError(f"edge {e.id}: inclusion image is not a subgroup")
        for c1, x in ma.items():
            for c2, y in ma.items():
                c = inv_a[gs.mul(x, y)]
                if mb[c] != gd.mul(mb[c1], mb[c2]):
                    raise ValidationError(f"edge {e.id}: inclusions disagree on the edge group structure")

    # group-theoretic primitives ----------------------------------------------
    def cross(self, oe: int, g: int):
        """If ``g`` (at head) lies in the far image, return its partner at the tail."""
        i = oe >> 1
        kind = self.edge_kind[i]
        if kind == "cyclic":
            far = self._far_inv[oe]
            if g % far:
                return None
            return (g // far) * self._near_map[oe]
        c = self._far_inv[oe].get(g)
        if c is None:
            return None
        return self._near_map[oe][c]

    def push(self, oe: int, g: int):
        """Partner at the head of an element ``g`` of the near image (``g oe = oe push(g)``)."""
        return self.cross(oe ^ 1, g)

    def length(self, oe: int) -> Fraction:
        return self.edges[oe >> 1].length

    def edge_name(self, oe: int) -> str:
        name = self.edges[oe >> 1].id
        return name if oe % 2 == 0 else name + "^-1"

    def oe_of(self, name: str) -> int:
        self.build()
        if name.endswith("^-1"):
            return 2 * self.eindex[name[:-3]] + 1
        return 2 * self.eindex[name]

    def group(self, v: int) -> VertexGroup:
        return self.groups[v]

    def near_index(self, oe: int) -> int | None:
        """[G_tail : near image]; None when infinite."""
        g = self.groups[self.tail[oe]]
        sub = self.near_sub[oe]
        if isinstance(g, CyclicGroup):
            return None if sub == 0 else sub
        return g.index(sub)

    def tree_valence(self, v: int) -> int | None:
        """Valence of a lift of vertex ``v`` in the Bass-Serre tree (None when infinite)."""
        total = 0
        for oe in self.out_edges[v]:
            k = self.near_index(oe)
            if k is None:
                return None
            total += k
        return total

    def covolume(self) -> Fraction:
        return sum((e.length for e in self.edges), Fraction(0))

    def regime(self) -> str:
        kinds = {g.kind for g in self.vertices.values()}
        if "cyclic" in kinds:
            return "cyclic"
        if "finite" in kinds:
            return "finite"
        return "trivial"

    # text format ----------------------------------------------------------------
    def to_text(self) -> str:
        lines = ["[vertices]"]
        for v, g in self.vertices.items():
            lines.append(f"{v} {group_to_text(g)}")
        lines.append("[edges]")
        for e in self.edges:
            lines.append(
                f"{e.id} {e.src} {e.dst} len={format_rational(e.length)} "
                f"inc_src={e.inc_src.to_text()} inc_dst={e.inc_dst.to_text()}"
            )
        lines.append("[base]")
        lines.append(self.base)
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str, validate_graph: bool = True) -> "GraphOfGroups":
        gog = parse_gog(text)
        if validate_graph:
            validate(gog)
        return gog

    def __eq__(self, other):
        return (
            isinstance(other, GraphOfGroups)
            and self.vertices == other.vertices
            and self.edges == other.edges
            and self.base == other.base
        )

    def __hash__(self):
        return hash((tuple(self.vertices), self.edges, self.base))

    def __repr__(self):
        return f"GraphOfGroups({len(self.vertices)} vertices, {len(self.edges)} edges, base={self.base})"


_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.']*")


def parse_gog(text: str) -> GraphOfGroups:
    section = None
    vertices: dict[str, VertexGroup] = {}
    edges: list[EdgeSpec] = []
    base = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]\s*(.*)", line)
        if m:
            section = m.group(1)
            if section not in ("vertices", "edges", "base"):
                raise ParseError(f"unknown section [{section}]", lineno)
            rest = m.group(2).strip()
            if section == "base" and rest:
                base = rest
            elif rest:
                raise ParseError("unexpected text after section header", lineno)
            continue
        if section is None:
            raise ParseError("content before any section header", lineno)
        parts = line.split()
        if section == "vertices":
            vid = parts[0]
            if not _NAME.fullmatch(vid):
                raise ParseError(f"bad vertex id {vid!r}", lineno)
            if vid in vertices:
                raise ParseError(f"duplicate vertex {vid!r}", lineno)
            vertices[vid] = _parse_group(parts[1:], lineno)
        elif section == "edges":
            if len(parts) != 6:
                raise ParseError("edge line needs: id src dst len=.. inc_src=.. inc_dst=..", lineno)
            eid, src, dst = parts[0], parts[1], parts[2]
            if not _NAME.fullmatch(eid):
                raise ParseError(f"bad edge id {eid!r}", lineno)
            kv = {}
            for p in parts[3:]:
                if "=" not in p:
                    raise ParseError(f"expected key=value, got {p!r}", lineno)
                k, v = p.split("=", 1)
                kv[k] = v
            if set(kv) != {"len", "inc_src", "inc_dst"}:
                raise ParseError("edge needs len, inc_src, inc_dst", lineno)
            for vv in (src, dst):
                if vv not in vertices:
                    raise ParseError(f"unknown vertex {vv!r}", lineno)
            if any(e.id == eid for e in edges) or eid in vertices:
                raise ParseError(f"duplicate id {eid!r}", lineno)
            edges.append(
                EdgeSpec(
                    eid,
                    src,
                    dst,
                    parse_rational(kv["len"], lineno),
                    Inclusion.from_text(kv["inc_src"], lineno),
                    Inclusion.from_text(kv["inc_dst"], lineno),
                )
            )
        else:
            if base is not None:
                raise ParseError("base given twice", lineno)
            base = parts[0]
    if base is None:
        raise ParseError("missing [base] section")
    if base not in vertices:
        raise ParseError(f"base vertex {base!r} is not declared")
    return GraphOfGroups(vertices, edges, base)


def _parse_group(parts: list[str], lineno: int) -> VertexGroup:
    if not parts:
        raise ParseError("missing vertex group kind", lineno)
    kind = parts[0]
    opts = {}
    for p in parts[1:]:
        if "=" not in p:
            raise ParseError(f"expected key=value, got {p!r}", lineno)
        k, v = p.split("=", 1)
        opts[k] = v
    if kind == "trivial":
        return TrivialGroup()
    if kind == "cyclic":
        sym = opts.get("gen", "x")
        if not re.fullmatch(r"[A-Za-z]\w*", sym):
            raise ParseError(f"bad generator symbol {sym!r}", lineno)
        return CyclicGroup(sym)
    if kind == "finite":
        try:
            n = int(opts["n"])
            flat = [int(x) for x in opts["table"].replace(";", ",").split(",") if x]
        except (KeyError, ValueError):
            raise ParseError("finite group needs n=<order> table=<ids>", lineno) from None
        if len(flat) != n * n:
            raise ParseError(f"table has {len(flat)} entries, expected {n * n}", lineno)
        try:
            return FiniteGroup([flat[i * n:(i + 1) * n] for i in range(n)])
        except NonGroupTable as exc:
            raise NonGroupTable(f"line {lineno}: {exc}") from None
    raise ParseError(f"unknown vertex group kind {kind!r}", lineno)


def validate(gog: GraphOfGroups) -> None:
    """Raise the first violated invariant, else return None."""
    if not gog.vertices:
        raise DisconnectedGraph("graph has no vertices")
    if gog.base not in gog.vertices:
        raise ValidationError(f"base vertex {gog.base!r} missing")
    for e in gog.edges:
        if e.src not in gog.vertices or e.dst not in gog.vertices:
            raise ValidationError(f"edge {e.id} refers to an unknown vertex")
        if e.length <= 0:
            raise NonpositiveLength(f"edge {e.id} has nonpositive length {format_rational(e.length)}")
    gog._built = False
    gog.build()
    seen = {gog.base_index}
    stack = [gog.base_index]
    while stack:
        v = stack.pop()
        for oe in gog.out_edges[v]:
            w = gog.head[oe]
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != len(gog.vids):
        missing = sorted(gog.vids[i] for i in range(len(gog.vids)) if i not in seen)
        raise DisconnectedGraph(f"vertices not reachable from base: {', '.join(missing)}")


def is_bijective_end(gog: GraphOfGroups, oe: int) -> bool:
    """Whether the near inclusion of ``oe`` is onto the tail vertex group."""
    g = gog.groups[gog.tail[oe]]
    sub = gog.near_sub[oe]
    if isinstance(g, CyclicGroup):
        return sub == 1
    return len(sub) == g.order


def redundant_vertices(gog: GraphOfGroups) -> list[str]:
    gog.build()
    out = []
    for v, name in enumerate(gog.vids):
        oes = gog.out_edges[v]
        if len(oes) != 2 or (oes[0] >> 1) == (oes[1] >> 1):
            continue
        if all(is_bijective_end(gog, oe) for oe in oes):
            out.append(name)
    return out


def _compose_through(gog: GraphOfGroups, e_in: int, e_out: int) -> Inclusion:
    """Inclusion at head(e_out) of the edge obtained by merging e_in . e_out at a redundant vertex."""
    i_in = e_in >> 1
    if gog.edge_kind[i_in] == "cyclic":
        s1 = gog._far_inv[e_in]  # generator of E_in -> x_v^{s1}
        s2 = gog._near_map[e_out]  # generator of E_out -> x_v^{s2}
        q = gog._far_inv[e_out]  # generator of E_out -> x_b^{q}
        return Inclusion.cyclic(q * s1 * s2)
    far_in = {c: g for g, c in gog._far_inv[e_in].items()}  # E_in id -> element at v
    near_out_inv = {g: c for c, g in gog._near_map[e_out].items()}
    far_out = {c: g for g, c in gog._far_inv[e_out].items()}
    if len(far_in) == 1:
        return Inclusion.trivial()
    return Inclusion.finite({c: far_out[near_out_inv[g]] for c, g in far_in.items()})


def _near_inclusion(gog: GraphOfGroups, oe: int) -> Inclusion:
    e = gog.edges[oe >> 1]
    return e.inc_src if oe % 2 == 0 else e.inc_dst


def merge_redundant(gog: GraphOfGroups, vertex: str) -> GraphOfGroups:
    """Remove one redundant valence-2 vertex, summing the two edge lengths."""
    gog.build()
    v = gog.vindex[vertex]
    a_out, b_out = gog.out_edges[v]
    e_in = a_out ^ 1  # arrives at v
    e_out = b_out
    first = gog.edges[e_in >> 1]
    second = gog.edges[e_out >> 1]
    src = gog.vids[gog.tail[e_in]]
    dst = gog.vids[gog.head[e_out]]
    new_edge = EdgeSpec(
        first.id,
        src,
        dst,
        first.length + second.length,
        _near_inclusion(gog, e_in),
        _compose_through(gog, e_in, e_out),
    )
    edges = []
    for e in gog.edges:
        if e.id == first.id:
            edges.append(new_edge)
        elif e.id != second.id:
            edges.append(e)
    vertices = {k: g for k, g in gog.vertices.items() if k != vertex}
    base = gog.base if gog.base != vertex else src
    return GraphOfGroups(vertices, edges, base)


def normalize(gog: GraphOfGroups) -> GraphOfGroups:
    """Merge redundant valence-2 vertices until none remain."""
    cur = gog
    while True:
        red = redundant_vertices(cur)
        if not red:
            return cur
        cur = merge_redundant(cur, red[0])
        cur.build()


def subdivide(gog: GraphOfGroups, edge: str, at: Fraction, vertex: str | None = None,
              new_edge: str | None = None) -> GraphOfGroups:
    """Insert a redundant vertex on ``edge`` at distance ``at`` from its source."""
    gog.build()
    i = gog.eindex[edge]
    e = gog.edges[i]
    if not 0 < at < e.length:
        raise ValueError("subdivision point must be interior")
    vertex = vertex or _fresh(gog.vertices, f"{edge}_m")
    new_edge = new_edge or _fresh({x.id for x in gog.edges} | set(gog.vertices) | {vertex}, f"{edge}_2")
    oe = 2 * i
    if gog.edge_kind[i] == "cyclic":
        mid = CyclicGroup()
        inc_mid_a, inc_mid_b = Inclusion.cyclic(1), Inclusion.cyclic(1)
    elif gog.edge_kind[i] == "trivial":
        mid = TrivialGroup()
        inc_mid_a = inc_mid_b = Inclusion.trivial()
    else:
        gs = gog.groups[gog.tail[oe]]
        from .groups import finite_from_subgroup

        sub = gog.near_sub[oe]
        mid, relabel = finite_from_subgroup(gs, sub)
        near = gog._near_map[oe]
        inc_mid_a = Inclusion.finite({c: relabel[g] for c, g in near.items()})
        inc_mid_b = inc_mid_a
    first = EdgeSpec(e.id, e.src, vertex, at, e.inc_src, inc_mid_a)
    second = EdgeSpec(new_edge, vertex, e.dst, e.length - at, inc_mid_b, e.inc_dst)
    edges = []
    for x in gog.edges:
        if x.id == e.id:
            edges.extend([first, second])
        else:
            edges.append(x)
    vertices = dict(gog.vertices)
    vertices[vertex] = mid
    return GraphOfGroups(vertices, edges, gog.base)


def _fresh(taken: Iterable[str], stem: str) -> str:
    taken = set(taken)
    if stem not in taken:
        return stem
    k = 1
    while f"{stem}{k}" in taken:
        k += 1
    return f"{stem}{k}"


def fresh_name(gog: GraphOfGroups, stem: str) -> str:
    return _fresh(set(gog.vertices) | {e.id for e in gog.edges}, stem)


def valence_profile(gog: GraphOfGroups) -> list:
    """Sorted Bass-Serre tree valences of vertex orbits (None = infinite)."""
    gog.build()
    vals = [gog.tree_valence(v) for v in range(len(gog.vids))]
    return sorted(vals, key=lambda x: (x is None, x or 0))


def labeled_isomorphic(g1: GraphOfGroups, g2: GraphOfGroups) -> bool:
    """Isomorphism of underlying graphs preserving group kinds/orders, lengths and inclusion indices."""
    import networkx as nx
    from networkx.algorithms.isomorphism import MultiGraphMatcher

    def to_nx(g: GraphOfGroups):
        g.build()
        G = nx.MultiGraph()
        for v, name in enumerate(g.vids):
            grp = g.groups[v]
            G.add_node(name, label=(grp.kind, grp.order))
        for i, e in enumerate(g.edges):
            idx = (g.near_index(2 * i), g.near_index(2 * i + 1))
            G.add_edge(e.src, e.dst, label=(e.length, tuple(sorted(idx, key=str))), ends=(e.src, idx[0], e.dst, idx[1]))
        return G

    G1, G2 = to_nx(g1), to_nx(g2)
    if sorted(map(str, valence_profile(g1))) != sorted(map(str, valence_profile(g2))):
        return False

    def emat(d1, d2):
        l1 = sorted(str(x["label"]) for x in d1.values())
        l2 = sorted(str(x["label"]) for x in d2.values())
        return l1 == l2

    m = MultiGraphMatcher(G1, G2, node_match=lambda a, b: a["label"] == b["label"], edge_match=emat)
    return m.is_isomorphic()
