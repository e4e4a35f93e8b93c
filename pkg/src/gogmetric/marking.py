"""Generators of fundamental groups, markings between graphs of groups, word maps.

A marking is a homomorphism from the fundamental group of one graph of groups
to that of another, given by the images of a fixed generating system: one
generator per non-tree edge of a breadth-first maximal tree, the generator of
each cyclic vertex group and a small generating set of each finite vertex group,
all conjugated to the base vertex along tree paths.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import InvalidMarking, ParseError, SearchExhausted
from .gog import GraphOfGroups
from .groups import CyclicGroup, FiniteGroup
from .words import (
    Word,
    concat,
    format_word,
    identity_word,
    inverse,
    parse_word,
    power,
    reduce_word,
    words_equal,
)


@dataclass
class GeneratorSystem:
    gog: GraphOfGroups
    names: list[str]
    words: dict[str, Word]
    tree_paths: list[Word]  # p_v: reduced path word from the base to v along the tree
    tree_edges: frozenset[int]  # unoriented edge indices of the maximal tree
    letter_gens: dict[int, list[tuple[str, int]]]  # vertex -> [(name, element)]
    edge_gen: dict[int, str]  # non-tree edge index -> generator name


def generators(gog: GraphOfGroups) -> GeneratorSystem:
    hit = getattr(gog, "_generators", None)
    if hit is not None:
        return hit
    gog.build()
    n = len(gog.vids)
    paths: list[Word | None] = [None] * n
    b = gog.base_index
    paths[b] = identity_word(gog, b)
    tree: set[int] = set()
    order = [b]
    for v in order:
        for oe in gog.out_edges[v]:
            w = gog.head[oe]
            if paths[w] is None:
                paths[w] = concat(gog, paths[v], Word(v, (gog.groups[v].identity, oe, gog.groups[w].identity)))
                tree.add(oe >> 1)
                order.append(w)
    names: list[str] = []
    words: dict[str, Word] = {}
    letter_gens: dict[int, list] = {}
    edge_gen: dict[int, str] = {}
    edge_ids = {e.id for e in gog.edges}
    syms = [g.symbol for g in gog.groups if isinstance(g, CyclicGroup)]
    for v in range(n):
        G = gog.groups[v]
        p = paths[v]
        if isinstance(G, CyclicGroup):
            sym = G.symbol
            name = sym if syms.count(sym) == 1 and sym not in edge_ids else f"{gog.vids[v]}.{sym}"
            elems = [1]
            letter_gens[v] = [(name, 1)]
        elif isinstance(G, FiniteGroup):
            elems = G.generating_set()
            letter_gens[v] = [(f"{gog.vids[v]}:{g}", g) for g in elems]
        else:
            letter_gens[v] = []
            continue
        for name, g in letter_gens[v]:
            names.append(name)
            words[name] = conj_letter(gog, p, v, g)
    for i, e in enumerate(gog.edges):
        if i in tree:
            continue
        oe = 2 * i
        name = e.id
        edge_gen[i] = name
        names.append(name)
        words[name] = edge_loop(gog, paths, oe)
    sysm = GeneratorSystem(gog, names, words, paths, frozenset(tree), letter_gens, edge_gen)
    gog._generators = sysm
    return sysm


def conj_letter(gog: GraphOfGroups, p: Word, v: int, g: int) -> Word:
    return concat(gog, p, Word(v, (g,)), inverse(gog, p))


def edge_loop(gog: GraphOfGroups, paths: list[Word], oe: int) -> Word:
    """``p_tail . oe . p_head^-1`` as a loop at the base."""
    t, h = gog.tail[oe], gog.head[oe]
    mid = Word(t, (gog.groups[t].identity, oe, gog.groups[h].identity))
    return concat(gog, paths[t], mid, inverse(gog, paths[h]))


def to_base(gog: GraphOfGroups, w: Word) -> Word:
    """Conjugate a loop word at any vertex to a loop word at the base along the tree path."""
    if w.start == gog.base_index:
        return w
    p = generators(gog).tree_paths[w.start]
    return concat(gog, p, w, inverse(gog, p))


class Marking:
    """Homomorphism between fundamental groups given on the generating system of ``source``."""

    def __init__(
        self,
        source: GraphOfGroups,
        target: GraphOfGroups,
        images: Mapping[str, Word],
        backward: Mapping[str, Word] | None = None,
    ):
        self.source = source.build()
        self.target = target.build()
        self.gens = generators(source)
        missing = [n for n in self.gens.names if n not in images]
        if missing:
            raise InvalidMarking(f"no image for generator(s) {', '.join(missing)}")
        tb = self.target.base_index
        self.images: dict[str, Word] = {}
        for n in self.gens.names:
            w = images[n]
            if w.start != tb or w.end(self.target) != tb:
                raise InvalidMarking(f"image of {n} is not a loop at the target base")
            self.images[n] = reduce_word(self.target, w)
        self.backward = dict(backward) if backward is not None else None
        self._letter_cache: dict[tuple[int, int], Word] = {}

    # evaluation -----------------------------------------------------------
    def letter_image(self, v: int, g: int) -> Word:
        """Image of ``p_v g p_v^-1``."""
        key = (v, g)
        hit = self._letter_cache.get(key)
        if hit is not None:
            return hit
        S, T = self.source, self.target
        G = S.groups[v]
        if G.is_identity(g):
            out = identity_word(T)
        elif isinstance(G, CyclicGroup):
            name = self.gens.letter_gens[v][0][0]
            out = reduce_word(T, power(T, self.images[name], g))
        elif isinstance(G, FiniteGroup):
            lg = self.gens.letter_gens[v]
            idx = G.express(g, [x for _, x in lg])
            out = identity_word(T)
            for i in idx:
                out = concat(T, out, self.images[lg[i][0]])
            out = reduce_word(T, out)
        else:
            out = identity_word(T)
        self._letter_cache[key] = out
        return out

    def edge_image(self, oe: int) -> Word:
        """Image of ``p_tail . oe . p_head^-1``."""
        i = oe >> 1
        if i in self.gens.tree_edges:
            return identity_word(self.target)
        w = self.images[self.gens.edge_gen[i]]
        return w if oe % 2 == 0 else inverse(self.target, w)

    def apply(self, w: Word) -> Word:
        """Image of a loop word (at any vertex; other vertices are conjugated to the base)."""
        S, T = self.source, self.target
        w = to_base(S, w)
        parts = []
        cur = w.start
        for k, x in enumerate(w.letters):
            if k % 2 == 0:
                if not S.groups[cur].is_identity(x):
                    parts.append(self.letter_image(cur, x))
            else:
                if (x >> 1) not in self.gens.tree_edges:
                    parts.append(self.edge_image(x))
                cur = S.head[x]
        if not parts:
            return identity_word(T)
        return reduce_word(T, concat(T, *parts))

    __call__ = apply

    # checks ---------------------------------------------------------------
    def check_relations(self) -> None:
        """Raise InvalidMarking unless the generator images respect the defining relations."""
        S, T = self.source, self.target
        for v, G in enumerate(S.groups):
            if isinstance(G, FiniteGroup):
                for a in range(G.n):
                    for b in range(G.n):
                        lhs = concat(T, self.letter_image(v, a), self.letter_image(v, b))
                        if not words_equal(T, lhs, self.letter_image(v, G.mul(a, b))):
                            raise InvalidMarking(
                                f"images at {S.vids[v]} violate the group table at ({a},{b})"
                            )
        for i, e in enumerate(S.edges):
            oe = 2 * i
            t, h = S.tail[oe], S.head[oe]
            gam = self.edge_image(oe)
            if S.edge_kind[i] == "cyclic":
                pairs = [(S._near_map[oe], S._far_inv[oe])]
            else:
                pairs = [(S._near_map[oe][c], g) for g, c in S._far_inv[oe].items()]
            for near, far in pairs:
                lhs = concat(T, gam, self.letter_image(h, far), inverse(T, gam))
                if not words_equal(T, lhs, self.letter_image(t, near)):
                    raise InvalidMarking(f"images violate the edge relation of {e.id}")

    def check_inverse(self) -> None:
        """Raise InvalidMarking unless the backward images invert the forward ones on generators."""
        if self.backward is None:
            raise InvalidMarking("marking has no backward direction")
        back = Marking(self.target, self.source, self.backward)
        S, T = self.source, self.target
        for n, w in self.gens.words.items():
            if not words_equal(S, back.apply(self.images[n]), w):
                raise InvalidMarking(f"backward(forward({n})) is not {n}")
        for n, w in back.gens.words.items():
            if not words_equal(T, self.apply(back.images[n]), w):
                raise InvalidMarking(f"forward(backward({n})) is not {n}")

    def validate(self, require_inverse: bool = True) -> "Marking":
        self.check_relations()
        if self.backward is not None or require_inverse:
            self.check_inverse()
        return self

    def inverse(self) -> "Marking":
        if self.backward is None:
            raise InvalidMarking("marking has no backward direction")
        return Marking(self.target, self.source, self.backward, self.images)

    def then(self, other: "Marking") -> "Marking":
        """``other . self``: first this marking, then ``other``."""
        if other.source is not self.target and other.source != self.target:
            raise InvalidMarking("markings do not compose")
        images = {n: other.apply(w) for n, w in self.images.items()}
        backward = None
        if self.backward is not None and other.backward is not None:
            inv_other = other.inverse()
            mine = self.inverse()
            backward = {n: mine.apply(w) for n, w in inv_other.images.items()}
        return Marking(self.source, other.target, images, backward)

    def retarget(self, target: GraphOfGroups) -> "Marking":
        """Same images read in an equal copy of the target."""
        return Marking(self.source, target, self.images, self.backward)

    def to_text(self) -> str:
        lines = ["[marking]"]
        for n in self.gens.names:
            lines.append(f"gen {n} -> {format_word(self.target, self.images[n])}")
        if self.backward is not None:
            lines.append("[backward]")
            back_gens = generators(self.target)
            for n in back_gens.names:
                lines.append(f"gen {n} -> {format_word(self.source, self.backward[n])}")
        return "\n".join(lines) + "\n"


def identity_marking(gog: GraphOfGroups, target: GraphOfGroups | None = None) -> Marking:
    gens = generators(gog)
    target = target if target is not None else gog
    return Marking(gog, target, dict(gens.words), dict(generators(target).words))


# --- word maps -------------------------------------------------------------


@dataclass
class WordMap:
    """A morphism of fundamental groupoids: vertices to vertices, letters and edges to path words."""

    source: GraphOfGroups
    target: GraphOfGroups
    vmap: list[int]
    letter: Callable[[int, int], Word]  # (v, g) -> loop word at vmap[v]
    edge: Callable[[int], Word]  # oe -> path word from vmap[tail] to vmap[head]

    def apply(self, w: Word) -> Word:
        S, T = self.source, self.target
        out = identity_word(T, self.vmap[w.start])
        cur = w.start
        for k, x in enumerate(w.letters):
            if k % 2 == 0:
                if not S.groups[cur].is_identity(x):
                    out = concat(T, out, self.letter(cur, x))
            else:
                out = concat(T, out, self.edge(x))
                cur = S.head[x]
        return reduce_word(T, out)

    def marking_images(self, base_path: Word | None = None) -> dict[str, Word]:
        """Generator images, conjugated by ``base_path`` (target base to image of source base)."""
        S, T = self.source, self.target
        gens = generators(S)
        if base_path is None:
            if self.vmap[S.base_index] != T.base_index:
                base_path = generators(T).tree_paths[self.vmap[S.base_index]]
            else:
                base_path = identity_word(T)
        bi = inverse(T, base_path)
        return {n: reduce_word(T, concat(T, base_path, self.apply(w), bi)) for n, w in gens.words.items()}


def marking_from_maps(fwd: WordMap, bwd: WordMap, fwd_base: Word | None = None,
                      bwd_base: Word | None = None) -> Marking:
    return Marking(fwd.source, fwd.target, fwd.marking_images(fwd_base), bwd.marking_images(bwd_base))


# --- automorphisms ---------------------------------------------------------


def find_inverse_images(m: Marking, max_len: int = 5) -> dict[str, Word]:
    """Bounded search expressing each target generator as a product of forward images.

    Returns backward images; raises SearchExhausted if some generator is not found.
    """
    S, T = m.source, m.target
    names = m.gens.names
    letters = []
    for n in names:
        letters.append((n, 1))
        letters.append((n, -1))
    tgt = generators(T)
    img = {(n, s): (m.images[n] if s == 1 else inverse(T, m.images[n])) for n, s in letters}
    src = {(n, s): (m.gens.words[n] if s == 1 else inverse(S, m.gens.words[n])) for n, s in letters}
    found: dict[str, Word] = {}
    todo = {n: tgt.words[n] for n in tgt.names}
    # breadth-first over freely reduced products of images
    frontier = [((), identity_word(T), identity_word(S))]
    for length in range(1, max_len + 1):
        nxt = []
        for seq, wt, ws in frontier:
            for lt in letters:
                if seq and seq[-1][0] == lt[0] and seq[-1][1] == -lt[1]:
                    continue
                wt2 = reduce_word(T, concat(T, wt, img[lt]))
                ws2 = concat(S, ws, src[lt])
                for n in list(todo):
                    if words_equal(T, wt2, todo[n]):
                        found[n] = reduce_word(S, ws2)
                        del todo[n]
                nxt.append((seq + (lt,), wt2, ws2))
            if not todo:
                break
        if not todo:
            break
        frontier = nxt
    if todo:
        raise SearchExhausted(
            f"could not express {', '.join(sorted(todo))} with products of at most {max_len} images"
        )
    return found


def automorphism(gog: GraphOfGroups, images: Mapping[str, Word], backward: Mapping[str, Word] | None = None,
                 search_len: int = 5) -> Marking:
    """A self-marking; the inverse is found by bounded search when not given."""
    m = Marking(gog, gog, images)
    m.check_relations()
    if backward is None:
        backward = find_inverse_images(m, search_len)
    m = Marking(gog, gog, images, backward)
    m.check_inverse()
    return m


# --- text format -----------------------------------------------------------

_GEN = re.compile(r"gen\s+(\S+)\s*->\s*(.*)")


def parse_marking_text(text: str) -> tuple[dict[str, str], dict[str, str] | None]:
    """Parse ``[marking]`` / optional ``[backward]`` sections into name -> token string."""
    fwd: dict[str, str] = {}
    bwd: dict[str, str] | None = None
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("marking", "backward", "automorphism"):
                raise ParseError(f"unknown section [{section}]", lineno)
            if section == "backward":
                bwd = {}
            continue
        m = _GEN.fullmatch(line)
        if not m:
            raise ParseError("expected 'gen <name> -> <word>'", lineno)
        if section is None:
            raise ParseError("generator line before [marking]", lineno)
        target = bwd if section == "backward" else fwd
        if m.group(1) in target:
            raise ParseError(f"generator {m.group(1)} given twice", lineno)
        target[m.group(1)] = m.group(2).strip()
    return fwd, bwd


def marking_from_text(text: str, source: GraphOfGroups, target: GraphOfGroups | None = None,
                      search_len: int = 5) -> Marking:
    """Build a marking (``target`` None means a self-map, i.e. an automorphism)."""
    fwd, bwd = parse_marking_text(text)
    tgt = target if target is not None else source
    gens = generators(source)
    unknown = [n for n in fwd if n not in gens.words]
    if unknown:
        raise InvalidMarking(f"unknown generator(s) {', '.join(unknown)}")
    images = {}
    for n in gens.names:
        images[n] = parse_word(tgt, fwd[n]) if n in fwd else (gens.words[n] if target is None else None)
        if images[n] is None:
            raise InvalidMarking(f"no image for generator {n}")
    back = None
    if bwd is not None:
        tg = generators(tgt)
        back = {}
        for n in tg.names:
            if n in bwd:
                back[n] = parse_word(source, bwd[n])
            elif target is None:
                back[n] = tg.words[n]
            else:
                raise InvalidMarking(f"no backward image for generator {n}")
    if target is None:
        return automorphism(source, images, back, search_len)
    m = Marking(source, tgt, images)
    m.check_relations()
    if back is None:
        back = find_inverse_images(m, search_len)
    m = Marking(source, tgt, images, back)
    m.check_inverse()
    return m
