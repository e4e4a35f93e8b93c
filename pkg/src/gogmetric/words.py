"""Words in the fundamental groupoid of a graph of groups, Britton reduction, translation lengths."""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import MalformedWord
from .gog import GraphOfGroups, format_rational
from .groups import CyclicGroup, FiniteGroup


class Word:
    """``g0 e1 g1 ... en gn`` stored as a flat tuple; ``start`` is the tail vertex index."""

    __slots__ = ("start", "letters")

    def __init__(self, start: int, letters: Sequence[int]):
        self.start = start
        self.letters = tuple(letters)

    @property
    def edges(self) -> tuple[int, ...]:
        return self.letters[1::2]

    @property
    def n_edges(self) -> int:
        return len(self.letters) // 2

    def end(self, gog: GraphOfGroups) -> int:
        return gog.head[self.letters[-2]] if len(self.letters) > 1 else self.start

    def __eq__(self, other):
        return isinstance(other, Word) and self.start == other.start and self.letters == other.letters

    def __hash__(self):
        return hash((self.start, self.letters))

    def __repr__(self):
        return f"Word({self.start}, {self.letters})"


def identity_word(gog: GraphOfGroups, v: int | None = None) -> Word:
    gog.build()
    v = gog.base_index if v is None else v
    return Word(v, (gog.groups[v].identity,))


def letter_word(gog: GraphOfGroups, v: int, g: int) -> Word:
    return Word(v, (g,))


def edge_word(gog: GraphOfGroups, oe: int) -> Word:
    gog.build()
    return Word(gog.tail[oe], (gog.groups[gog.tail[oe]].identity, oe, gog.groups[gog.head[oe]].identity))


def check_word(gog: GraphOfGroups, w: Word) -> None:
    gog.build()
    L = w.letters
    if len(L) % 2 != 1:
        raise MalformedWord("word must alternate letters and edges")
    cur = w.start
    for i in range(1, len(L), 2):
        oe = L[i]
        if not 0 <= oe < 2 * len(gog.edges):
            raise MalformedWord(f"unknown oriented edge code {oe}")
        if gog.tail[oe] != cur:
            raise MalformedWord(
                f"edge {gog.edge_name(oe)} starts at {gog.vids[gog.tail[oe]]}, word is at {gog.vids[cur]}"
            )
        cur = gog.head[oe]


def concat(gog: GraphOfGroups, *words: Word) -> Word:
    out = list(words[0].letters)
    end = words[0].end(gog)
    for w in words[1:]:
        if w.start != end:
            raise MalformedWord(
                f"cannot concatenate: word ends at {gog.vids[end]} but next starts at {gog.vids[w.start]}"
            )
        G = gog.groups[end]
        out[-1] = G.mul(out[-1], w.letters[0])
        out.extend(w.letters[1:])
        end = w.end(gog)
    return Word(words[0].start, out)


def inverse(gog: GraphOfGroups, w: Word) -> Word:
    L = w.letters
    n = len(L)
    out = []
    end = w.end(gog)
    cur = end
    for i in range(n - 1, -1, -1):
        if i % 2 == 0:
            out.append(gog.groups[cur].inv(L[i]))
        else:
            oe = L[i]
            out.append(oe ^ 1)
            cur = gog.tail[oe]
    return Word(end, out)


def power(gog: GraphOfGroups, w: Word, k: int) -> Word:
    if k == 0:
        return identity_word(gog, w.start)
    base = w if k > 0 else inverse(gog, w)
    return concat(gog, *([base] * abs(k)))


def reduce_word(gog: GraphOfGroups, w: Word) -> Word:
    """Britton reduction, scanning left to right and removing the leftmost pinch first."""
    gog.build()
    L = w.letters
    out = [L[0]]
    tail, groups, cross = gog.tail, gog.groups, gog.cross
    for i in range(1, len(L), 2):
        oe = L[i]
        g = L[i + 1]
        if len(out) >= 3 and out[-2] == (oe ^ 1):
            p = out[-2]
            c = cross(p, out[-1])
            if c is not None:
                out.pop()
                out.pop()
                G = groups[tail[p]]
                out[-1] = G.mul(G.mul(out[-1], c), g)
                continue
        out.append(oe)
        out.append(g)
    return Word(w.start, out)


def path_length(gog: GraphOfGroups, w: Word) -> Fraction:
    return sum((gog.edges[oe >> 1].length for oe in w.letters[1::2]), Fraction(0))


def is_trivial(gog: GraphOfGroups, w: Word) -> bool:
    r = reduce_word(gog, w)
    return len(r.letters) == 1 and gog.groups[r.start].is_identity(r.letters[0])


def words_equal(gog: GraphOfGroups, u: Word, v: Word) -> bool:
    if u.start != v.start or u.end(gog) != v.end(gog):
        return False
    return is_trivial(gog, concat(gog, u, inverse(gog, v)))


@dataclass(frozen=True)
class NormalFormResult:
    reduced: Word
    elliptic: bool
    translation_length: Fraction
    projected_axis: tuple[int, ...]
    conjugator: Word
    core: Word


def cyclic_reduce(gog: GraphOfGroups, w: Word) -> tuple[Word, Word]:
    """Return ``(c, core)`` with ``w = c core c^-1`` and ``core`` cyclically reduced.

    ``core`` is either a single vertex letter (elliptic case) or a loop word whose
    leading letter is the identity and which has no pinch across the wrap-around.
    """
    gog.build()
    if w.start != w.end(gog):
        raise MalformedWord("cyclic reduction needs a loop word")
    r = reduce_word(gog, w)
    groups = gog.groups
    conj = [groups[r.start].identity]
    conj_start = r.start
    L = list(r.letters)
    if len(L) == 1:
        return Word(conj_start, conj), r
    v = r.start
    G = groups[v]
    # rotate: r = g0 (e1 g1 ... en gn g0) g0^-1
    conj[-1] = G.mul(conj[-1], L[0])
    cyc = L[1:]
    cyc[-1] = G.mul(cyc[-1], L[0])
    while True:
        if len(cyc) < 4:
            break
        en, h, e1 = cyc[-2], cyc[-1], cyc[0]
        if e1 != (en ^ 1):
            break
        k = gog.cross(en, h)
        if k is None:
            break
        # cyc = e1 (g1 e2 ... e_{n-1} g_{n-1} k) e1^-1
        vin = gog.head[e1]
        Gin = groups[vin]
        conj.append(e1)
        conj.append(Gin.identity)
        inner = cyc[1:-2]
        inner[-1] = Gin.mul(inner[-1], k)
        if len(inner) == 1:
            return Word(conj_start, conj), Word(vin, (inner[0],))
        # rotate the leading letter g1 into the conjugator
        g1 = inner[0]
        conj[-1] = g1
        rest = inner[1:]
        rest[-1] = groups[gog.head[rest[-2]]].mul(rest[-1], g1)
        cyc = rest
    core_start = gog.tail[cyc[0]]
    core = Word(core_start, [groups[core_start].identity] + cyc)
    return Word(conj_start, conj), core


def translation_length(gog: GraphOfGroups, w: Word) -> NormalFormResult:
    gog.build()
    check_word(gog, w)
    if w.start != w.end(gog):
        raise MalformedWord("translation length needs a loop word")
    red = reduce_word(gog, w)
    conj, core = cyclic_reduce(gog, red)
    axis = core.edges
    tl = path_length(gog, core)
    return NormalFormResult(red, len(axis) == 0, tl, axis, conj, core)


def tl(gog: GraphOfGroups, w: Word) -> Fraction:
    return translation_length(gog, w).translation_length


# --- text ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(\(|\)|\^-?\d+|#-?\d+|[A-Za-z_][A-Za-z0-9_.']*(?::-?\d+)?|-?\d+)")


def _tokenize(text: str) -> list[str]:
    pos = 0
    out = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise MalformedWord(f"cannot parse word near {text[pos:pos + 10]!r}")
        out.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def _parse_atoms(tokens: list[str], i: int, depth: int) -> tuple[list, int]:
    items: list = []
    while i < len(tokens):
        t = tokens[i]
        if t == ")":
            if depth == 0:
                raise MalformedWord("unbalanced ')'")
            return items, i + 1
        if t == "(":
            sub, i = _parse_atoms(tokens, i + 1, depth + 1)
            atom = ("group", sub)
        elif t.startswith("^"):
            raise MalformedWord("exponent without a base")
        elif t.startswith("#"):
            atom = ("fin", None, int(t[1:]))
            i += 1
        elif re.fullmatch(r"-?\d+", t):
            if int(t) != 1:
                raise MalformedWord(f"bare integer {t!r}; use #k for finite-group elements")
            atom = ("one",)
            i += 1
        elif ":" in t:
            v, k = t.split(":")
            atom = ("fin", v, int(k))
            i += 1
        else:
            atom = ("name", t)
            i += 1
        exp = 1
        if i < len(tokens) and tokens[i].startswith("^"):
            exp = int(tokens[i][1:])
            i += 1
        items.append((atom, exp))
    if depth:
        raise MalformedWord("unbalanced '('")
    return items, i


def parse_word(gog: GraphOfGroups, text: str, start: int | str | None = None) -> Word:
    """Parse tokens like ``t^-1 x^6 t``, ``a b^-1``, ``#1 e #1 e^-1``, ``(a b)^3``."""
    gog.build()
    if start is None:
        cur = gog.base_index
    elif isinstance(start, str):
        if start not in gog.vindex:
            raise MalformedWord(f"unknown vertex {start!r}")
        cur = gog.vindex[start]
    else:
        cur = start
    items, _ = _parse_atoms(_tokenize(text), 0, 0)
    state = {"cur": cur, "letters": [gog.groups[cur].identity]}
    begin = cur

    def emit_edge(oe: int):
        if gog.tail[oe] != state["cur"]:
            raise MalformedWord(
                f"edge {gog.edge_name(oe)} starts at {gog.vids[gog.tail[oe]]}, word is at {gog.vids[state['cur']]}"
            )
        state["letters"].append(oe)
        state["cur"] = gog.head[oe]
        state["letters"].append(gog.groups[state["cur"]].identity)

    def emit_letter(g: int):
        G = gog.groups[state["cur"]]
        state["letters"][-1] = G.mul(state["letters"][-1], g)

    def run(seq, inverted: bool):
        seq = list(reversed(seq)) if inverted else seq
        for atom, exp in seq:
            inv = inverted ^ (exp < 0)
            for _ in range(abs(exp)):
                run_atom(atom, inv)

    def run_atom(atom, inv: bool):
        kind = atom[0]
        if kind == "group":
            run(atom[1], inv)
            return
        if kind == "one":
            return
        cur_v = state["cur"]
        G = gog.groups[cur_v]
        if kind == "fin":
            vname, k = atom[1], atom[2]
            if vname is not None and vname != gog.vids[cur_v]:
                raise MalformedWord(f"letter {vname}:{k} used at vertex {gog.vids[cur_v]}")
            if isinstance(G, CyclicGroup):
                emit_letter(-k if inv else k)
                return
            if isinstance(G, FiniteGroup):
                if not 0 <= k < G.n:
                    raise MalformedWord(f"element {k} not in group at {gog.vids[cur_v]}")
                emit_letter(G.inv(k) if inv else k)
                return
            if k != 0:
                raise MalformedWord(f"vertex {gog.vids[cur_v]} has trivial group")
            return
        name = atom[1]
        if name in gog.eindex:
            oe = 2 * gog.eindex[name]
            emit_edge(oe ^ 1 if inv else oe)
            return
        if isinstance(G, CyclicGroup) and name == G.symbol:
            emit_letter(-1 if inv else 1)
            return
        raise MalformedWord(f"unknown token {name!r} at vertex {gog.vids[cur_v]}")

    run(items, False)
    return Word(begin, state["letters"])


def format_letter(gog: GraphOfGroups, v: int, g: int) -> str | None:
    G = gog.groups[v]
    if G.is_identity(g):
        return None
    if isinstance(G, CyclicGroup):
        return G.symbol if g == 1 else f"{G.symbol}^{g}"
    return f"#{g}"


def format_word(gog: GraphOfGroups, w: Word) -> str:
    gog.build()
    parts = []
    cur = w.start
    L = w.letters
    for i, x in enumerate(L):
        if i % 2 == 0:
            s = format_letter(gog, cur, x)
            if s:
                parts.append(s)
        else:
            parts.append(gog.edge_name(x))
            cur = gog.head[x]
    return " ".join(parts) if parts else "1"


def format_axis(gog: GraphOfGroups, axis: Iterable[int]) -> str:
    return " ".join(gog.edge_name(oe) for oe in axis)


def format_tl(q: Fraction) -> str:
    return format_rational(q)
