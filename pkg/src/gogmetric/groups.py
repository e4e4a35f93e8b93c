"""Vertex groups for the three supported regimes: trivial, finite (by table), infinite cyclic.

Elements are plain ints. For a finite group they are the row indices of the
multiplication table; for an infinite cyclic group they are exponents of the
generator. Subgroups are ``frozenset`` for trivial/finite groups and a
nonnegative int ``d`` (meaning the subgroup generated by ``x^d``) for cyclic ones.
"""
from __future__ import annotations

from collections import deque
from itertools import product as _iproduct
from math import gcd
from typing import Iterable, Sequence

from .errors import NonGroupTable


class VertexGroup:
    kind = "abstract"
    identity = 0

    def mul(self, a: int, b: int) -> int:
        raise NotImplementedError

    def inv(self, a: int) -> int:
        raise NotImplementedError

    @property
    def order(self) -> int | None:
        raise NotImplementedError

    # subgroup helpers -----------------------------------------------------
    def trivial_subgroup(self):
        raise NotImplementedError

    def whole(self):
        raise NotImplementedError

    def generate(self, gens: Iterable[int]):
        raise NotImplementedError

    def contains(self, sub, g: int) -> bool:
        raise NotImplementedError

    def index(self, sub) -> int:
        raise NotImplementedError

    def sub_order(self, sub) -> int | None:
        raise NotImplementedError

    def coset_rep(self, sub, g: int) -> int:
        """Canonical representative of the left coset ``g * sub``."""
        raise NotImplementedError

    def transversal(self, sub) -> list[int]:
        raise NotImplementedError

    def double_coset_reps(self, left, right) -> list[int]:
        raise NotImplementedError

    def conj_sub(self, g: int, sub):
        """The subgroup ``g sub g^-1``."""
        raise NotImplementedError

    def intersect(self, s1, s2):
        raise NotImplementedError

    def is_subgroup_of(self, s1, s2) -> bool:
        raise NotImplementedError

    def power(self, g: int, k: int) -> int:
        if k < 0:
            g, k = self.inv(g), -k
        out = self.identity
        base = g
        while k:
            if k & 1:
                out = self.mul(out, base)
            base = self.mul(base, base)
            k >>= 1
        return out

    def is_identity(self, g: int) -> bool:
        return g == self.identity


class TrivialGroup(VertexGroup):
    kind = "trivial"
    identity = 0

    def mul(self, a, b):
        return 0

    def inv(self, a):
        return 0

    @property
    def order(self):
        return 1

    def elements(self):
        return [0]

    def trivial_subgroup(self):
        return frozenset({0})

    def whole(self):
        return frozenset({0})

    def generate(self, gens):
        return frozenset({0})

    def contains(self, sub, g):
        return g == 0

    def index(self, sub):
        return 1

    def sub_order(self, sub):
        return 1

    def coset_rep(self, sub, g):
        return 0

    def transversal(self, sub):
        return [0]

    def double_coset_reps(self, left, right):
        return [0]

    def conj_sub(self, g, sub):
        return sub

    def intersect(self, s1, s2):
        return frozenset({0})

    def is_subgroup_of(self, s1, s2):
        return True

    def __eq__(self, other):
        return isinstance(other, TrivialGroup)

    def __hash__(self):
        return hash("trivial")


class FiniteGroup(VertexGroup):
    kind = "finite"

    def __init__(self, table: Sequence[Sequence[int]]):
        n = len(table)
        self.table = tuple(tuple(int(x) for x in row) for row in table)
        self.n = n
        self._check()
        self._coset_cache: dict = {}
        self._gen_cache: dict = {}

    def _check(self):
        n, t = self.n, self.table
        if n == 0:
            raise NonGroupTable("empty multiplication table")
        for row in t:
            if len(row) != n:
                raise NonGroupTable("multiplication table is not square")
            for x in row:
                if not 0 <= x < n:
                    raise NonGroupTable(f"table entry {x} out of range 0..{n - 1}")
        ident = [e for e in range(n) if all(t[e][x] == x and t[x][e] == x for x in range(n))]
        if not ident:
            raise NonGroupTable("no identity element")
        self.identity = ident[0]
        inv = []
        for a in range(n):
            cands = [b for b in range(n) if t[a][b] == self.identity and t[b][a] == self.identity]
            if not cands:
                raise NonGroupTable(f"element {a} has no inverse")
            inv.append(cands[0])
        self.inverses = tuple(inv)
        for a, b, c in _iproduct(range(n), repeat=3):
            if t[t[a][b]][c] != t[a][t[b][c]]:
                raise NonGroupTable(f"not associative at ({a},{b},{c})")

    def mul(self, a, b):
        return self.table[a][b]

    def inv(self, a):
        return self.inverses[a]

    @property
    def order(self):
        return self.n

    def elements(self):
        return list(range(self.n))

    def trivial_subgroup(self):
        return frozenset({self.identity})

    def whole(self):
        return frozenset(range(self.n))

    def generate(self, gens):
        # in a finite group the monoid generated is already the subgroup
        gens = list(gens)
        out = {self.identity}
        q = deque(out)
        while q:
            a = q.popleft()
            for g in gens:
                p = self.mul(a, g)
                if p not in out:
                    out.add(p)
                    q.append(p)
        return frozenset(out)

    def contains(self, sub, g):
        return g in sub

    def index(self, sub):
        return self.n // len(sub)

    def sub_order(self, sub):
        return len(sub)

    def coset_rep(self, sub, g):
        key = (sub, g)
        r = self._coset_cache.get(key)
        if r is None:
            r = min(self.mul(g, s) for s in sub)
            self._coset_cache[key] = r
        return r

    def transversal(self, sub):
        return sorted({self.coset_rep(sub, g) for g in range(self.n)})

    def double_coset_reps(self, left, right):
        seen = set()
        reps = []
        for g in range(self.n):
            if g in seen:
                continue
            reps.append(g)
            for a in left:
                for b in right:
                    seen.add(self.mul(self.mul(a, g), b))
        return reps

    def conj_sub(self, g, sub):
        gi = self.inv(g)
        return frozenset(self.mul(self.mul(g, s), gi) for s in sub)

    def intersect(self, s1, s2):
        return frozenset(s1) & frozenset(s2)

    def is_subgroup_of(self, s1, s2):
        return frozenset(s1) <= frozenset(s2)

    def generating_set(self) -> list[int]:
        """Greedy small generating set, deterministic."""
        gens: list[int] = []
        sub = self.trivial_subgroup()
        for g in range(self.n):
            if g not in sub:
                gens.append(g)
                sub = self.generate(gens)
                if len(sub) == self.n:
                    break
        return gens

    def express(self, g: int, gens: Sequence[int]) -> list[int]:
        """Shortest product of ``gens`` equal to ``g`` (list of generator positions)."""
        key = (tuple(gens), g)
        if key in self._gen_cache:
            return self._gen_cache[key]
        prev = {self.identity: None}
        q = deque([self.identity])
        while q:
            a = q.popleft()
            if a == g:
                break
            for i, s in enumerate(gens):
                b = self.mul(a, s)
                if b not in prev:
                    prev[b] = (a, i)
                    q.append(b)
        if g not in prev:
            raise ValueError(f"element {g} not generated")
        path = []
        cur = g
        while prev[cur] is not None:
            a, i = prev[cur]
            path.append(i)
            cur = a
        path.reverse()
        self._gen_cache[key] = path
        return path

    def __eq__(self, other):
        return isinstance(other, FiniteGroup) and other.table == self.table

    def __hash__(self):
        return hash(self.table)


class CyclicGroup(VertexGroup):
    kind = "cyclic"
    identity = 0

    def __init__(self, symbol: str = "x"):
        self.symbol = symbol

    def mul(self, a, b):
        return a + b

    def inv(self, a):
        return -a

    def power(self, g, k):
        return g * k

    @property
    def order(self):
        return None

    def trivial_subgroup(self):
        return 0

    def whole(self):
        return 1

    def generate(self, gens):
        d = 0
        for g in gens:
            d = gcd(d, abs(g))
        return d

    def contains(self, sub, g):
        if sub == 0:
            return g == 0
        return g % sub == 0

    def index(self, sub):
        if sub == 0:
            raise ValueError("trivial subgroup of an infinite cyclic group has infinite index")
        return sub

    def sub_order(self, sub):
        return 1 if sub == 0 else None

    def coset_rep(self, sub, g):
        if sub == 0:
            return g
        return g % sub

    def transversal(self, sub):
        if sub == 0:
            raise ValueError("infinite transversal")
        return list(range(sub))

    def double_coset_reps(self, left, right):
        d = gcd(left, right)
        if d == 0:
            raise ValueError("infinitely many double cosets")
        return list(range(d))

    def conj_sub(self, g, sub):
        return sub

    def intersect(self, s1, s2):
        if s1 == 0 or s2 == 0:
            return 0
        return s1 * s2 // gcd(s1, s2)

    def is_subgroup_of(self, s1, s2):
        if s1 == 0:
            return True
        if s2 == 0:
            return False
        return s1 % s2 == 0

    def __eq__(self, other):
        return isinstance(other, CyclicGroup)

    def __hash__(self):
        return hash("cyclic")


def finite_from_subgroup(group: FiniteGroup, sub) -> tuple[FiniteGroup, dict[int, int]]:
    """Relabel a subgroup of a finite group as a standalone table.

    Returns the new group and the map old element -> new element id. The
    identity of the subgroup always gets id 0.
    """
    elems = sorted(sub, key=lambda g: (g != group.identity, g))
    index = {g: i for i, g in enumerate(elems)}
    table = [[index[group.mul(a, b)] for b in elems] for a in elems]
    return FiniteGroup(table), index


def cyclic_table(n: int) -> list[list[int]]:
    return [[(i + j) % n for j in range(n)] for i in range(n)]
