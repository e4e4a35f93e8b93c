"""A tiny exact simplex solver for the descent steps (a handful of variables)."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def maximize(c: Sequence, A: Sequence[Sequence], b: Sequence) -> tuple[Fraction, list[Fraction]]:
    """Maximize ``c.x`` subject to ``A x <= b``, ``x >= 0``, with ``b >= 0``.

    Dense tableau, Bland's rule (the problems here are highly degenerate).
    Raises ValueError if the problem is unbounded.
    """
    m, n = len(A), len(c)
    if any(x < 0 for x in b):
        raise ValueError("right-hand side must be nonnegative")
    # rows: [A | I | b]; objective row holds -c
    T = [[Fraction(x) for x in A[i]] + [Fraction(int(i == j)) for j in range(m)] + [Fraction(b[i])] for i in range(m)]
    obj = [Fraction(-x) for x in c] + [Fraction(0)] * (m + 1)
    basis = [n + i for i in range(m)]
    while True:
        enter = next((j for j in range(n + m) if obj[j] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for i in range(m):
            a = T[i][enter]
            if a > 0:
                r = T[i][-1] / a
                if best is None or r < best or (r == best and basis[i] < basis[leave]):
                    best, leave = r, i
        if leave is None:
            raise ValueError("unbounded")
        piv = T[leave][enter]
        T[leave] = [x / piv for x in T[leave]]
        for i in range(m):
            if i != leave and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [x - f * y for x, y in zip(T[i], T[leave])]
        if obj[enter] != 0:
            f = obj[enter]
            obj = [x - f * y for x, y in zip(obj, T[leave])]
        basis[leave] = enter
    x = [Fraction(0)] * n
    for i, j in enumerate(basis):
        if j < n:
            x[j] = T[i][-1]
    return obj[-1], x
