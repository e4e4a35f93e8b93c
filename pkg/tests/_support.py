"""Shared fixtures-as-functions for the test modules."""
from __future__ import annotations

import random
from pathlib import Path

from gogmetric.gog import GraphOfGroups, parse_gog
from gogmetric.marking import generators, marking_from_text
from gogmetric.samples import barbell, rose, theta, virtually_free
from gogmetric.words import Word, concat, identity_word, inverse, reduce_word

DATA = Path(__file__).resolve().parent.parent / "data"

BS12 = """
[vertices]
v cyclic gen=x
[edges]
t v v len=1 inc_src=index=2 inc_dst=index=1
[base] v
"""

# Z *_{2Z=3Z} Z with an extra HNN loop of modulus one
AMALGAM = """
[vertices]
u cyclic gen=x
w cyclic gen=y
[edges]
s u w len=1/2 inc_src=index=2 inc_dst=index=3
a u u len=1/2 inc_src=index=1 inc_dst=index=-1
[base] u
"""


def load(name: str) -> GraphOfGroups:
    return parse_gog((DATA / name).read_text())


def load_marking(name: str, source: GraphOfGroups, target: GraphOfGroups | None = None):
    return marking_from_text((DATA / name).read_text(), source, target)


def free_shapes() -> list[GraphOfGroups]:
    return [rose(2), rose(3), theta(), theta(extra_loop=True), barbell()]


def finite_shapes() -> list[GraphOfGroups]:
    return [virtually_free(k) for k in range(4)]


def cyclic_shapes() -> list[GraphOfGroups]:
    return [parse_gog(BS12), parse_gog(AMALGAM), load("bs16.gog")]


def random_word(gog: GraphOfGroups, rng: random.Random, max_factors: int = 5) -> Word:
    """Reduced product of random generators and their inverses, based at the base vertex."""
    gens = generators(gog)
    w = identity_word(gog)
    for _ in range(rng.randint(1, max_factors)):
        g = gens.words[rng.choice(gens.names)]
        if rng.random() < 0.5:
            g = inverse(gog, g)
        w = concat(gog, w, g)
    return reduce_word(gog, w)
