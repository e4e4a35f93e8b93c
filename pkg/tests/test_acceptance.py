"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the numbers it saw
(run with ``pytest -s`` to see them) and then asserts.
"""
import math
import random
import time
from fractions import Fraction

import numpy as np

from gogmetric.deformation import (
    has_nontrivial_integral_modulus, index_invariant, subdivide_marked, twist, type_IIA_fold,
)
from gogmetric.dynamics import (
    ReductionCertificate, TrainTrackMap, displacement, find_train_track, minimality_spotcheck,
    verify_train_track,
)
from gogmetric.errors import BallBudgetExceeded, ElementAlreadyInEdgeGroup, NotRepresentable
from gogmetric.geodesics import geodesic, verify_path
from gogmetric.gog import labeled_isomorphic, valence_profile
from gogmetric.lipschitz import detect_non_isometry, distance, enumerate_candidates, sigma
from gogmetric.marking import generators, identity_marking
from gogmetric.samples import (
    barbell, random_automorphism, random_finite_tree, random_lengths, random_marked_pair, remark, rose, theta,
    virtually_free,
)
from gogmetric.tree import ball, base_point, oracle_translation_length
from gogmetric.tree import displacement as vertex_displacement
from gogmetric.tree import vertex_distance
from gogmetric.words import Word, concat, inverse, power, reduce_word, tl
from _support import cyclic_shapes, finite_shapes, free_shapes, load, load_marking, random_word


def report(n, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    return ok


# 1 ---------------------------------------------------------------------------

def test_criterion_1_fig1_counterexample():
    t0 = time.perf_counter()
    g, h = load("fig1_gamma.gog"), load("fig1_gamma_prime.gog")
    assert all(e.length == Fraction(1, 3) for e in g.edges + h.edges)
    m = load_marking("fig1.marking", g, h)
    fwd = distance(g, h, m)
    back = distance(h, g, m.inverse())
    differ = valence_profile(g) != valence_profile(h) and not labeled_isomorphic(g, h)
    dt = time.perf_counter() - t0
    ok = fwd.sigma == 1 and back.sigma > 1 and differ and dt < 1
    report(1, ok, f"sigma={fwd.sigma} reverse={back.sigma} valence_differs={differ} time={dt:.3f}s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_2_bs_counterexample():
    t0 = time.perf_counter()
    bs = load("bs16_f2.gog")
    phi = load_marking("bs16_f2.aut", bs)
    tw, mt = twist(bs, phi)
    s = distance(bs, tw, mt).sigma
    x = generators(bs).words["x"]
    rep = detect_non_isometry(mt, enumerate_candidates(bs, 2).words(), elliptic=x)
    dt = time.perf_counter() - t0
    ok = s == 1 and rep.fires and rep.newly_fixed == ["d"] and dt < 1
    report(2, ok, f"sigma={s} fixed_in_T={rep.fixed_source} fixed_in_TPhi={rep.fixed_target} "
                  f"time={dt:.3f}s")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_3_inf_equals_sup():
    rng = random.Random(3)
    free = [rose(2), rose(3), theta(), theta(extra_loop=True)]
    cases = [(free[k % 4], rng) for k in range(104)] + [(virtually_free(k % 4), rng) for k in range(24)]
    bad = []
    n_free = n_vf = 0
    for shape, r in cases:
        T, T2, m = random_marked_pair(shape, r, steps=r.randint(0, 4))
        res = distance(T, T2, m)
        if res.candidate_max != res.sigma or not res.witness.valid:
            bad.append((T.to_text(), res.sigma, res.candidate_max))
        if T.regime() == "trivial":
            n_free += 1
        else:
            n_vf += 1
    ok = not bad and n_free >= 100 and n_vf >= 20
    report(3, ok, f"free={n_free} virtually_free={n_vf} mismatches={len(bad)}")
    assert ok, bad[:2]


# 4 ---------------------------------------------------------------------------

def test_criterion_4_pseudometric_and_isometry():
    rng = random.Random(4)
    shapes = [rose(2), rose(3), theta(), barbell()] + [virtually_free(k) for k in range(4)]
    n = fails = 0
    for k in range(200):
        sh = shapes[k % len(shapes)]
        T1, T2, T3 = (random_lengths(sh, rng) for _ in range(3))
        a = random_automorphism(sh, rng, steps=rng.randint(0, 3))
        b = random_automorphism(sh, rng, steps=rng.randint(0, 3))
        m12, m23 = remark(a, T1, T2), remark(b, T2, T3)
        s12, s23 = sigma(T1, T2, m12), sigma(T2, T3, m23)
        s13 = sigma(T1, T3, m12.then(m23))
        self_one = sigma(T1, T1, identity_marking(T1)) == 1
        n += 1
        if not (s12 >= 1 and s23 >= 1 and s13 >= 1 and self_one and s13 <= s12 * s23):
            fails += 1
    iso_n = iso_fails = 0
    for k in range(50):
        sh = shapes[k % len(shapes)]
        T, T2, m = random_marked_pair(sh, rng, steps=rng.randint(0, 3))
        phi = random_automorphism(sh, rng, steps=rng.randint(1, 3))
        # T2 is marked through m, so the same outer class acts on it as m phi m^-1
        pT = remark(phi, T, T)
        TP, mT = twist(T, pT)
        T2P, mT2 = twist(T2, m.inverse().then(pT).then(m))
        moved = mT.inverse().then(m).then(mT2)
        iso_n += 1
        if sigma(TP, T2P, remark(moved, TP, T2P)) != sigma(T, T2, m):
            iso_fails += 1
    ok = fails == 0 and iso_fails == 0
    report(4, ok, f"triples={n} axiom_failures={fails} isometry_samples={iso_n} isometry_failures={iso_fails}")
    assert ok


# 5 ---------------------------------------------------------------------------

def _fixed_vertex_element(gog, rng):
    """``P x P^-1`` for a random vertex ``P`` and a nontrivial letter ``x`` at its end."""
    gens = generators(gog)
    v = rng.choice([v for v in range(len(gog.vids)) if getattr(gog.groups[v], "n", 1) > 1])
    P = reduce_word(gog, concat(gog, random_word(gog, rng, 3), gens.tree_paths[v]))
    x = Word(v, (rng.randrange(1, gog.groups[v].n),))
    return P, reduce_word(gog, concat(gog, P, x, inverse(gog, P)))


def _axis_distance(gog, g, h):
    """d(A_g, A_h) from vertex displacements inside a ball containing the bridge."""
    v0 = base_point(gog).path
    lg, lh = tl(gog, g), tl(gog, h)
    R = max(vertex_displacement(gog, g, v0), vertex_displacement(gog, h, v0)) / 2
    return min(
        ((vertex_displacement(gog, g, P) - lg) + (vertex_displacement(gog, h, P) - lh)) / 2
        for P in ball(gog, v0, R)
    )


def test_criterion_5_oracle_and_laws():
    rng = random.Random(5)
    regimes = {"trivial": free_shapes(), "finite": finite_shapes(), "cyclic": cyclic_shapes()}
    counts, mism, law_fail = {}, 0, 0
    for name, shapes in regimes.items():
        counts[name] = 0
        for k in range(180):
            g = shapes[k % len(shapes)]
            w, u = random_word(g, rng), random_word(g, rng)
            lw = tl(g, w)
            if lw != oracle_translation_length(g, w):
                mism += 1
            counts[name] += 1
            n = rng.choice([-3, -2, 2, 3])
            if tl(g, power(g, w, n)) != abs(n) * lw:
                law_fail += 1
            if tl(g, concat(g, u, w, inverse(g, u))) != lw:
                law_fail += 1
    # product of elliptics with single fixed vertices (trivial edge groups)
    ell = ell_oracle = 0
    for k in range(60):
        g = random_lengths(virtually_free(k % 4), rng)
        (P, a), (Q, b) = _fixed_vertex_element(g, rng), _fixed_vertex_element(g, rng)
        assert vertex_displacement(g, a, P) == 0 and vertex_displacement(g, b, Q) == 0
        expect = 2 * vertex_distance(g, P, Q)
        ab = concat(g, a, b)
        if tl(g, ab) != expect:
            law_fail += 1
        try:
            if oracle_translation_length(g, ab) != expect:
                law_fail += 1
            ell_oracle += 1
        except BallBudgetExceeded:
            pass  # far apart fixed vertices; the ball is too large to enumerate
        ell += 1
    # hyperbolic elements with disjoint axes
    disjoint = 0
    for k in range(120):
        g = random_lengths([rose(2), rose(3), theta()][k % 3], rng)
        a, b = random_word(g, rng, 3), random_word(g, rng, 3)
        la, lb = tl(g, a), tl(g, b)
        if la == 0 or lb == 0:
            continue
        D = _axis_distance(g, a, b)
        if D > 0:
            disjoint += 1
            if tl(g, concat(g, a, b)) != la + lb + 2 * D:
                law_fail += 1
    total = sum(counts.values())
    ok = mism == 0 and law_fail == 0 and total >= 500 and disjoint > 0
    report(5, ok, f"words={counts} oracle_mismatches={mism} elliptic_products={ell} (oracle on {ell_oracle}) "
                  f"disjoint_axes={disjoint} law_failures={law_fail}")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_6_geodesic_additivity():
    rng = random.Random(6)
    shapes = [rose(2), rose(3), theta(), theta(extra_loop=True), barbell()]
    n = bad = triples = 0
    for k in range(50):
        T, T2, m = random_marked_pair(shapes[k % len(shapes)], rng, steps=rng.randint(1, 4))
        p = geodesic(T, T2, m, samples=2)
        chk = verify_path(p)
        n += 1
        triples += len(chk.sigmas)
        if not (chk.additive and chk.witness_persistent and chk.endpoint_lengths_match):
            bad += 1
    ok = bad == 0 and n >= 50
    report(6, ok, f"paths={n} checked_pairs={triples} failures={bad}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_criterion_7_train_track_desk():
    t0 = time.perf_counter()
    T = rose(2)
    golden = load_marking("golden.aut", T)
    tt = find_train_track(T, golden)
    assert isinstance(tt, TrainTrackMap)
    M = tt.matrix.astype(float)
    char = np.poly(M)  # monic characteristic polynomial
    poly_ok = np.allclose(char, [1, -1, -1])
    lam_ok = abs(tt.lam - 1.6180339887) < 1e-9 and abs(tt.lam**2 - tt.lam - 1) < 1e-9
    tt_ok = verify_train_track(tt).ok
    sc = minimality_spotcheck(tt, k=3, trials=50)
    cert = find_train_track(T, load_marking("parabolic.aut", T))
    red_ok = isinstance(cert, ReductionCertificate) and cert.invariant == ["a"] and cert.replay()
    swap_sigma = displacement(T, load_marking("swap.aut", T))[0]
    dt = time.perf_counter() - t0
    powers = {k: float(v) for k, v in sc.powers.items()}
    ok = poly_ok and lam_ok and tt_ok and sc.power_law and sc.minimal and red_ok and swap_sigma == 1
    report(7, ok, f"lambda={tt.lam:.12f} charpoly_ok={poly_ok} verified={tt_ok} powers={powers} "
                  f"minimal_over_{sc.trials}={sc.minimal} reduction={cert.invariant if red_ok else None} "
                  f"swap_sigma={swap_sigma} time={dt:.2f}s")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_criterion_8_index_invariant():
    rng = random.Random(8)
    instances = folds = bad = inv_bad = 0
    while instances < 50:
        g = random_finite_tree(rng)
        if has_nontrivial_integral_modulus(g):
            continue
        before = index_invariant(g).value
        applied = 0
        for e in g.edges:
            i = g.eindex[e.id]
            for rev in (False, True):
                G = g.groups[g.tail[2 * i + rev]]
                for x in range(getattr(G, "n", 1)):
                    try:
                        new, _ = type_IIA_fold(g, e.id, x, rev)
                    except (ElementAlreadyInEdgeGroup, NotRepresentable):
                        continue
                    applied += 1
                    if not index_invariant(new).value < before:
                        bad += 1
        if not applied:
            continue
        instances += 1
        folds += applied
        phi = random_automorphism(g, rng, steps=3)
        e = rng.choice(g.edges)
        sub, _ = subdivide_marked(g, e.id, e.length * Fraction(rng.randint(1, 4), 5))
        if index_invariant(twist(g, phi)[0]).value != before or index_invariant(sub).value != before:
            inv_bad += 1
    ok = bad == 0 and inv_bad == 0
    report(8, ok, f"instances={instances} folds={folds} non_decreasing={bad} invariance_failures={inv_bad}")
    assert ok
