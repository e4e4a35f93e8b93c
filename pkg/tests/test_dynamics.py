import math
import random
from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

from gogmetric.dynamics import (
    ReductionCertificate, TrainTrackMap, Unknown, classify, displacement, find_train_track, minimality_spotcheck,
    pf_metric, power_marking, rebalance_step, rose_representative, strongly_connected, thin_core,
    verify_train_track,
)
from gogmetric.samples import barbell, random_automorphism, random_lengths, rose, theta
from _support import load_marking

GOLDEN = (1 + math.sqrt(5)) / 2


def aut(name, T=None):
    T = T or rose(2)
    return T, load_marking(f"{name}.aut", T)


def test_pf_metric_golden_matrix():
    pf = pf_metric(np.array([[0, 1], [1, 1]]))
    assert abs(pf.lam - GOLDEN) < 1e-12
    assert abs(pf.lam**2 - pf.lam - 1) < 1e-12
    assert pf.lam_exact is None


def test_pf_metric_integer_eigenvalue():
    pf = pf_metric(np.array([[2, 1], [1, 2]]))
    assert pf.lam_exact == 3
    assert pf.lengths[0] == pf.lengths[1]


def test_strong_connectivity():
    assert strongly_connected(np.array([[0, 1], [1, 1]]))
    assert not strongly_connected(np.array([[1, 0], [1, 1]]))


def test_rose_representative_transition_matrix():
    T, phi = aut("golden")
    top, R, _ = rose_representative(T, phi)
    assert sorted(top.transition_matrix().sum(axis=0).tolist()) == [1, 2]


def test_golden_train_track():
    T, phi = aut("golden")
    tt = find_train_track(T, phi)
    assert isinstance(tt, TrainTrackMap)
    assert abs(tt.lam - GOLDEN) < 1e-9
    assert verify_train_track(tt).ok
    sc = minimality_spotcheck(tt, k=3, trials=10)
    assert sc.power_law and sc.minimal


def test_parabolic_reduction():
    T, phi = aut("parabolic")
    cert = find_train_track(T, phi)
    assert isinstance(cert, ReductionCertificate)
    assert cert.invariant == ["a"] and cert.replay()
    rep = classify(T, phi)
    assert rep.classification == "ParabolicSuspected"


def test_swap_is_elliptic():
    T, phi = aut("swap")
    assert displacement(T, phi)[0] == 1
    rep = classify(T, phi)
    assert rep.classification == "Elliptic"


def test_zero_budget_is_unknown():
    T, phi = aut("golden")
    trace = []
    out = find_train_track(T, phi, budget=0, trace=trace)
    assert isinstance(out, Unknown) and trace[-1]["event"] == "budget"


def test_power_marking_composes():
    T, phi = aut("golden")
    s1 = displacement(T, phi)[0]
    s2 = displacement(T, power_marking(phi, 2))[0]
    assert s2 <= s1 * s1


def test_thin_core_short_loop():
    T = rose(2, [Fraction(1, 20), Fraction(19, 20)])
    assert thin_core(T, Fraction(1, 10)) == frozenset({"a"})
    assert thin_core(T, Fraction(1, 100)) == frozenset()


def test_rebalance_does_not_increase_displacement():
    T, phi = aut("golden")
    T0 = T.with_lengths([Fraction(1, 5), Fraction(4, 5)])
    phi0 = load_marking("golden.aut", T0)
    T1 = rebalance_step(T0, phi0)
    phi1 = load_marking("golden.aut", T1)
    assert displacement(T1, phi1)[0] <= displacement(T0, phi0)[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_random_outcomes_are_certified(k, seed):
    rng = random.Random(seed)
    T = random_lengths([rose(2), theta(), barbell()][k], rng)
    phi = random_automorphism(T, rng, steps=rng.randint(2, 5))
    out = find_train_track(T, phi)
    if isinstance(out, TrainTrackMap):
        assert verify_train_track(out).ok
        assert displacement(T, phi)[0] >= out.lam - 1e-9
    elif isinstance(out, ReductionCertificate):
        assert out.replay()
    else:
        assert isinstance(out, Unknown) and out.reason
