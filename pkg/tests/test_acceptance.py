"""Acceptance gate: every criterion at its stated tolerance.

The suite mirrors `acfgm verify`.  Criterion 2b (the published trajectory
stepsize floor for the anchored variants) is a strict expected failure: the
claimed (15/16) k/(32 Lhat) bound contradicts the anchored stepsize recursion
itself (counterexample: constant curvature L, beta = 1/8, eta1 = 1 gives
eta_3 = 0.0677/L < 0.0879/L required).  The floor the recursion does imply is
asserted to hold instead.
"""

import pytest

from acfgm.harness.verify import run_acceptance


@pytest.fixture(scope="module")
def results():
    out = {}
    for r in run_acceptance():
        key = r.name.split()[0]
        out[key] = r
    return out


PASSING = ["1", "2a", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13"]


@pytest.mark.parametrize("key", PASSING)
def test_criterion(results, key):
    r = results[key]
    print(r.render())
    assert r.passed, r.render()


@pytest.mark.xfail(strict=True,
                   reason="published anchored-variant stepsize floor is "
                          "inconsistent with the anchored stepsize recursion; "
                          "see notes in the verify module")
def test_criterion_2b_published_anchored_floor(results):
    r = results["2b"]
    print(r.render())
    assert r.passed, r.render()


def test_criterion_2b_corrected_floor_holds(results):
    r = results["2b"]
    assert r.measured["provable_violations"] == 0
    assert r.known_fail  # the failure signature is the documented one
