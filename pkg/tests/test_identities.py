import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bloch_invariants.hill import hill_solve
from bloch_invariants.identities import (DegenerateGeometry, a9_pair, check_identities,
                                         compare_C1, gamma_of, quarter_integral,
                                         second_order_sum, six_term_residual, six_term_terms)
from bloch_invariants.lattice import SelectionParams, select_beta
from bloch_invariants.pipeline import DESK_SELECTION
from bloch_invariants.potential import FourierPotential, directional

vec = st.lists(st.integers(-20, 20), min_size=3, max_size=3)


def test_six_term_axis_example_is_degenerate():
    # (7,0,0) is orthogonal to (0,1,0): a denominator vanishes
    with pytest.raises(DegenerateGeometry):
        six_term_terms((7, 0, 0), (0, 1, 0), (1, 0, 0))


def test_six_term_example():
    assert six_term_residual((7, 2, 0), (0, 1, 0), (1, 0, 0)) <= 1e-14


@settings(max_examples=300, deadline=None)
@given(vec, vec, vec)
def test_six_term_property(b, b1, b2):
    b, b1, b2 = map(np.array, (b, b1, b2))
    x, y = b @ b1, b @ b2
    assume(min(abs(x), abs(y), abs(x + y)) >= 1)
    assert six_term_residual(b, b1, b2) <= 1e-12


def test_gamma_of_round_trip(gd):
    g = gamma_of(gd, (2,), 1)
    assert g == (1, 2)
    with pytest.raises(ValueError):
        gamma_of(gd, (2,), 0.5)


def test_a9_one_mode_cancels(dual, gd):
    q = FourierPotential.from_modes(dual, [((0, 1), 0.7 + 0.2j), ((1, 0), 0.4)])
    h = hill_solve(directional(q, (1, 0)), 0.3, 30)
    t1, t2 = a9_pair(q, gd, h, (11,), (1,), 0, 0, 1, 1)
    assert t1 != 0 and t1 + t2 == 0
    with pytest.raises(DegenerateGeometry):
        a9_pair(q, gd, h, (0,), (1,), 0, 0, 1, 1)


def test_check_identities(q3, gd):
    r = check_identities(q3, gd, samples=50, seed=5)
    assert r.six_term_ok and r.a9_ok and r.samples == 50 and r.seed == 5
    d = r.as_dict()
    assert d["seed"] == 5 and d["six_term_ok"]


def test_check_identities_seeded(q3, gd):
    a = check_identities(q3, gd, samples=20, seed=1).as_dict()
    b = check_identities(q3, gd, samples=20, seed=1).as_dict()
    assert a == b


def test_C1_trend(q3, gd):
    betas = [select_beta(gd, (1,), 0.3, SelectionParams(rho=r, **DESK_SELECTION),
                         potential=q3).beta for r in (8, 16)]
    errs = [compare_C1(q3, gd, b, np.zeros(2), 0, 0.3).rel_error for b in betas]
    assert errs[1] < errs[0] and errs[1] <= 0.10


def test_quarter_integral_sign_and_second_order(q3, gd):
    beta, tau = (26,), np.zeros(2)
    qi = quarter_integral(q3, gd, beta, tau, 1, 0.3)
    assert qi > 0
    assert second_order_sum(q3, gd, beta, tau, 1, 0.3) == pytest.approx(qi, rel=0.1)
