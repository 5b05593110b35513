import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import mathieu_a

from bloch_invariants.hill import (extract_I17_from_mu, fit_A_expansion, hill_matrix, hill_solve,
                                   moment, phi_sq_coeffs)
from bloch_invariants.potential import DirectionalPotential

COS = DirectionalPotential({1: 1.0, -1: 1.0})
ZERO = DirectionalPotential({})
MIXED = DirectionalPotential({1: 0.4, -1: 0.4, 2: 0.15 + 0.1j, -2: 0.15 - 0.1j})


def test_free_eigenvalues():
    h = hill_solve(ZERO, 0.25, 20)
    assert h.mu(1) == 1.5625
    for j in range(-10, 11):
        assert h.mu(j) == (j + 0.25) ** 2


def test_mathieu_ground_state():
    # -y'' + 2 cos(z) y = mu y is Mathieu's equation in x = z/2 with a = 4 mu, q = 4
    ref = mathieu_a(0, 4.0) / 4
    lo64 = hill_solve(COS, 0.0, 64).sorted_mus()[0]
    lo128 = hill_solve(COS, 0.0, 128).sorted_mus()[0]
    assert abs(lo64 - lo128) <= 1e-12
    assert abs(lo64 - ref) <= 1e-10
    assert abs(lo64 - (-1.0701297045756306)) <= 1e-12


def test_residual_and_labels():
    h = hill_solve(MIXED, 0.3, 40)
    H = hill_matrix(MIXED, 0.3, 40)
    for j in h.retained_labels:
        c = h.coeffs(j)
        assert np.linalg.norm(H @ c - h.mu(j) * c) <= 1e-10 * np.linalg.norm(H, 2)
        assert np.isclose(np.linalg.norm(c), 1)


def test_label_anchor_bounded_and_stable():
    def sup(N):
        h = hill_solve(MIXED, 0.3, N)
        return max(abs(n) * abs(h.mu(n) - (n + 0.3) ** 2)
                   for n in h.retained_labels if 10 <= abs(n) <= N // 2)
    s40, s80 = sup(40), sup(80)
    assert s40 < 1.0 and abs(s80 - s40) < 0.1 * s40 + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.49), st.floats(-1, 1), st.floats(-1, 1))
def test_floquet_symmetry(v, a, b):
    Q = DirectionalPotential({1: a, -1: a, 2: b, -2: b})
    s1 = hill_solve(Q, v, 30).sorted_mus()[:20]
    s2 = hill_solve(Q, 1 - v, 30).sorted_mus()[:20]
    assert np.allclose(s1, s2, atol=1e-10)


@pytest.mark.parametrize("v", [0.0, 0.5])
def test_interlacing_at_symmetric_points(v):
    per = hill_solve(COS, 0.0, 40).sorted_mus()
    anti = hill_solve(COS, 0.5, 40).sorted_mus()
    ours = per if v == 0.0 else anti
    # periodic: mu0 < (mu1-, mu1+) < (mu2-, mu2+) ...; antiperiodic pairs in between
    pairs = ours[1:21].reshape(10, 2) if v == 0.0 else ours[:20].reshape(10, 2)
    assert np.all(pairs[:, 0] <= pairs[:, 1])
    assert np.all(pairs[:-1, 1] <= pairs[1:, 0])
    other = anti if v == 0.0 else per
    assert np.all(np.diff(np.sort(np.concatenate([per[:21], anti[:20]]))) >= 0)
    assert len(other)


def test_doubled_levels_cluster_at_free_values():
    # for smooth Q the pair splits exponentially little and both sit above k^2
    # by the second-order shift; k^2 (mu - k^2) tends to the mean square / 4 = 1/2
    mus = hill_solve(COS, 0.0, 60).sorted_mus()
    for m in range(10, 40):
        k = m + 1
        lo, hi = mus[2 * m + 1], mus[2 * m + 2]
        assert 0 <= hi - lo < 1e-10
        assert abs(k**2 * (lo - k**2) - 0.5) < 1.0 / k**2


def test_phi_sq_free_and_hermitian():
    P = phi_sq_coeffs(hill_solve(ZERO, 0.3, 20), 2)
    assert P.as_dict(tol=1e-15) == {0: 1}
    P = phi_sq_coeffs(hill_solve(MIXED, 0.3, 30), 1)
    assert np.isclose(P[0], 1)
    for n in range(1, 6):
        assert np.isclose(P[-n], np.conj(P[n]), atol=1e-15)


def test_phi_sq_decay():
    h = hill_solve(COS, 0.3, 100)
    js = np.arange(10, 61)
    c1 = np.array([abs(phi_sq_coeffs(h, j)[1]) for j in js])
    slope = np.polyfit(np.log(js), np.log(c1), 1)[0]
    assert abs(slope + 2) < 0.05


def test_moment_examples_and_quadrature():
    h = hill_solve(MIXED, 0.3, 30)
    assert np.isclose(moment(h, 2, {0: 1.0}), 1)
    assert moment(hill_solve(ZERO, 0.3, 20), 2, {1: 0.5, -1: 0.5}) == 0
    # quadrature on 4096 points of |phi|^2 g with phi from its coefficients
    z = 2 * np.pi * np.arange(4096) / 4096
    c = h.coeffs(2)
    phi = np.exp(1j * np.outer(z, h.modes + 0.3)) @ c
    g = {1: 0.3 - 0.2j, -1: 0.3 + 0.2j, 3: 0.1, -3: 0.1}
    gz = sum(cn * np.exp(1j * n * z) for n, cn in g.items())
    quad = np.mean(np.abs(phi) ** 2 * gz).real
    assert abs(moment(h, 2, g) - quad) <= 1e-10


def test_A_expansion_free():
    A = fit_A_expansion(ZERO, 0.3, range(10, 61))
    assert np.isclose(A.coefficient(0, 0), 1)
    assert np.abs(A.A[1:]).max() < 1e-6  # roundoff of the 1/j design


def test_A_expansion_two_mode_structure():
    Q = DirectionalPotential({1: 0.4, -1: 0.4})
    A = fit_A_expansion(Q, 0.3, range(10, 61))
    scale = np.abs(A.A[2]).max()
    assert np.abs(A.A[1]).max() <= 1e-3 * scale


@pytest.mark.parametrize("dn", [1.0, np.sqrt(2.0)])
def test_A2_convention(dn):
    # the +1 mode of A_2 is q_delta / (2 |delta|^2)
    Q = DirectionalPotential({1: 0.4, -1: 0.4}, delta_norm=dn)
    A = fit_A_expansion(Q, 0.3, range(10, 61))
    assert abs(A.coefficient(2, 1) - 0.4 / (2 * dn**2)) <= 1e-6
    assert abs(A.constants["q2_times_delta_sq"] - 0.5) <= 1e-6


def test_A_expansion_rejects():
    with pytest.raises(ValueError):
        fit_A_expansion(COS, 0.5, range(10, 61))
    with pytest.raises(ValueError):
        fit_A_expansion(COS, 0.3, range(10, 14))
    with pytest.raises(np.linalg.LinAlgError):
        fit_A_expansion(COS, 0.3, range(10, 24), max_cond=10)


def test_I17_free_and_cos():
    assert abs(extract_I17_from_mu(ZERO, (10, 40)).estimate) < 1e-12
    f = extract_I17_from_mu(COS, (10, 40))
    assert abs(f.estimate - 2) <= 0.02 * 2


def test_I17_converges_with_range():
    errs = [abs(extract_I17_from_mu(COS, r).estimate - 2) for r in [(5, 10), (10, 20), (20, 40)]]
    assert errs[0] > errs[1] > errs[2]
