import numpy as np
import pytest

from bloch_invariants.bands import (BasisSpec, BasisTooLarge, NonSimpleEigenvalue,
                                    UntrustedEigenvalue, assemble, assemble_and_solve,
                                    band_derivative, build_basis, default_window, fd_derivative,
                                    match_eigenvalue, model_eigs)
from bloch_invariants.hill import hill_solve
from bloch_invariants.lattice import lattice_points
from bloch_invariants.potential import FourierPotential, directional


def test_free_operator_exact(q0, dual):
    t = np.array([0.31, -0.17])
    band = assemble_and_solve(q0, t, BasisSpec("ball", radius=8))
    pts = lattice_points(dual.basis, 8.0 + 1)
    e = np.sort(((pts + t) ** 2).sum(1))
    e = e[np.sqrt(e) <= 8]
    assert np.abs(band.eigenvalues - e).max() <= 1e-12


def test_diffraction_plane_split(dual):
    # degenerate pair |t|^2 = |t - e1|^2 at t=(1/2, 0) couples through q_(1,0)
    eps = 0.05
    q = FourierPotential.from_modes(dual, [((1, 0), eps)])
    band = assemble_and_solve(q, (0.5, 0.0), BasisSpec("ball", radius=6))
    lo = band.eigenvalues[:2]
    two = np.linalg.eigvalsh(np.array([[0.25, eps], [eps, 0.25]]))
    assert np.isclose(lo[1] - lo[0], 2 * eps, atol=eps**2)
    assert np.abs(lo - two).max() < eps**2


def test_window_doubling_moves_trusted_little(q3):
    spec = BasisSpec("shell", radius=8, energy=120.0, window=60.0)
    band = assemble_and_solve(q3, (0.3, 10.9), spec, energy_range=(115, 125))
    big = assemble_and_solve(q3, (0.3, 10.9), spec.doubled(), energy_range=(114, 126),
                             trust=False)
    assert band.trusted.any()
    for w in band.eigenvalues[band.trusted]:
        assert np.abs(big.eigenvalues - w).min() <= 1e-8


def test_residual_and_order(q3):
    band = assemble_and_solve(q3, (0.1, 0.2), BasisSpec("ball", radius=7))
    assert np.all(np.diff(band.eigenvalues) >= 0)
    assert band.residual <= 1e-9


def test_separable_factorizes(gd, q_sep, dual):
    Q = directional(q_sep, (1, 0))
    v, tau = 0.3, 0.21
    h = hill_solve(Q, v, 40)
    t = np.array([v, tau])
    band = assemble_and_solve(q_sep, t, BasisSpec("ball", radius=9))
    model = np.sort([(m + tau) ** 2 + mu for m in range(-6, 7) for mu in h.sorted_mus()[:12]])
    assert np.abs(band.eigenvalues[:5] - model[:5]).max() <= 1e-8


def test_model_eigs(gd):
    from bloch_invariants.potential import DirectionalPotential
    h = hill_solve(DirectionalPotential({}), 0.3, 10)
    beta, tau = gd.point((12,)), gd.point((0.2,))
    m = model_eigs(h, beta, tau, [0, 1, 2])
    assert np.allclose(m, (12.2) ** 2 + (np.arange(3) + 0.3) ** 2)
    m2 = model_eigs(h, beta, gd.point((0.4,)), [0, 1, 2])
    assert np.allclose(m2 - m, 12.4**2 - 12.2**2)


def test_match_eigenvalue_free(q0):
    t = np.array([0.3, 0.2])
    band = assemble_and_solve(q0, t, BasisSpec("ball", radius=6))
    target = float(np.sum((np.array([2, 1]) + t) ** 2))
    m = match_eigenvalue(band, target, gap_min=1e-6)
    assert m.value == pytest.approx(target, abs=1e-12) and m.simple
    # t=0: |(1,0)|^2 = |(0,1)|^2 is degenerate
    band0 = assemble_and_solve(q0, (0.0, 0.0), BasisSpec("ball", radius=6))
    assert not match_eigenvalue(band0, 1.0, gap_min=1e-6).simple


def test_match_untrusted(q3):
    band = assemble_and_solve(q3, (0.1, 0.1), BasisSpec("ball", radius=3.2), trust_tol=1e-14)
    with pytest.raises(UntrustedEigenvalue):
        match_eigenvalue(band, band.eigenvalues[-1])


def test_free_derivative(q0):
    t = np.array([0.3, 0.2])
    band = assemble_and_solve(q0, t, BasisSpec("ball", radius=6))
    target = float(np.sum((np.array([2, 1]) + t) ** 2))
    N = match_eigenvalue(band, target, gap_min=1e-6).N
    h = np.array([0.6, 0.8])
    assert band_derivative(band, N, h, gap_min=1e-6) == pytest.approx(2 * (np.array([2.3, 1.2]) @ h))
    band0 = assemble_and_solve(q0, (0.0, 0.0), BasisSpec("ball", radius=6))
    with pytest.raises(NonSimpleEigenvalue):
        band_derivative(band0, 1, h, gap_min=1e-6)


def test_derivative_vs_fd(q3):
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 20:
        t = rng.uniform(-0.5, 0.5, 2)
        band = assemble_and_solve(q3, t, BasisSpec("ball", radius=7), trust=False)
        N = int(rng.integers(0, 30))
        if band.gaps()[N] <= 1e-3:
            continue
        h = rng.normal(size=2)
        h /= np.linalg.norm(h)
        hf = band_derivative(band, N, h, gap_min=1e-3)
        fd = fd_derivative(q3, band.basis, N, h)
        assert abs(hf - fd) <= 1e-6 * max(abs(hf), 1.0)
        checked += 1


def test_shell_matches_ball(q3):
    t = np.array([0.3, 8.1])
    E = float(t @ t)
    ball = assemble_and_solve(q3, t, BasisSpec("ball", radius=12, center=tuple(t)), trust=False)
    shell = assemble_and_solve(q3, t, BasisSpec("shell", radius=7, energy=E,
                                                       window=default_window(q3, E)),
                               energy_range=(E - 3, E + 3))
    sel = shell.eigenvalues[shell.trusted]
    assert len(sel) > 0
    for w in sel:
        assert np.abs(ball.eigenvalues - w).min() <= 1e-8


def test_gauge_covariance(q3):
    t = np.array([0.13, -0.41])
    g0 = np.array([3, -2])
    # a fixed centre keeps the same plane waves, re-indexed by -g0
    a = assemble_and_solve(q3, t, BasisSpec("ball", radius=6), trust=False)
    b = assemble_and_solve(q3, t + g0, BasisSpec("ball", radius=6), trust=False)
    assert np.abs(a.eigenvalues - b.eigenvalues).max() <= 1e-10


def test_weyl_monotone(q3):
    basis = build_basis(q3.dual, (0.2, 0.1), BasisSpec("ball", radius=5))
    H = assemble(q3, basis)
    v = np.random.default_rng(0).normal(size=len(H))
    lo = np.linalg.eigvalsh(H)
    hi = np.linalg.eigvalsh(H + np.outer(v, v))
    assert np.all(hi >= lo - 1e-12)


def test_basis_cap(q3):
    with pytest.raises(BasisTooLarge, match="cap|dimension|basis"):
        assemble_and_solve(q3, (0, 0), BasisSpec("ball", radius=40, max_dim=100))
