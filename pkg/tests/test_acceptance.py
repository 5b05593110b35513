"""Acceptance criteria at desk scale: d=2, cubic lattice, a few Fourier modes."""

import json
import time
from importlib import resources

import numpy as np
import pytest
from conftest import record

from bloch_invariants.bands import (BasisSpec, assemble_and_solve, band_derivative,
                                    default_window, fd_derivative)
from bloch_invariants.config import config_from_dict
from bloch_invariants.hill import extract_I17_from_mu, fit_A_expansion, hill_solve
from bloch_invariants.identities import check_identities, compare_C1
from bloch_invariants.invariants import (derive_I16_I20, extract_Jk_family, oracle_J,
                                         oracle_J_values)
from bloch_invariants.lattice import SelectionParams, lattice_points, select_beta
from bloch_invariants.pipeline import (DESK_SELECTION, PipelineSettings, extract_J, extract_mu,
                                       neighbour_separation, prepare_run, verdicts_A)
from bloch_invariants.potential import DirectionalPotential, directional, oracle_invariants

V = 0.3
B = (1,)


def hill_for(q, n=40):
    return hill_solve(directional(q, (1, 0)), V, n)


@pytest.fixture(scope="module")
def runs8(q3, gd):
    s = PipelineSettings(levels=2)
    return {j: prepare_run(q3, gd, B, j, V, 8, s) for j in (0, 1)}


@pytest.fixture(scope="module")
def runs16(q3, gd):
    s = PipelineSettings(levels=2)
    return {j: prepare_run(q3, gd, B, j, V, 16, s) for j in (0, 1)}


def test_criterion_01_free_operator(q0, gd, dual):
    t0 = time.perf_counter()
    t = np.array([0.27, -0.31])
    band = assemble_and_solve(q0, t, BasisSpec("ball", radius=10))
    pts = lattice_points(dual.basis, 11.0)
    e = np.sort(((pts + t) ** 2).sum(1))
    e = e[e <= 100]
    band_err = float(np.abs(band.eigenvalues - e).max())
    mu_err = 0.0
    for j in (0, 1, 2):
        run = prepare_run(q0, gd, B, j, V, 8, PipelineSettings())
        mu_err = max(mu_err, abs(extract_mu(run).value - (j + V) ** 2))
    dt = time.perf_counter() - t0
    ok = band_err <= 1e-12 and mu_err <= 1e-10 and dt < 10
    assert record(1, ok, f"bands {band_err:.1e}, mu {mu_err:.1e}, {dt:.1f} s")


def test_criterion_02_separable(q_sep, gd):
    t0 = time.perf_counter()
    h = hill_for(q_sep)
    worst = 0.0
    for j in (0, 1):
        run = prepare_run(q_sep, gd, B, j, V, 8, PipelineSettings(levels=2))
        est = extract_mu(run)
        worst = max(worst, max(abs(x - h.mu(j)) for x in est.per_level))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 120
    assert record(2, ok, f"max per-level |mu - mu_hill| {worst:.1e}, {dt:.1f} s")


def _median_gap(run, level, mu):
    vals = [abs(vd.value - (nd.bt @ nd.bt + mu))
            for nd, vd in zip(level.nodes, verdicts_A(run, level)) if vd.accepted is not None]
    return float(np.median(vals)), len(vals)


def test_criterion_03_model_eigenvalue_trend(runs8, q3):
    h = hill_for(q3)
    parts, ok = [], True
    for j, run in runs8.items():
        (m8, n8), (m16, n16) = (_median_gap(run, lv, h.mu(j)) for lv in run.levels)
        ok &= m16 < m8 and min(n8, n16) >= 20
        parts.append(f"j={j}: {m8:.1e} -> {m16:.1e} ({n8}/{n16} nodes)")
    assert record(3, ok, "median |Lambda - lambda| rho 8 -> 16: " + "; ".join(parts))


def test_criterion_04_second_order_equivalence(q3, gd):
    errs = []
    for rho in (8, 16):
        beta = select_beta(gd, B, V, SelectionParams(rho=rho, **DESK_SELECTION),
                           potential=q3).beta
        errs.append(compare_C1(q3, gd, beta, np.zeros(2), 0, V).rel_error)
    ok = errs[1] < errs[0] and errs[1] <= 0.10
    assert record(4, ok, f"C1 relative error rho 8: {errs[0]:.2e}, rho 16: {errs[1]:.2e}")


def test_criterion_05_identities(q3, gd):
    t0 = time.perf_counter()
    r = check_identities(q3, gd, samples=50, seed=0)
    dt = time.perf_counter() - t0
    ok = r.six_term_max <= 1e-12 and r.a9_max <= 1e-12 and dt < 60
    assert record(5, ok, f"six-term {r.six_term_max:.1e}, antisymmetry {r.a9_max:.1e}, "
                         f"50 samples, {dt:.1f} s")


def test_criterion_06_I17():
    Q = DirectionalPotential({1: 1.0, -1: 1.0})
    e20 = abs(extract_I17_from_mu(Q, (10, 20)).estimate - 2) / 2
    e40 = abs(extract_I17_from_mu(Q, (20, 40)).estimate - 2) / 2
    ok = e40 <= 0.02 and e40 < e20
    assert record(6, ok, f"relative error m in [10,20]: {e20:.1e}, m in [20,40]: {e40:.1e}")


def test_criterion_07_J(runs8, runs16, q3, gd):
    h = hill_for(q3)
    parts, ok = [], True
    for rho0, runs, tol in ((8, runs8, 0.10), (16, runs16, 0.05)):
        for j, run in runs.items():
            ref = oracle_J(q3, gd, B, j, V, hill=h)
            rel = abs(extract_J(run, mu=h.mu(j), mu_source="oracle").value - ref) / ref
            own = abs(extract_J(run).value - ref) / ref
            ok &= rel <= tol
            parts.append(f"rho0={rho0} j={j}: {rel:.3f} (extracted mu: {own:.3f})")
    assert record(7, ok, "J relative error with Hill mu: " + "; ".join(parts))


def test_criterion_08_expansion_structure(q3, gd):
    Q = directional(q3, (1, 0))
    A = fit_A_expansion(Q, V, range(10, 61))
    a_ratio = float(np.abs(A.A[1]).max() / np.abs(A.A[2]).max())
    fam = extract_Jk_family(oracle_J_values(q3, gd, B, range(10, 61), V))
    j_ratio = abs(fam[1]) / abs(fam[0])
    ok = a_ratio <= 1e-3 and j_ratio <= 1e-3
    assert record(8, ok, f"|A1|/|A2| {a_ratio:.1e}, |J1|/|J0| {j_ratio:.1e}")


def test_criterion_09_I16_I20_shipped_example():
    raw = json.loads(resources.files("bloch_invariants").joinpath(
        "examples/two_mode.json").read_text())
    cfg = config_from_dict(raw)
    jk = cfg["jk"]
    js = range(jk["j_min"], jk["j_max"] + 1)
    Q = directional(cfg.potential, cfg.delta)
    fam = extract_Jk_family(oracle_J_values(cfg.potential, cfg.gd, cfg.b, js, cfg["v"]),
                            order=jk["order"], extra_terms=jk["extra_terms"])
    A = fit_A_expansion(Q, cfg["v"], js, order=jk["order"], extra_terms=jk["extra_terms"])
    got = derive_I16_I20(fam, A, Q)
    o = oracle_invariants(cfg.potential, cfg.gd, cfg.b)
    e16, e20 = abs(got["I16"] - o.I16) / abs(o.I16), abs(got["I20"] - o.I20) / abs(o.I20)
    ok = e16 <= 0.05 and e20 <= 0.10
    assert record(9, ok, f"I16 relative error {e16:.1e}, I20 {e20:.1e}")


def test_criterion_10_derivative_contract(runs16, q3):
    rng = np.random.default_rng(10)
    worst, checked = 0.0, 0
    while checked < 20:
        bt = np.array([0.0, 16.0]) + rng.uniform(-0.5, 0.5, 2)
        E = float(bt @ bt)
        spec = BasisSpec("shell", radius=6, energy=E, window=default_window(q3, E))
        band = assemble_and_solve(q3, bt, spec, trust=False)
        near = np.flatnonzero(np.abs(band.eigenvalues - E) < 3)
        N = int(rng.choice(near))
        if band.gaps()[N] <= 1e-3:
            continue
        h = rng.normal(size=2)
        h /= np.linalg.norm(h)
        hf = band_derivative(band, N, h, gap_min=1e-3)
        fd = fd_derivative(q3, band.basis, N, h)
        worst = max(worst, abs(hf - fd) / max(abs(hf), 1.0))
        checked += 1
    h = hill_for(q3)
    mus = [h.mu(k) for k in range(-8, 9)]
    seps = {j: neighbour_separation(run, run.levels[0], mus) for j, run in runs16.items()}
    ok = worst <= 1e-6 and all(s.foreign >= 0.9 for s in seps.values())
    detail = "; ".join(f"j={j}: {s.foreign:.2f} of {s.accepted} (all neighbours {s.raw:.2f})"
                       for j, s in seps.items())
    assert record(10, ok, f"HF vs FD {worst:.1e} on 20 eigenvalues; separation at rho=16 "
                          + detail)
