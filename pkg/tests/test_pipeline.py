import numpy as np
import pytest

from bloch_invariants.hill import hill_solve
from bloch_invariants.invariants import oracle_J
from bloch_invariants.lattice import SelectionParams
from bloch_invariants.pipeline import (AcceptanceError, NodeSolve, PipelineSettings, classify_A,
                                       classify_B, extract_J, extract_mu, neighbour_separation,
                                       oracle_estimate, prepare_run, richardson, tau_grid,
                                       verdicts_A, window_labels)
from bloch_invariants.potential import FourierPotential, directional

FAST = dict(n_tau=16)


@pytest.fixture(scope="module")
def run_q3(q3, gd):
    return prepare_run(q3, gd, (1,), 0, 0.3, 8, PipelineSettings(levels=3, n_tau=32))


def test_tau_grid(gd):
    taus, w = tau_grid(gd, 64)
    assert np.isclose(w.sum(), gd.fd_volume)
    c = gd.coordinates(taus)
    assert np.all(np.abs(c) < 0.5)


def test_window_labels():
    assert window_labels(1, 0.3, 1.0) == [1]
    assert window_labels(0, 0.3, 1.0) == [0, -1]
    assert window_labels(5, 0.3, 0.5) == [5]


def test_richardson_generalizes():
    s = np.array([8.0, 16.0, 32.0])
    y = 2.0 + 3 / s**2 - 5 / s**3
    assert np.isclose(richardson(y, s, 2), 2.0, atol=1e-13)
    assert np.isclose(richardson(y[:2] * 0 + 1 + 1 / s[:2] ** 2, s[:2], 2), 1.0)
    assert richardson([4.0], [8.0], 2) == 4.0


def test_settings_validation():
    with pytest.raises(ValueError):
        PipelineSettings(resolve="guess")
    with pytest.raises(ValueError):
        PipelineSettings(normalize="nowhere")


def test_free_classifier_exact(q0, gd):
    run = prepare_run(q0, gd, (1,), 1, 0.3, 8, PipelineSettings(**FAST))
    for lv in run.levels:
        for nd, vd in zip(lv.nodes, verdicts_A(run, lv)):
            assert vd.accepted is not None
            assert vd.value == pytest.approx(nd.bt @ nd.bt + 1.3**2, abs=1e-10)
            assert nd.derivs[vd.accepted] == pytest.approx(nd.bt @ nd.bt, abs=1e-9)


def test_degenerate_node_rejected():
    bt = np.array([0.0, 12.0])
    e = bt @ bt + 0.09
    node = NodeSolve(tau=np.zeros(2), bt=bt, t=bt, eigenvalues=np.array([e, e]),
                     derivs=np.array([np.nan, np.nan]), gaps=np.zeros(2),
                     trusted=np.ones(2, bool), gap_min=1e-6, dim=2)
    vd = classify_A(node, 0, 0.3, 1.0, SelectionParams(rho=8), resolve="drop")
    assert vd.accepted is None and vd.reason == "simple"
    vd = classify_B(node, 0.09, SelectionParams(rho=8))
    assert vd.accepted is None


def test_ambiguous_drop_vs_rank():
    bt = np.array([0.0, 12.0])
    b2 = bt @ bt
    # the states of labels 0 and -1 both in the unit window with matching derivatives
    node = NodeSolve(tau=np.zeros(2), bt=bt, t=bt,
                     eigenvalues=np.array([b2 + 0.05, b2 + 0.5]),
                     derivs=np.array([b2, b2]), gaps=np.array([0.45, 0.45]),
                     trusted=np.ones(2, bool), gap_min=1e-6, dim=2)
    p = SelectionParams(rho=8)
    drop = classify_A(node, 0, 0.3, 1.0, p, resolve="drop")
    assert drop.accepted is None and drop.ambiguous
    rank0 = classify_A(node, 0, 0.3, 1.0, p, resolve="rank")
    rank1 = classify_A(node, -1, 0.3, 1.0, p, resolve="rank")
    assert (rank0.accepted, rank1.accepted) == (0, 1)
    assert rank0.reason == "accepted-by-rank"


def test_incomplete_window_rejected():
    bt = np.array([0.0, 12.0])
    b2 = bt @ bt
    # only one passing state although two labels share the window
    node = NodeSolve(tau=np.zeros(2), bt=bt, t=bt, eigenvalues=np.array([b2 + 0.05, b2 + 0.5]),
                     derivs=np.array([b2, np.nan]), gaps=np.array([0.45, 1e-9]),
                     trusted=np.ones(2, bool), gap_min=1e-6, dim=2)
    vd = classify_A(node, -1, 0.3, 1.0, SelectionParams(rho=8))
    assert vd.accepted is None and vd.reason == "incomplete"


def test_classifier_soundness(run_q3):
    # no accepted node has a second passing index unless resolved by rank
    for lv in run_q3.levels:
        for vd in verdicts_A(run_q3, lv):
            if vd.accepted is not None and vd.reason == "accepted":
                assert len(vd.passing) == 1


def test_acceptance_grows_with_rho(dual, gd):
    q = FourierPotential.from_modes(dual, [((1, 0), 0.1), ((0, 1), 0.1), ((1, 1), 0.05)])
    run = prepare_run(q, gd, (1,), 0, 0.3, 8, PipelineSettings(levels=3, n_tau=32))
    acc = extract_mu(run).acceptance
    assert acc[0] <= acc[1] <= acc[2] and acc[-1] == 1.0


def test_free_mu(q0, gd):
    run = prepare_run(q0, gd, (1,), 2, 0.3, 8, PipelineSettings(**FAST))
    assert extract_mu(run).value == pytest.approx(2.3**2, abs=1e-10)


def test_generic_mu_converges(run_q3, q3):
    est = extract_mu(run_q3)
    ref = hill_solve(directional(q3, (1, 0)), 0.3, 40).mu(0)
    errs = [abs(x - ref) for x in est.per_level]
    assert errs[0] > errs[1] > errs[2]
    assert abs(est.value - ref) <= 5e-2 * abs(ref)
    assert est.error_proxy == pytest.approx(abs(est.per_level[-1] - est.per_level[-2]))
    assert len(est.rho_schedule) == 3 and est.method == "pipeline"


def test_J_zero_without_plane_support(q_sep, gd):
    run = prepare_run(q_sep, gd, (1,), 1, 0.3, 8, PipelineSettings(**FAST))
    mu = hill_solve(directional(q_sep, (1, 0)), 0.3, 40).mu(1)
    est = extract_J(run, mu=mu, mu_source="oracle")
    assert abs(est.value) < 1e-8
    assert est.notes["mu_source"] == "oracle"


def test_J_with_oracle_mu_close(run_q3, q3, gd):
    mu = hill_solve(directional(q3, (1, 0)), 0.3, 40).mu(0)
    est = extract_J(run_q3, mu=mu, mu_source="oracle")
    ref = oracle_J(q3, gd, (1,), 0, 0.3)
    assert abs(est.value - ref) <= 0.05 * ref


def test_acceptance_error(q3, gd):
    run = prepare_run(q3, gd, (1,), 0, 0.3, 8,
                      PipelineSettings(n_tau=8, levels=1, window=1e-9))
    with pytest.raises(AcceptanceError) as e:
        extract_mu(run)
    assert "window" in e.value.counts or e.value.counts


def test_B_window_failure_counts(q3, gd):
    run = prepare_run(q3, gd, (1,), 0, 0.3, 8, PipelineSettings(n_tau=8, levels=1))
    with pytest.raises(AcceptanceError):
        extract_J(run, mu=1e3)


def test_oracle_estimate():
    e = oracle_estimate("I17", 2.0, source="parseval")
    assert e.method == "oracle" and e.rho_schedule == () and e.per_level == ()


def test_determinism_across_threads(q3, gd):
    a = prepare_run(q3, gd, (1,), 0, 0.3, 8, PipelineSettings(n_tau=8, threads=1))
    b = prepare_run(q3, gd, (1,), 0, 0.3, 8, PipelineSettings(n_tau=8, threads=3))
    assert extract_mu(a).per_level == extract_mu(b).per_level


def test_neighbour_separation(run_q3, q3):
    h = hill_solve(directional(q3, (1, 0)), 0.3, 40)
    sep = neighbour_separation(run_q3, run_q3.levels[1], [h.mu(k) for k in range(-6, 7)])
    assert sep.accepted > 0 and 0 <= sep.raw <= sep.foreign <= 1
