"""Estimator-style wrappers around the solvers.

Each estimator is configured by constructor parameters only, learns from a
potential in ``fit`` and answers queries in ``predict``/``transform``, so the
objects clone, compare and print like any scikit-learn estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bands import BasisSpec, assemble_and_solve, default_window
from .hill import hill_solve, phi_sq_coeffs
from .invariants import oracle_J
from .lattice import LatticeBasis, gamma_delta
from .pipeline import PipelineSettings, extract_J, extract_mu, prepare_run
from .potential import DirectionalPotential, FourierPotential, directional

__all__ = ["HillSolver", "BandSolver", "InvariantExtractor"]


def _labels(j) -> np.ndarray:
    return check_array(np.asarray(j).reshape(-1, 1), dtype=np.int64).ravel()


class HillSolver(BaseEstimator):
    """Eigenvalues mu_j(v) and |phi_j|^2 modes of the directional operator.

    ``fit`` takes a DirectionalPotential; ``predict`` maps labels to mu_j(v);
    ``transform`` maps labels to the Fourier modes -n_modes..n_modes of |phi_j|^2.
    """

    def __init__(self, v: float = 0.3, truncation: int | None = None, n_modes: int = 2):
        self.v = v
        self.truncation = truncation
        self.n_modes = n_modes

    def fit(self, Q: DirectionalPotential, y=None, max_label: int = 40):
        if not isinstance(Q, DirectionalPotential):
            raise TypeError("HillSolver.fit expects a DirectionalPotential")
        N = self.truncation or max_label + 4 * max(Q.bandwidth, 1) + 24
        self.spectrum_ = hill_solve(Q, self.v, N)
        self.labels_ = np.array(self.spectrum_.retained_labels)
        return self

    def predict(self, j) -> np.ndarray:
        check_is_fitted(self, "spectrum_")
        return np.array([self.spectrum_.mu(int(k)) for k in _labels(j)])

    def transform(self, j) -> np.ndarray:
        check_is_fitted(self, "spectrum_")
        K = self.n_modes
        rows = []
        for k in _labels(j):
            P = phi_sq_coeffs(self.spectrum_, int(k))
            rows.append([P[m] for m in range(-K, K + 1)])
        return np.array(rows)


class BandSolver(BaseEstimator):
    """Band functions Lambda_N(t) on a plane-wave basis.

    With ``window=None`` a ball of radius ``radius`` is used and ``predict``
    returns the lowest ``n_bands`` eigenvalues for every row of quasimomenta.
    Otherwise each row is solved on an energy shell at |t|^2 (or ``energy``)
    and the ``n_bands`` eigenvalues nearest that energy are returned; a
    non-positive ``window`` picks the default shell width.
    """

    def __init__(self, radius: float = 8.0, window: float | None = None,
                 energy: float | None = None, n_bands: int = 10, max_dim: int = 6000,
                 trust: bool = False):
        self.radius = radius
        self.window = window
        self.energy = energy
        self.n_bands = n_bands
        self.max_dim = max_dim
        self.trust = trust

    def fit(self, q: FourierPotential, y=None):
        if not isinstance(q, FourierPotential):
            raise TypeError("BandSolver.fit expects a FourierPotential")
        self.potential_ = q
        self.n_features_in_ = q.dim
        return self

    def _solve(self, t):
        q = self.potential_
        if self.window is None:
            spec = BasisSpec("ball", radius=self.radius, max_dim=self.max_dim)
            band = assemble_and_solve(q, t, spec, trust=self.trust)
            return band.eigenvalues[: self.n_bands]
        e = float(t @ t) if self.energy is None else self.energy
        w = self.window if self.window > 0 else default_window(q, e)
        spec = BasisSpec("shell", radius=self.radius, energy=e, window=w, max_dim=self.max_dim)
        band = assemble_and_solve(q, t, spec, trust=self.trust)
        near = np.sort(np.argsort(np.abs(band.eigenvalues - e))[: self.n_bands])
        return band.eigenvalues[near]

    def predict(self, T) -> np.ndarray:
        check_is_fitted(self, "potential_")
        T = check_array(T, dtype=float, ensure_min_features=self.n_features_in_)
        if T.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} components per quasimomentum")
        rows = [self._solve(t) for t in T]
        n = min(len(r) for r in rows)
        return np.array([r[:n] for r in rows])


class InvariantExtractor(BaseEstimator):
    """Recover mu_j(v) and J(delta, b, j, v) from band functions.

    ``fit`` stores the potential and the lattice geometry; ``predict`` runs the
    extraction for each label and returns ``(mu, J)`` columns.  ``oracle``
    gives the Fourier-side values for the same labels.  With
    ``mu_source="oracle"`` J subtracts the Hill eigenvalue instead of the
    extracted mu.
    """

    def __init__(self, omega=None, delta=(1, 0), b=(1,), v: float = 0.3, rho0: float = 8.0,
                 levels: int = 2, slack: float = 4.0, n_tau: int = 64,
                 mu_source: str = "pipeline"):
        self.omega = omega
        self.delta = delta
        self.b = b
        self.v = v
        self.rho0 = rho0
        self.levels = levels
        self.slack = slack
        self.n_tau = n_tau
        self.mu_source = mu_source

    def fit(self, q: FourierPotential, y=None):
        if self.mu_source not in ("pipeline", "oracle"):
            raise ValueError("mu_source must be 'pipeline' or 'oracle'")
        omega = self.omega
        if omega is None:
            # period lattice paired with the potential's dual lattice
            omega = LatticeBasis(2 * np.pi * np.linalg.inv(q.dual.basis).T)
        self.potential_ = q
        self.gd_ = gamma_delta(q.dual, omega, tuple(self.delta))
        self.settings_ = PipelineSettings(slack=self.slack, levels=self.levels, n_tau=self.n_tau)
        self.runs_ = {}
        return self

    def _estimate(self, j: int):
        if j not in self.runs_:
            run = prepare_run(self.potential_, self.gd_, self.b, j, self.v, self.rho0,
                              self.settings_)
            mu = extract_mu(run)
            sub = mu.value
            if self.mu_source == "oracle":
                Q = directional(self.potential_, self.gd_.delta)
                sub = hill_solve(Q, self.v, abs(j) + 4 * max(Q.bandwidth, 1) + 24).mu(j)
            self.runs_[j] = (mu, extract_J(run, mu=sub, mu_source=self.mu_source))
        return self.runs_[j]

    def predict(self, j) -> np.ndarray:
        check_is_fitted(self, "potential_")
        return np.array([[e.value for e in self._estimate(int(k))] for k in _labels(j)])

    def oracle(self, j) -> np.ndarray:
        check_is_fitted(self, "potential_")
        Q = directional(self.potential_, self.gd_.delta)
        out = []
        for k in _labels(j):
            h = hill_solve(Q, self.v, abs(int(k)) + 4 * max(Q.bandwidth, 1) + 24)
            out.append([h.mu(int(k)),
                        oracle_J(self.potential_, self.gd_, self.b, int(k), self.v, hill=h)])
        return np.array(out)
