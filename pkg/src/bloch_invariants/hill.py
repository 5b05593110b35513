"""The one-dimensional operator -|delta|^2 y'' + Q y with Floquet parameter v.

Eigenfunctions are expanded in exp(i (n + v) zeta), n = -N..N, and normalized
with respect to d zeta / (2 pi).  Each eigenpair carries an integer label j,
the index of its dominant Fourier coefficient, so that mu_j(v) tends to
|(j + v) delta|^2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .potential import DirectionalPotential

__all__ = [
    "HillSpectrum",
    "HillLabelError",
    "PhiSquared",
    "AExpansion",
    "I17Fit",
    "hill_matrix",
    "hill_solve",
    "phi_sq_coeffs",
    "moment",
    "fit_A_expansion",
    "extract_I17_from_mu",
]


class HillLabelError(RuntimeError):
    """Eigenpairs could not be labeled consistently; increase the truncation."""


def hill_matrix(Q: DirectionalPotential, v: float, N: int) -> np.ndarray:
    n = np.arange(-N, N + 1)
    real = all(c.imag == 0 for c in Q.coeffs.values())
    H = np.diag(Q.delta_norm**2 * (n + v) ** 2).astype(float if real else complex)
    for m, c in Q.coeffs.items():
        if abs(m) <= 2 * N:
            # H[n, n'] = Q_{n - n'}: entry on the m-th subdiagonal
            H += (c.real if real else c) * np.eye(2 * N + 1, k=-m)
    return H


@dataclass(frozen=True, eq=False)
class HillSpectrum:
    """Labeled eigenpairs of the truncated Hill operator."""

    v: float
    delta_norm: float
    truncation: int
    modes: np.ndarray  # n = -N..N
    labels: np.ndarray  # label of column i
    mus: np.ndarray  # eigenvalue of column i (ascending)
    vectors: np.ndarray  # columns are eigenvectors
    retained: np.ndarray  # bool per column
    residual: float = field(default=0.0)
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index.update({int(j): i for i, j in enumerate(self.labels)})

    def __contains__(self, j) -> bool:
        i = self._index.get(int(j))
        return i is not None and bool(self.retained[i])

    def _col(self, j) -> int:
        i = self._index.get(int(j))
        if i is None or not self.retained[i]:
            raise KeyError(f"label {j} not retained (truncation N={self.truncation})")
        return i

    def mu(self, j: int) -> float:
        return float(self.mus[self._col(j)])

    def coeffs(self, j: int) -> np.ndarray:
        return self.vectors[:, self._col(j)]

    @property
    def retained_labels(self) -> list[int]:
        return sorted(int(j) for j, r in zip(self.labels, self.retained) if r)

    @property
    def pairs(self) -> dict[int, tuple[float, np.ndarray]]:
        return {j: (self.mu(j), self.coeffs(j)) for j in self.retained_labels}

    def sorted_mus(self) -> np.ndarray:
        """Retained eigenvalues in ascending order (labels ignored)."""
        return np.sort(self.mus[self.retained])


def _dominant_labels(vectors: np.ndarray, modes: np.ndarray) -> np.ndarray:
    mag = np.abs(vectors)
    top = mag.max(axis=0)
    labels = np.empty(vectors.shape[1], dtype=int)
    for i in range(vectors.shape[1]):
        cand = modes[mag[:, i] >= top[i] * (1 - 1e-9)]
        labels[i] = min(cand, key=lambda n: (abs(n), n))
    return labels


def hill_solve(Q: DirectionalPotential, v: float, N: int) -> HillSpectrum:
    """Diagonalize the Galerkin matrix and label eigenpairs.

    Labels come from the dominant coefficient; if two eigenvectors claim the
    same label, all labels are reassigned by matching eigenvalues to the
    unperturbed values |delta|^2 (n + v)^2, with eigenvector weight breaking
    ties between degenerate pairs.
    """
    if N < Q.bandwidth + 8:
        raise ValueError(f"truncation N={N} must exceed the bandwidth {Q.bandwidth} by at least 8")
    if not 0 <= v < 1:
        raise ValueError("v must lie in [0, 1)")
    modes = np.arange(-N, N + 1)
    H = hill_matrix(Q, v, N)
    mus, vecs = sla.eigh(H)
    labels = _dominant_labels(vecs, modes)
    if len(set(labels.tolist())) != len(labels):
        free = Q.delta_norm**2 * (modes + v) ** 2
        # eigenvalue distance decides; eigenvector weight breaks near-ties
        cost = np.abs(mus[:, None] - free[None, :]) - 1e-6 * np.abs(vecs.T) ** 2
        rows, cols = linear_sum_assignment(cost)
        labels = np.empty_like(labels)
        labels[rows] = modes[cols]
        weight = np.abs(vecs[labels + N, np.arange(len(labels))])
        bad = weight < 1e-3
        if bad.any():
            raise HillLabelError(
                f"labels {labels[bad].tolist()} have no weight on their own mode; "
                f"increase N beyond {N}")
    edge = 4 * max(Q.bandwidth, 1) + 4
    retained = np.abs(labels) <= N - edge
    scale = max(np.abs(H).max(), 1.0)
    res = np.linalg.norm(H @ vecs - vecs * mus, axis=0).max() / scale
    return HillSpectrum(v=float(v), delta_norm=Q.delta_norm, truncation=N, modes=modes,
                        labels=labels, mus=mus, vectors=vecs, retained=retained,
                        residual=float(res))


@dataclass(frozen=True, eq=False)
class PhiSquared:
    """Fourier coefficients of |phi|^2 on modes -2N..2N."""

    values: np.ndarray
    offset: int

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.offset, len(self.values) - self.offset)

    def __getitem__(self, n: int) -> complex:
        i = int(n) + self.offset
        return complex(self.values[i]) if 0 <= i < len(self.values) else 0.0j

    def as_dict(self, tol: float = 0.0) -> dict[int, complex]:
        return {int(n): complex(c) for n, c in zip(self.modes, self.values) if abs(c) > tol}


def phi_sq_coeffs(spec: HillSpectrum, j: int) -> PhiSquared:
    c = spec.coeffs(j)
    # P_k = sum_n c_{n+k} conj(c_n)
    P = np.correlate(c, c, mode="full")
    return PhiSquared(P, len(c) - 1)


def moment(spec: HillSpectrum, j: int, g: Mapping[int, complex]) -> float:
    """Normalized integral of g(zeta) |phi_j(zeta)|^2 over one period."""
    P = phi_sq_coeffs(spec, j)
    return float(sum(c * np.conj(P[n]) for n, c in g.items()).real)


# --------------------------------------------------------------------------
# large-label expansions


def _design(js: np.ndarray, n_terms: int, scale: float) -> np.ndarray:
    x = scale / js.astype(float)
    return np.vander(x, n_terms, increasing=True)


@dataclass(frozen=True, eq=False)
class AExpansion:
    """Mode-wise coefficients of |phi_j|^2 = sum_k A_k / j^k.

    ``A[k, m + offset]`` is the coefficient of exp(i m zeta) in A_k.
    ``constants`` holds, for a potential with modes +-1 only, the fitted
    scalars: ``q2`` (coefficient of q^delta in A_2), ``a1`` .. ``a6`` and
    ``q2_times_delta_sq`` (the same coefficient in units of 1/|delta|^2).
    """

    A: np.ndarray
    offset: int
    js: np.ndarray
    cond: float
    n_terms: int
    constants: dict

    def coefficient(self, k: int, mode: int) -> complex:
        i = mode + self.offset
        return complex(self.A[k, i]) if 0 <= i < self.A.shape[1] else 0.0j

    def term(self, k: int) -> dict[int, complex]:
        return {m - self.offset: complex(c) for m, c in enumerate(self.A[k]) if c != 0}


def _lstsq_by_powers(js: np.ndarray, data: np.ndarray, n_terms: int, max_cond: float):
    """Fit data[:, ...] ~ sum_k C_k / j^k; return C (n_terms, ...) and condition number."""
    scale = float(js.min())
    X = _design(js, n_terms, scale)
    cond = float(np.linalg.cond(X))
    if cond > max_cond:
        raise np.linalg.LinAlgError(
            f"ill-conditioned expansion fit (condition number {cond:.3g}); widen the label range")
    sol, *_ = np.linalg.lstsq(X, data.reshape(len(js), -1), rcond=None)
    powers = scale ** np.arange(n_terms)
    return (sol * powers[:, None]).reshape((n_terms,) + data.shape[1:]), cond


def fit_A_expansion(Q: DirectionalPotential, v: float, j_range: Iterable[int],
                    order: int = 4, extra_terms: int = 3, N: int | None = None,
                    max_modes: int | None = None, max_cond: float = 1e10) -> AExpansion:
    """Least-squares fit of every |phi_j|^2 coefficient in powers of 1/j.

    ``extra_terms`` higher powers are fitted alongside and discarded so that
    the reported orders are not polluted by truncation of the series.
    """
    js = np.array(sorted(set(int(j) for j in j_range)))
    if len(js) == 0 or np.abs(js).min() < 1:
        raise ValueError("labels must be nonzero")
    if v in (0.0, 0.5):
        raise ValueError("v must avoid 0 and 1/2 (degenerate labels)")
    n_terms = order + 1 + extra_terms
    if len(js) < n_terms + 2:
        raise ValueError(f"need at least {n_terms + 2} labels for {n_terms} terms")
    N = N or int(np.abs(js).max() + 4 * max(Q.bandwidth, 1) + 24)
    spec = hill_solve(Q, v, N)
    K = max_modes if max_modes is not None else 2 * max(Q.bandwidth, 1) * (order // 2 + 1)
    data = np.empty((len(js), 2 * K + 1), dtype=complex)
    for r, j in enumerate(js):
        P = phi_sq_coeffs(spec, int(j))
        data[r] = [P[m] for m in range(-K, K + 1)]
    C, cond = _lstsq_by_powers(js, data, n_terms, max_cond)
    A = C[: order + 1]
    constants = {}
    if Q.is_two_mode and order >= 2:
        q1, q1sq = Q[1], abs(Q[1]) ** 2
        get = lambda k, m: A[k, m + K] if k <= order else np.nan  # noqa: E731
        constants = {
            "q2": (get(2, 1) / q1).real,
            "q2_times_delta_sq": (get(2, 1) / q1).real * Q.delta_norm**2,
            "a1": (get(2, 0) / q1sq).real,
        }
        if order >= 3:
            constants.update(a2=(get(3, 1) / q1).real, a3=(get(3, 0) / q1sq).real)
        if order >= 4:
            constants.update(a4=(get(4, 1) / q1).real, a5=(get(4, 2) / q1**2).real,
                             a6=get(4, 0).real)
    return AExpansion(A=A, offset=K, js=js, cond=cond, n_terms=n_terms, constants=constants)


@dataclass(frozen=True)
class I17Fit:
    estimate: float
    C: float
    residual_rms: float
    ms: tuple[int, int]

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "C": self.C, "residual_rms": self.residual_rms,
                "m_range": list(self.ms)}


def extract_I17_from_mu(Q: DirectionalPotential, m_range: tuple[int, int],
                        n_terms: int = 2, N: int | None = None) -> I17Fit:
    """Estimate the mean square of Q from the periodic eigenvalues.

    With k = m + 1, both sqrt(mu_{2m+1}(0)) and sqrt(mu_{2m+2}(0)) behave as
    |k delta| + C / |k delta|^3 + O(|k|^-5); C is fitted together with
    ``n_terms - 1`` further odd powers.  Normalized over one period the mean
    square of Q equals 8 C.
    """
    m0, m1 = int(m_range[0]), int(m_range[1])
    if m0 < 1 or m1 <= m0:
        raise ValueError("m_range must be increasing and start at 1 or above")
    N = N or (m1 + 4 * max(Q.bandwidth, 1) + 24)
    mus = np.sort(np.linalg.eigvalsh(hill_matrix(Q, 0.0, N)))
    ms = np.arange(m0, m1 + 1)
    k = (ms + 1) * Q.delta_norm
    rows, ys = [], []
    for idx in (2 * ms + 1, 2 * ms + 2):
        y = np.sqrt(np.maximum(mus[idx], 0.0)) - k
        rows.append(np.stack([k ** -(3 + 2 * p) for p in range(n_terms)], axis=1))
        ys.append(y)
    X, y = np.vstack(rows), np.concatenate(ys)
    scale = k.min()
    Xs = X * scale ** (3 + 2 * np.arange(n_terms))
    sol, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    C = float(sol[0] * scale**3)
    resid = y - Xs @ sol
    rms = float(np.sqrt(np.mean(resid**2)))
    tail = np.abs(resid[: len(ms)])
    if len(tail) > 4 and np.any(np.diff(tail[len(tail) // 2:]) > 10 * rms + 1e-15):
        warnings.warn(f"non-monotone residuals in the eigenvalue fit (rms {rms:.2e})",
                      stacklevel=2)
    return I17Fit(estimate=8.0 * C, C=C, residual_rms=rms, ms=(m0, m1))
