"""Closed-form values of the directional invariants and the relations between them.

The integral of |q_{delta,b}|^2 |phi_{j,v}|^2 over the torus only sees the
frequencies of |q_{delta,b}|^2 lying on the line of delta, which pair with
the Fourier coefficients of |phi_{j,v}|^2.  Its large-j expansion
J_0 + J_1/j + J_2/j^2 + ... mirrors the expansion of |phi_{j,v}|^2, and for a
directional potential with modes +-1 only, the coefficients J_2 and J_4
determine the integrals of |q_{delta,b}|^2 against q^delta and against
q_delta^2 e^{2 i zeta} + c.c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hill import AExpansion, HillSpectrum, _lstsq_by_powers, hill_solve, moment
from .lattice import GammaDelta
from .potential import DirectionalPotential, FourierPotential, TrigPoly, directional, q_delta_b

__all__ = [
    "line_coefficients",
    "oracle_J",
    "oracle_J_values",
    "JkFamily",
    "extract_Jk_family",
    "Jk_from_A",
    "derive_I16_I20",
    "NotTwoMode",
]


class NotTwoMode(ValueError):
    """The directional potential has modes other than +-1."""


def line_coefficients(g: TrigPoly, delta) -> dict[int, complex]:
    """Coefficients of g on the frequencies n * delta, keyed by n."""
    k = np.asarray(delta, dtype=np.int64)
    i = int(np.flatnonzero(k)[0])
    out = {}
    for f, c in zip(g.freqs, g.coeffs):
        n, r = divmod(int(f[i]), int(k[i]))
        if r == 0 and np.array_equal(f, n * k):
            out[n] = out.get(n, 0) + complex(c)
    return out


def _density_on_line(q: FourierPotential, gd: GammaDelta, b) -> dict[int, complex]:
    return line_coefficients(q_delta_b(q, gd, b).abs_sq(), gd.delta)


def oracle_J(q: FourierPotential, gd: GammaDelta, b, j: int, v: float,
             N: int | None = None, hill: HillSpectrum | None = None) -> float:
    """Spectral value of the integral of |q_{delta,b}|^2 |phi_{j,v}|^2."""
    if hill is None:
        Q = directional(q, gd.delta)
        N = N or abs(int(j)) + 4 * max(Q.bandwidth, 1) + 24
        hill = hill_solve(Q, v, N)
    return moment(hill, j, _density_on_line(q, gd, b))


def oracle_J_values(q: FourierPotential, gd: GammaDelta, b, js, v: float) -> dict[int, float]:
    js = [int(j) for j in js]
    Q = directional(q, gd.delta)
    hill = hill_solve(Q, v, max(abs(j) for j in js) + 4 * max(Q.bandwidth, 1) + 24)
    dens = _density_on_line(q, gd, b)
    return {j: moment(hill, j, dens) for j in js}


@dataclass(frozen=True)
class JkFamily:
    """Coefficients of J(j) = sum_k J_k / j^k."""

    J: tuple[float, ...]
    js: tuple[int, ...]
    cond: float

    def __getitem__(self, k: int) -> float:
        return self.J[k]

    def as_dict(self) -> dict:
        return {f"J{k}": v for k, v in enumerate(self.J)}


def extract_Jk_family(J_values: dict, order: int = 4, extra_terms: int = 3,
                      max_cond: float = 1e10) -> JkFamily:
    """Fit J over the supplied labels by least squares in powers of 1/j.

    Uses the same design as the expansion of |phi_j|^2, so the coefficients
    agree with the integrals of |q_{delta,b}|^2 A_k.
    """
    js = np.array(sorted(int(j) for j in J_values))
    n_terms = order + 1 + extra_terms
    if len(js) < n_terms + 2:
        raise ValueError(f"need at least {n_terms + 2} labels")
    data = np.array([float(J_values[j]) for j in js])
    C, cond = _lstsq_by_powers(js, data, n_terms, max_cond)
    C = C.reshape(-1)
    if not np.all(np.isfinite(C)):
        raise np.linalg.LinAlgError("divergent expansion fit")
    return JkFamily(tuple(float(c) for c in C[: order + 1]), tuple(int(j) for j in js), cond)


def Jk_from_A(q: FourierPotential, gd: GammaDelta, b, expansion: AExpansion) -> list[float]:
    """Integrals of |q_{delta,b}|^2 A_k for every fitted order k."""
    dens = _density_on_line(q, gd, b)
    out = []
    for k in range(expansion.A.shape[0]):
        out.append(float(sum(c * np.conj(expansion.coefficient(k, n)) for n, c in dens.items()).real))
    return out


def derive_I16_I20(Jk: JkFamily, expansion: AExpansion, Q: DirectionalPotential) -> dict:
    """Solve the order-2 and order-4 relations for the two integrals.

    J_2 = c_q I16 + a_1 |q_delta|^2 J_0 and J_4 = a_4 I16 + a_5 I20 + a_6 J_0,
    with the constants fitted from the one-dimensional problem.
    """
    if Q.is_zero:
        return {"I16": 0.0, "I20": 0.0}
    if not Q.is_two_mode:
        raise NotTwoMode(f"directional potential has modes {sorted(Q.coeffs)}; need exactly +-1")
    c = expansion.constants
    q1sq = abs(Q[1]) ** 2
    I16 = (Jk[2] - c["a1"] * q1sq * Jk[0]) / c["q2"]
    I20 = (Jk[4] - c["a4"] * I16 - c["a6"] * Jk[0]) / c["a5"]
    return {"I16": float(I16), "I20": float(I20)}
