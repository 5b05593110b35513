"""Trigonometric-polynomial potentials and the fields derived from them.

All integrals over the torus are normalized by its volume, so a constant
function integrates to its value.  Spectral integrals are exact: they are
finite sums over matching frequencies.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .lattice import DualLattice, GammaDelta, LatticeError, integer_rank, is_maximal

__all__ = [
    "FourierPotential",
    "DirectionalPotential",
    "TrigPoly",
    "VectorTrigPoly",
    "OracleInvariants",
    "directional",
    "f_field",
    "q_delta_b",
    "parseval_integral",
    "oracle_invariants",
    "ResonanceError",
]


class ResonanceError(ValueError):
    """A denominator (x0, gamma) is too small for the field to be defined."""

    def __init__(self, gamma, value):
        super().__init__(f"(x0, gamma) = {value:.3e} too small for gamma = {tuple(gamma)}")
        self.gamma = tuple(gamma)
        self.value = value


def _merge(freqs: np.ndarray, coeffs: np.ndarray, tol: float = 0.0):
    """Sum coefficients of repeated frequencies; drop zeros."""
    if len(freqs) == 0:
        return freqs.reshape(0, freqs.shape[1] if freqs.ndim == 2 else 0), coeffs
    uniq, inv = np.unique(freqs, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    out = np.zeros((len(uniq),) + coeffs.shape[1:], dtype=complex)
    np.add.at(out, inv, coeffs)
    mag = np.abs(out) if out.ndim == 1 else np.linalg.norm(out, axis=1)
    keep = mag > tol
    return uniq[keep], out[keep]


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Scalar trigonometric polynomial sum_k c_k exp(i (B k, x))."""

    dual: DualLattice
    freqs: np.ndarray  # (n, d) integer coordinates
    coeffs: np.ndarray  # (n,) complex

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.int64).reshape(-1, self.dual.dim)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        f, c = _merge(f, c)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = x @ self.dual.point(self.freqs).T
        return np.exp(1j * phase) @ self.coeffs

    def conj(self) -> "TrigPoly":
        return TrigPoly(self.dual, -self.freqs, np.conj(self.coeffs))

    def coefficient(self, k) -> complex:
        hit = np.all(self.freqs == np.asarray(k), axis=1)
        return complex(self.coeffs[hit].sum()) if hit.any() else 0.0j

    def as_dict(self) -> dict[tuple[int, ...], complex]:
        return {tuple(int(a) for a in k): complex(c) for k, c in zip(self.freqs, self.coeffs)}


@dataclass(frozen=True, eq=False)
class VectorTrigPoly:
    """Vector-valued trigonometric polynomial with coefficients in C^d."""

    dual: DualLattice
    freqs: np.ndarray
    coeffs: np.ndarray  # (n, d)

    def __post_init__(self):
        d = self.dual.dim
        f = np.asarray(self.freqs, dtype=np.int64).reshape(-1, d)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1, d)
        f, c = _merge(f, c)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = x @ self.dual.point(self.freqs).T
        return np.exp(1j * phase) @ self.coeffs

    def abs_sq(self) -> TrigPoly:
        """Coefficients of |g(x)|^2 by vector convolution."""
        if len(self.freqs) == 0:
            return TrigPoly(self.dual, np.zeros((0, self.dual.dim), int), np.zeros(0))
        diff = (self.freqs[:, None, :] - self.freqs[None, :, :]).reshape(-1, self.dual.dim)
        prod = (self.coeffs[:, None, :] * np.conj(self.coeffs[None, :, :])).sum(-1).reshape(-1)
        return TrigPoly(self.dual, diff, prod)

    @property
    def is_zero(self) -> bool:
        return len(self.freqs) == 0


def parseval_integral(g1, g2) -> complex:
    """Normalized integral of g1 * conj(g2) over the torus."""
    if len(g1.freqs) == 0 or len(g2.freqs) == 0:
        return 0.0j
    index = {tuple(k): i for i, k in enumerate(g2.freqs.tolist())}
    total = 0.0j
    for k, c in zip(g1.freqs.tolist(), g1.coeffs):
        i = index.get(tuple(k))
        if i is not None:
            total += np.vdot(np.atleast_1d(g2.coeffs[i]), np.atleast_1d(c))
    return complex(total)


@dataclass(frozen=True, eq=False)
class FourierPotential:
    """Real potential given by finitely many Fourier coefficients.

    Coefficients are keyed by integer coordinates of the dual lattice.  The
    zero mode is always absent and ``q[-g] == conj(q[g])`` holds.
    """

    dual: DualLattice
    coeffs: Mapping[tuple[int, ...], complex]

    def __post_init__(self):
        d = self.dual.dim
        clean: dict[tuple[int, ...], complex] = {}
        for k, c in self.coeffs.items():
            k = tuple(int(x) for x in k)
            if len(k) != d:
                raise LatticeError(f"mode {k} has wrong dimension (expected {d})")
            if c != 0:
                clean[k] = complex(c)
        zero = (0,) * d
        if zero in clean:
            raise ValueError("the zero mode must vanish")
        for k, c in clean.items():
            mk = tuple(-x for x in k)
            if abs(clean.get(mk, 0) - np.conj(c)) > 1e-14 * max(1.0, abs(c)):
                raise ValueError(f"coefficients of {k} and {mk} are not conjugate")
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def from_modes(cls, dual: DualLattice, modes: Iterable) -> "FourierPotential":
        """Build from ``(gamma, value)`` pairs, completing the conjugate modes.

        A supplied zero mode is dropped with a warning.  A mode given together
        with an inconsistent partner raises ``ValueError``.
        """
        d = dual.dim
        out: dict[tuple[int, ...], complex] = {}
        for gamma, value in modes:
            k = tuple(int(x) for x in gamma)
            if len(k) != d:
                raise LatticeError(f"mode {k} has wrong dimension (expected {d})")
            value = complex(value)
            if not any(k):
                if value != 0:
                    warnings.warn("nonzero mean of the potential removed (q_0 set to 0)",
                                  stacklevel=2)
                continue
            mk = tuple(-x for x in k)
            for key, val in ((k, value), (mk, np.conj(value))):
                prev = out.get(key)
                if prev is not None and abs(prev - val) > 1e-14 * max(1.0, abs(val)):
                    raise ValueError(f"conflicting coefficients for mode {key}: {prev} vs {val}")
                out[key] = val
        return cls(dual, out)

    @classmethod
    def zero(cls, dual: DualLattice) -> "FourierPotential":
        return cls(dual, {})

    @property
    def dim(self) -> int:
        return self.dual.dim

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, k) -> complex:
        return self.coeffs.get(tuple(int(x) for x in k), 0.0j)

    def support_coords(self) -> list[tuple[int, ...]]:
        return list(self.coeffs)

    @property
    def freqs(self) -> np.ndarray:
        return np.array(list(self.coeffs), dtype=np.int64).reshape(-1, self.dim)

    @property
    def values(self) -> np.ndarray:
        return np.array(list(self.coeffs.values()), dtype=complex)

    @property
    def is_real_symmetric(self) -> bool:
        """True when all coefficients are real (the Galerkin matrix is real)."""
        return bool(np.all(np.abs(self.values.imag) == 0))

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.coeffs else 0.0

    @property
    def max_norm(self) -> float:
        """Largest |gamma| over the support."""
        if not self.coeffs:
            return 0.0
        return float(np.linalg.norm(self.dual.point(self.freqs), axis=1).max())

    def as_trigpoly(self) -> TrigPoly:
        return TrigPoly(self.dual, self.freqs, self.values)

    def evaluate(self, x) -> np.ndarray:
        return self.as_trigpoly().evaluate(x)

    def restricted(self, keep) -> "FourierPotential":
        """Sub-potential of the modes for which ``keep(gamma)`` is true."""
        return FourierPotential(self.dual, {k: c for k, c in self.coeffs.items() if keep(k)})

    def to_records(self) -> list[dict]:
        return [{"gamma": list(k), "re": c.real, "im": c.imag} for k, c in self.coeffs.items()]


def _on_line(delta, gamma) -> bool:
    return integer_rank([delta, gamma]) < 2


@dataclass(frozen=True, eq=False)
class DirectionalPotential:
    """One-dimensional periodic potential Q(zeta) = sum_n Q_n exp(i n zeta)."""

    coeffs: Mapping[int, complex]
    delta_norm: float = 1.0
    delta: tuple[int, ...] | None = None

    def __post_init__(self):
        clean = {int(n): complex(c) for n, c in self.coeffs.items() if c != 0}
        if 0 in clean:
            raise ValueError("directional potential must have zero mean")
        for n, c in clean.items():
            if abs(clean.get(-n, 0) - np.conj(c)) > 1e-14 * max(1.0, abs(c)):
                raise ValueError(f"Q_{n} and Q_{-n} are not conjugate")
        if self.delta_norm <= 0:
            raise ValueError("|delta| must be positive")
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @property
    def bandwidth(self) -> int:
        return max((abs(n) for n in self.coeffs), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_two_mode(self) -> bool:
        """Only the modes n = +-1 are present (and nonzero)."""
        return set(self.coeffs) == {-1, 1}

    def __getitem__(self, n: int) -> complex:
        return self.coeffs.get(int(n), 0.0j)

    def l2_norm_sq(self) -> float:
        return float(sum(abs(c) ** 2 for c in self.coeffs.values()))

    def evaluate(self, zeta) -> np.ndarray:
        z = np.asarray(zeta, dtype=float)
        return sum((c * np.exp(1j * n * z) for n, c in self.coeffs.items()),
                   np.zeros_like(z, dtype=complex)).real


def directional(q: FourierPotential, delta) -> DirectionalPotential:
    """Q_n = q_{n delta}: the part of q on the line through delta."""
    k = tuple(int(x) for x in delta)
    if not is_maximal(k):
        raise LatticeError(f"delta {k} is not maximal")
    kv = np.array(k)
    out = {}
    for g, c in q.coeffs.items():
        if _on_line(k, g):
            # g = n * k exactly; recover n from any nonzero coordinate
            i = int(np.flatnonzero(kv)[0])
            out[g[i] // k[i]] = c
    norm = float(np.linalg.norm(q.dual.point(k)))
    return DirectionalPotential(out, delta_norm=norm, delta=k)


def line_poly(Q: DirectionalPotential, dual: DualLattice, delta) -> TrigPoly:
    """The directional potential as a function on the torus."""
    k = np.array(delta, dtype=np.int64)
    freqs = np.array([n * k for n in Q.coeffs], dtype=np.int64).reshape(-1, dual.dim)
    return TrigPoly(dual, freqs, np.array(list(Q.coeffs.values())))


def f_field(q: FourierPotential, delta, x0, cutoff: float,
            threshold: float = 1e-8) -> VectorTrigPoly:
    """sum over gamma off the line of delta, |gamma| < cutoff, of gamma q_gamma / (x0, gamma)."""
    k = tuple(int(x) for x in delta)
    x0 = np.asarray(x0, dtype=float)
    freqs, coeffs = [], []
    for g, c in q.coeffs.items():
        if _on_line(k, g):
            continue
        gv = q.dual.point(g)
        if np.linalg.norm(gv) >= cutoff:
            continue
        den = float(x0 @ gv)
        if abs(den) <= threshold * max(1.0, np.linalg.norm(x0) * np.linalg.norm(gv)):
            raise ResonanceError(g, den)
        freqs.append(g)
        coeffs.append(gv * c / den)
    return VectorTrigPoly(q.dual, np.array(freqs).reshape(-1, q.dim),
                          np.array(coeffs).reshape(-1, q.dim))


def q_delta_b(q: FourierPotential, gd: GammaDelta, b) -> VectorTrigPoly:
    """sum over gamma in the plane of (delta, b), off the line of delta, of gamma q_gamma / (b, gamma)."""
    b = tuple(int(x) for x in b)
    if not is_maximal(b):
        raise LatticeError(f"b {b} is not maximal in Gamma_delta")
    b_vec = gd.point(b)
    b_lift = [int(x) for x in gd.lift(b)]
    freqs, coeffs = [], []
    for g, c in q.coeffs.items():
        if _on_line(gd.delta, g) or integer_rank([gd.delta, b_lift, g]) > 2:
            continue
        gv = q.dual.point(g)
        freqs.append(g)
        coeffs.append(gv * c / float(b_vec @ gv))
    return VectorTrigPoly(q.dual, np.array(freqs).reshape(-1, q.dim),
                          np.array(coeffs).reshape(-1, q.dim))


@dataclass(frozen=True)
class OracleInvariants:
    I16: float
    I17: float
    I20: float
    J0: float

    def as_dict(self) -> dict:
        return {"I16": self.I16, "I17": self.I17, "I20": self.I20, "J0": self.J0}


def oracle_invariants(q: FourierPotential, gd: GammaDelta, b) -> OracleInvariants:
    """Spectral values of the invariants built from |q_{delta,b}|^2 and q^delta."""
    Q = directional(q, gd.delta)
    s = q_delta_b(q, gd, b).abs_sq()
    line = line_poly(Q, q.dual, gd.delta)
    k = np.array(gd.delta, dtype=np.int64)
    sq = TrigPoly(q.dual, np.array([2 * k, -2 * k]),
                  np.array([Q[1] ** 2, Q[-1] ** 2]))
    one = TrigPoly(q.dual, np.zeros((1, q.dim), int), np.ones(1))
    return OracleInvariants(
        I16=parseval_integral(s, line).real,
        I17=Q.l2_norm_sq(),
        I20=parseval_integral(s, sq).real,
        J0=parseval_integral(s, one).real,
    )
