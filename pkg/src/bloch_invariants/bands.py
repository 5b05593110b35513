"""Band functions of -Laplace + q on the torus by plane-wave Galerkin.

The matrix of L_t(q) in the basis exp(i(gamma + t, x)) has diagonal
|gamma + t|^2 and off-diagonal entries q_{gamma - gamma'}.  Two truncations
are offered: a full ball |gamma + t| <= R, and an energy shell
| |gamma + t|^2 - E | <= W intersected with a ball of radius R around a
centre momentum (plus an optional low-energy core).  The shell keeps the size
independent of the energy, which is what makes large quasimomenta affordable.

Eigenvalues can be flagged *trusted* by re-solving with a doubled window and
checking that they moved by no more than a tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .hill import HillSpectrum
from .lattice import DualLattice, lattice_points
from .potential import FourierPotential

__all__ = [
    "BasisSpec",
    "PlaneWaveBasis",
    "BandSpectrum",
    "Match",
    "BasisTooLarge",
    "UntrustedEigenvalue",
    "NonSimpleEigenvalue",
    "build_basis",
    "assemble",
    "assemble_and_solve",
    "solve_on_basis",
    "default_window",
    "free_gap_min",
    "match_eigenvalue",
    "band_derivative",
    "model_eigs",
    "rebase",
    "fd_derivative",
]


class BasisTooLarge(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"plane-wave basis of dimension {size} exceeds the cap {cap}; "
                         "reduce the radius/window or raise max_dim")
        self.size = size
        self.cap = cap


class UntrustedEigenvalue(RuntimeError):
    """The requested eigenvalue is not converged in the truncation window."""


class NonSimpleEigenvalue(RuntimeError):
    """The eigenvalue is (numerically) degenerate."""


@dataclass(frozen=True)
class BasisSpec:
    """How to choose the plane waves.

    ``mode="ball"``: all gamma with |gamma + t - center| <= radius.
    ``mode="shell"``: gamma with | |gamma + t|^2 - energy | <= window and
    |gamma + t - center| <= radius, together with the core |gamma + t| <= core.
    ``center`` defaults to the origin for balls and to t for shells.
    """

    mode: str = "ball"
    radius: float = 10.0
    energy: float | None = None
    window: float | None = None
    core: float = 0.0
    center: tuple[float, ...] | None = None
    max_dim: int = 6000

    def __post_init__(self):
        if self.mode not in ("ball", "shell"):
            raise ValueError(f"unknown basis mode {self.mode!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.mode == "shell" and (self.energy is None or self.window is None):
            raise ValueError("shell mode needs energy and window")

    def doubled(self) -> "BasisSpec":
        if self.mode == "ball":
            return replace(self, radius=self.radius * np.sqrt(2.0), max_dim=4 * self.max_dim)
        return replace(self, radius=2 * self.radius, window=2 * self.window,
                       max_dim=4 * self.max_dim)


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    t: np.ndarray
    indices: np.ndarray  # (n, d) integer coordinates
    momenta: np.ndarray  # gamma + t
    kinetic: np.ndarray  # |gamma + t|^2
    spec: BasisSpec

    def __len__(self) -> int:
        return len(self.indices)


def rebase(basis: PlaneWaveBasis, dual: DualLattice, t) -> PlaneWaveBasis:
    """The same plane waves at another quasimomentum."""
    t = np.asarray(t, dtype=float)
    mom = dual.point(basis.indices) + t
    return PlaneWaveBasis(t=t, indices=basis.indices, momenta=mom, kinetic=(mom * mom).sum(1),
                          spec=basis.spec)


def build_basis(dual: DualLattice, t, spec: BasisSpec) -> PlaneWaveBasis:
    t = np.asarray(t, dtype=float)
    d = dual.dim
    center = np.asarray(spec.center, dtype=float) if spec.center is not None else (
        t if spec.mode == "shell" else np.zeros(d))
    # integer points gamma with |gamma + t - center| <= radius
    shift = dual.coordinates(center - t)
    base = np.rint(shift).astype(np.int64)
    resid = dual.point(shift - base)
    pts = lattice_points(dual.basis, spec.radius + np.linalg.norm(resid)) + base
    mom = dual.point(pts) + t
    keep = np.linalg.norm(mom - center, axis=1) <= spec.radius
    if spec.mode == "shell":
        e = (mom * mom).sum(1)
        keep &= np.abs(e - spec.energy) <= spec.window
        if spec.core > 0:
            core_pts = lattice_points(dual.basis, spec.core + np.linalg.norm(t)) - np.rint(
                dual.coordinates(t)).astype(np.int64)
            core_mom = dual.point(core_pts) + t
            core_pts = core_pts[np.linalg.norm(core_mom, axis=1) <= spec.core]
            pts = np.vstack([pts[keep], core_pts])
            pts = np.unique(pts, axis=0)
            mom = dual.point(pts) + t
            keep = np.ones(len(pts), dtype=bool)
    pts, mom = pts[keep], mom[keep]
    order = np.lexsort(pts.T[::-1])
    pts, mom = pts[order], mom[order]
    if len(pts) > spec.max_dim:
        raise BasisTooLarge(len(pts), spec.max_dim)
    return PlaneWaveBasis(t=t, indices=pts, momenta=mom, kinetic=(mom * mom).sum(1), spec=spec)


def _encode(pts: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    key = np.zeros(len(pts), dtype=np.int64)
    for i in range(pts.shape[1]):
        key = key * span[i] + (pts[:, i] - lo[i])
    return key


def assemble(q: FourierPotential, basis: PlaneWaveBasis) -> np.ndarray:
    """Dense Galerkin matrix; real when all Fourier coefficients are real."""
    pts = basis.indices
    real = q.is_real_symmetric
    H = np.diag(basis.kinetic).astype(float if real else complex)
    if len(pts) == 0 or len(q) == 0:
        return H
    gmax = np.abs(q.freqs).max(axis=0)
    lo = pts.min(axis=0) - gmax
    span = pts.max(axis=0) + gmax - lo + 1
    keys = _encode(pts, lo, span)
    order = np.argsort(keys)
    sorted_keys = keys[order]
    for g, c in q.coeffs.items():
        # H[row, col] = q_g where gamma_row - gamma_col = g
        tk = _encode(pts - np.asarray(g), lo, span)
        pos = np.searchsorted(sorted_keys, tk)
        pos[pos >= len(sorted_keys)] = 0
        hit = sorted_keys[pos] == tk
        rows = np.flatnonzero(hit)
        cols = order[pos[hit]]
        H[rows, cols] += c.real if real else c
    return H


@dataclass(frozen=True, eq=False)
class BandSpectrum:
    """Eigenpairs of L_t(q) on a plane-wave basis.

    When ``energy_range`` is set only eigenvalues inside it were computed, and
    the gaps of the outermost ones are measured to the ends of the range.
    """

    t: np.ndarray
    basis: PlaneWaveBasis
    eigenvalues: np.ndarray
    vectors: np.ndarray
    trusted: np.ndarray
    residual: float
    energy_range: tuple[float, float] | None = None
    shifts: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def gaps(self) -> np.ndarray:
        """Distance of each eigenvalue to its nearest neighbour (inf if none known)."""
        w = self.eigenvalues
        g = np.full(len(w), np.inf)
        if len(w) > 1:
            d = np.diff(w)
            g[:-1] = d
            g[1:] = np.minimum(g[1:], d)
        if self.energy_range is not None and len(w):
            # neighbours outside the computed range are unknown
            g[0] = min(g[0], w[0] - self.energy_range[0])
            g[-1] = min(g[-1], self.energy_range[1] - w[-1])
        return g


def _eigh(H: np.ndarray, energy_range):
    if energy_range is None:
        return sla.eigh(H)
    lo, hi = energy_range
    return sla.eigh(H, subset_by_value=(lo, hi), driver="evr")


def solve_on_basis(q: FourierPotential, basis: PlaneWaveBasis,
                   energy_range: tuple[float, float] | None = None):
    """Eigenpairs and relative residual for a fixed basis."""
    H = assemble(q, basis)
    w, V = _eigh(H, energy_range)
    scale = np.abs(basis.kinetic).max(initial=0.0) + np.abs(H - np.diag(np.diag(H))).sum(1).max(
        initial=0.0)
    res = float(np.linalg.norm(H @ V - V * w, axis=0).max(initial=0.0) / max(scale, 1.0))
    return w, V, res


def default_window(q: FourierPotential, energy: float) -> float:
    """Shell half-width: large against the coupling strength and against the
    energy change of a few hops across the support at this energy."""
    g = max(q.max_norm, 1.0)
    return float(max(40.0 * q.max_abs * max(len(q), 1),
                     8.0 * np.sqrt(max(energy, 0.0)) * g + 4.0 * g * g))


def assemble_and_solve(q: FourierPotential, t, spec: BasisSpec,
                       energy_range: tuple[float, float] | None = None,
                       trust: bool = True, trust_tol: float = 1e-8) -> BandSpectrum:
    """Solve L_t(q) on the basis ``spec`` and flag converged eigenvalues."""
    basis = build_basis(q.dual, t, spec)
    w, V, res = solve_on_basis(q, basis, energy_range)
    trusted = np.ones(len(w), dtype=bool)
    shifts = None
    if trust:
        big = build_basis(q.dual, t, spec.doubled())
        pad = None
        if energy_range is not None:
            pad = (energy_range[0] - 1.0, energy_range[1] + 1.0)
        w2, _, _ = solve_on_basis(q, big, pad)
        if len(w2):
            shifts = np.abs(w[:, None] - w2[None, :]).min(axis=1)
        else:
            shifts = np.full(len(w), np.inf)
        trusted = shifts <= trust_tol
    return BandSpectrum(t=np.asarray(t, dtype=float), basis=basis, eigenvalues=w, vectors=V,
                        trusted=trusted, residual=res, energy_range=energy_range, shifts=shifts)


def free_gap_min(spec: BandSpectrum, floor: float = 1e-6) -> float:
    """Half the smallest gap between distinct-index free levels in the computed range."""
    e = np.sort(spec.basis.kinetic)
    if spec.energy_range is not None:
        lo, hi = spec.energy_range
        e = e[(e >= lo) & (e <= hi)]
    if len(e) < 2:
        return floor
    return float(max(0.5 * np.diff(e).min(), floor))


@dataclass(frozen=True)
class Match:
    N: int
    value: float
    simple: bool
    gap: float


def match_eigenvalue(spec: BandSpectrum, target: float, gap_min: float | None = None) -> Match:
    """Nearest trusted eigenvalue to ``target`` with a simplicity verdict."""
    if len(spec.eigenvalues) == 0:
        raise UntrustedEigenvalue("no eigenvalues were computed near the target")
    gap_min = free_gap_min(spec) if gap_min is None else gap_min
    N = int(np.argmin(np.abs(spec.eigenvalues - target)))
    if not spec.trusted[N]:
        raise UntrustedEigenvalue(
            f"eigenvalue {spec.eigenvalues[N]:.12g} nearest to {target:.12g} is not converged; "
            "enlarge the basis window")
    gap = float(spec.gaps()[N])
    return Match(N, float(spec.eigenvalues[N]), gap > gap_min, gap)


def band_derivative(spec: BandSpectrum, N: int, h, gap_min: float | None = None) -> float:
    """Hellmann-Feynman derivative of Lambda_N along the unit vector h."""
    gap_min = free_gap_min(spec) if gap_min is None else gap_min
    if spec.gaps()[N] <= gap_min:
        raise NonSimpleEigenvalue(f"eigenvalue {N} has gap {spec.gaps()[N]:.3g} <= {gap_min:.3g}")
    h = np.asarray(h, dtype=float)
    c2 = np.abs(spec.vectors[:, N]) ** 2
    return float(2.0 * (spec.basis.momenta @ h) @ c2)


def model_eigs(hill: HillSpectrum, beta, tau, j_range) -> np.ndarray:
    """|beta + tau|^2 + mu_j(v) for the requested labels."""
    p = np.asarray(beta, dtype=float) + np.asarray(tau, dtype=float)
    return np.array([p @ p + hill.mu(j) for j in j_range])


def fd_derivative(q: FourierPotential, basis: PlaneWaveBasis, N: int, h, eps: float = 1e-5
                  ) -> float:
    """Central difference of the N-th eigenvalue along h on a fixed set of plane waves.

    N indexes the full spectrum on ``basis``, not a windowed subset.
    """
    h = np.asarray(h, dtype=float)
    vals = []
    for sgn in (1.0, -1.0):
        w, _, _ = solve_on_basis(q, rebase(basis, q.dual, basis.t + sgn * eps * h))
        vals.append(w[N])
    return float((vals[0] - vals[1]) / (2 * eps))
