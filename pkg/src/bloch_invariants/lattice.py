"""Lattice geometry: dual lattices, primitive vectors, the sublattice of a
hyperplane, quasimomentum decomposition and the selection predicates used to
pick the anchor point of an extraction run.

Integer coordinates are always taken with respect to the generator matrix of
the lattice they belong to.  Membership decisions are made on integers; the
floating point geometry is only used for norms and inner products.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "LatticeBasis",
    "DualLattice",
    "GammaDelta",
    "QuasiDecomp",
    "SelectionParams",
    "BetaSelection",
    "LatticeError",
    "SelectionError",
    "dual_lattice",
    "parse_lattice",
    "is_maximal",
    "maximal_elements",
    "integer_rank",
    "gamma_delta",
    "decompose",
    "in_V",
    "select_beta",
    "lattice_points",
]


class LatticeError(ValueError):
    """Invalid lattice data (singular basis, non-primitive vector, ...)."""


class SelectionError(RuntimeError):
    """No lattice point satisfies the selection predicates.

    ``stats`` maps predicate name to the number of scanned candidates that
    violated it.
    """

    def __init__(self, message: str, stats: Mapping[str, int], scanned: int):
        super().__init__(message)
        self.stats = dict(stats)
        self.scanned = scanned


def _as_int_vector(coords) -> tuple[int, ...]:
    arr = np.asarray(coords)
    if arr.ndim != 1:
        raise LatticeError(f"expected a 1-d coordinate vector, got shape {arr.shape}")
    if arr.dtype.kind in "iu":
        return tuple(int(c) for c in arr)
    rounded = np.rint(arr)
    if not np.all(np.abs(arr - rounded) == 0):
        raise LatticeError(f"coordinates {arr.tolist()} are not integers")
    return tuple(int(c) for c in rounded)


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """A full-rank lattice in R^d given by generator columns."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 1:
            raise LatticeError(f"basis must be a square matrix, got shape {b.shape}")
        cond = np.linalg.cond(b)
        if not np.isfinite(cond) or cond > 1e12:
            raise LatticeError(f"singular lattice basis (condition number {cond:.3g})")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    def point(self, coords) -> np.ndarray:
        """Ambient vector(s) of integer coordinates (last axis = d)."""
        return np.asarray(coords, dtype=float) @ self.basis.T

    def coordinates(self, x) -> np.ndarray:
        """Real coordinates of ambient vector(s) in this basis."""
        return np.linalg.solve(self.basis, np.asarray(x, dtype=float).T).T

    def contains(self, x, tol: float = 1e-9) -> bool:
        c = self.coordinates(x)
        return bool(np.all(np.abs(c - np.rint(c)) <= tol))

    def allclose(self, other: "LatticeBasis", tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.abs(self.basis).max()))
        return self.basis.shape == other.basis.shape and bool(
            np.all(np.abs(self.basis - other.basis) <= tol * scale)
        )

    @classmethod
    def cubic(cls, scale: float, d: int) -> "LatticeBasis":
        return cls(scale * np.eye(d))


@dataclass(frozen=True, eq=False)
class DualLattice(LatticeBasis):
    """The lattice dual to ``LatticeBasis`` under the pairing (delta, omega) in 2*pi*Z."""

    def pairing_error(self, omega: LatticeBasis) -> float:
        p = self.basis.T @ omega.basis
        return float(np.abs(p - 2 * np.pi * np.eye(self.dim)).max())


def dual_lattice(basis: LatticeBasis) -> DualLattice:
    """Return the dual lattice with generators ``2*pi*B^{-T}``."""
    b = basis.basis
    cond = np.linalg.cond(b)
    if cond > 1e12:
        raise LatticeError(f"singular lattice basis (condition number {cond:.3g})")
    return DualLattice(2 * np.pi * np.linalg.inv(b).T)


_SCALE_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*(pi)?\s*$")


def _parse_scale(token: str) -> float:
    m = _SCALE_RE.match(token)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise LatticeError(f"cannot parse lattice scale {token!r}")
    value = float(m.group(1)) if m.group(1) is not None else 1.0
    return value * np.pi if m.group(2) else value


def parse_lattice(spec) -> LatticeBasis:
    """Build the period lattice from ``"cubic:<scale>:<d>"`` or a row-major matrix.

    The scale accepts a trailing ``pi`` (``"2pi"`` gives the lattice
    ``2*pi*Z^d`` whose dual is ``Z^d``).  A matrix is given row-major with the
    generators as columns.
    """
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3 or parts[0] != "cubic":
            raise LatticeError(f"lattice string must look like 'cubic:<scale>:<d>', got {spec!r}")
        d = int(parts[2])
        if d < 1:
            raise LatticeError("lattice dimension must be positive")
        return LatticeBasis.cubic(_parse_scale(parts[1]), d)
    return LatticeBasis(np.array(spec, dtype=float))


# --------------------------------------------------------------------------
# integer helpers


def is_maximal(coords) -> bool:
    """A nonzero lattice vector is primitive iff its coordinates have gcd 1."""
    c = _as_int_vector(coords)
    return any(c) and math.gcd(*c) == 1


def integer_rank(rows: Sequence[Sequence[int]]) -> int:
    """Exact rank of an integer matrix (fraction-free Gaussian elimination)."""
    m = [[Fraction(int(x)) for x in r] for r in rows]
    if not m:
        return 0
    rank, ncol = 0, len(m[0])
    for col in range(ncol):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / m[rank][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def _unimodular_reduction(k: Sequence[int]) -> np.ndarray:
    """Unimodular U with ``k @ U = (g, 0, ..., 0)``, g = gcd(k) > 0.

    Column operations on the row vector ``k`` (extended Euclid), i.e. the
    Hermite normal form of a single row.  The last d-1 columns of U span the
    integer kernel of ``m -> k.m``.
    """
    row = [int(x) for x in k]
    d = len(row)
    u = [[int(i == j) for j in range(d)] for i in range(d)]

    def col_op(dst, src, f):  # column dst -= f * column src
        row[dst] -= f * row[src]
        for r in range(d):
            u[r][dst] -= f * u[r][src]

    def swap(a, b):
        row[a], row[b] = row[b], row[a]
        for r in range(d):
            u[r][a], u[r][b] = u[r][b], u[r][a]

    for i in range(1, d):
        while row[i] != 0:
            col_op(0, i, row[0] // row[i])
            swap(0, i)
    if row[0] < 0:
        row[0] = -row[0]
        for r in range(d):
            u[r][0] = -u[r][0]
    return np.array(u, dtype=object)


def lattice_points(basis: np.ndarray, radius: float) -> np.ndarray:
    """All integer coordinate vectors c with ``|basis @ c| <= radius``."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    n = basis.shape[1]
    if n == 0:
        return np.zeros((1, 0), dtype=int)
    # |c_i| <= radius * ||row_i(B^+)||
    pinv = np.linalg.pinv(basis)
    bounds = np.floor(radius * np.linalg.norm(pinv, axis=1) + 1e-9).astype(int)
    axes = [np.arange(-b, b + 1) for b in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    norms = np.linalg.norm(grid @ basis.T, axis=1)
    return grid[norms <= radius * (1 + 1e-12)]


def _sort_by_norm(coords: np.ndarray, basis: np.ndarray) -> np.ndarray:
    norms = np.round(np.linalg.norm(coords @ basis.T, axis=1), 12)
    keys = [tuple(row) for row in coords]
    order = sorted(range(len(coords)), key=lambda i: (norms[i], keys[i]))
    return coords[order]


def maximal_elements(dual: LatticeBasis, radius: float) -> list[tuple[int, ...]]:
    """Primitive lattice vectors of norm at most ``radius``, sorted by norm."""
    if radius <= 0:
        return []
    pts = lattice_points(dual.basis, radius)
    pts = np.array([p for p in pts if is_maximal(p)], dtype=int).reshape(-1, dual.dim)
    return [tuple(int(x) for x in p) for p in _sort_by_norm(pts, dual.basis)]


# --------------------------------------------------------------------------
# the hyperplane sublattice


def _lagrange_reduce(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lagrange reduction of a rank-2 basis (columns of ``g``).

    Returns the reduced basis and the unimodular change of coordinates M with
    ``g_new = g @ M``.
    """
    m = np.eye(2, dtype=int)
    b1, b2 = g[:, 0].copy(), g[:, 1].copy()
    c1, c2 = m[:, 0].copy(), m[:, 1].copy()
    if b1 @ b1 > b2 @ b2:
        b1, b2, c1, c2 = b2, b1, c2, c1
    while True:
        mu = int(np.rint((b1 @ b2) / (b1 @ b1)))
        b2, c2 = b2 - mu * b1, c2 - mu * c1
        if b2 @ b2 >= b1 @ b1 - 1e-12 * (b1 @ b1):
            break
        b1, b2, c1, c2 = b2, b1, c2, c1
    return np.column_stack([b1, b2]), np.column_stack([c1, c2])


def _canonical_sign(vec: np.ndarray) -> int:
    for x in vec:
        if abs(x) > 1e-12:
            return 1 if x > 0 else -1
    return 1


@dataclass(frozen=True, eq=False)
class GammaDelta:
    """The hyperplane H orthogonal to a primitive ``delta`` and its lattices.

    ``gd_basis`` holds generators of the projection of the dual lattice onto H
    (columns, ambient coordinates), ``gd_lift`` integer dual-lattice vectors
    whose projections are those generators, and ``omega_delta_basis`` the
    generators of the period sublattice inside H, paired with ``gd_basis`` to
    ``2*pi*I``.  ``delta_star`` is a period vector with ``(delta_star, delta) = 2*pi``.
    """

    dual: DualLattice
    omega: LatticeBasis
    delta: tuple[int, ...]
    delta_vec: np.ndarray
    hyperplane_basis: np.ndarray
    gd_basis: np.ndarray
    gd_lift: np.ndarray
    omega_delta_basis: np.ndarray
    delta_star: np.ndarray

    @property
    def dim(self) -> int:
        return self.dual.dim

    @property
    def rank(self) -> int:
        return self.gd_basis.shape[1]

    @property
    def delta_norm(self) -> float:
        return float(np.linalg.norm(self.delta_vec))

    @property
    def fd_volume(self) -> float:
        """Measure of the fundamental domain F_delta inside H."""
        g = self.gd_basis
        return float(np.sqrt(abs(np.linalg.det(g.T @ g)))) if self.rank else 1.0

    @property
    def diameter(self) -> float:
        """Diameter of the centred parallelepiped F_delta."""
        if self.rank == 0:
            return 0.0
        signs = itertools.product((-1.0, 1.0), repeat=self.rank)
        return max(float(np.linalg.norm(self.gd_basis @ np.array(s))) for s in signs)

    def point(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.gd_basis.T

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dv = self.delta_vec
        return x - np.multiply.outer(x @ dv / (dv @ dv), dv)

    def coordinates(self, x) -> np.ndarray:
        """Coordinates of H-vectors in ``gd_basis`` (least squares)."""
        x = np.asarray(x, dtype=float)
        sol, *_ = np.linalg.lstsq(self.gd_basis, x.T, rcond=None)
        return sol.T

    def lift(self, coords) -> np.ndarray:
        """Integer dual-lattice coordinates of a vector projecting onto ``coords``."""
        return np.asarray(coords, dtype=int) @ self.gd_lift.T

    def gd_coords_of(self, gamma) -> tuple[tuple[int, ...], float]:
        """Split a dual-lattice vector as ``beta + s*delta`` (beta in integer gd coords)."""
        x = self.dual.point(gamma)
        s = float(x @ self.delta_vec / (self.delta_vec @ self.delta_vec))
        c = self.coordinates(x - s * self.delta_vec)
        return tuple(int(v) for v in np.rint(c)), s

    def shift_of(self, beta_coords) -> float:
        """Fractional shift -(beta, delta_star)/(2*pi) picked up by v under beta."""
        return -float(self.point(beta_coords) @ self.delta_star) / (2 * np.pi)

    def is_maximal(self, coords) -> bool:
        return is_maximal(coords)


def gamma_delta(dual: DualLattice, omega: LatticeBasis, delta) -> GammaDelta:
    """Construct the hyperplane sublattices for a primitive dual vector ``delta``."""
    k = _as_int_vector(delta)
    d = dual.dim
    if len(k) != d:
        raise LatticeError(f"delta has {len(k)} coordinates, lattice dimension is {d}")
    if dual.pairing_error(omega) > 1e-9 * max(1.0, np.abs(omega.basis).max()):
        raise LatticeError("dual and period lattices are not paired")
    if not any(k):
        raise LatticeError("delta must be nonzero")
    if not is_maximal(k):
        raise LatticeError(f"delta {k} is not a maximal element (gcd {math.gcd(*k)})")

    # (B_omega m, delta) = 2*pi * (m . k): the integer row is k itself.
    u = _unimodular_reduction(k)
    u_int = u.astype(np.int64)
    v_int = np.rint(np.linalg.inv(u_int.astype(float)).T).astype(np.int64)
    assert tuple(v_int[:, 0]) == k

    delta_vec = dual.point(k)
    omega_d = omega.basis @ u_int[:, 1:].astype(float)
    delta_star = omega.basis @ u_int[:, 0].astype(float)

    def project(x):
        return x - np.outer(delta_vec, delta_vec @ x) / (delta_vec @ delta_vec)

    lift = v_int[:, 1:]
    gd = project(dual.basis @ lift.astype(float))
    rank = d - 1
    if rank == 2:
        gd, m = _lagrange_reduce(gd)
        lift = lift @ m
        omega_d = omega_d @ np.rint(np.linalg.inv(m.astype(float)).T).astype(int)
    # canonical orientation: first nonzero ambient component positive
    for i in range(rank):
        s = _canonical_sign(gd[:, i])
        gd[:, i] *= s
        lift[:, i] *= s
        omega_d[:, i] *= s
    # dual of omega_d inside H, cross-checked against the projection
    if rank:
        dual_in_h = 2 * np.pi * omega_d @ np.linalg.inv(omega_d.T @ omega_d)
        if not np.allclose(dual_in_h, gd, atol=1e-10 * max(1.0, np.abs(gd).max())):
            raise LatticeError("internal: projected lattice is not dual to the kernel lattice")
        q, _ = np.linalg.qr(gd)
        hyper = q[:, :rank]
    else:
        hyper = np.zeros((d, 0))
    return GammaDelta(
        dual=dual,
        omega=omega,
        delta=k,
        delta_vec=delta_vec,
        hyperplane_basis=hyper,
        gd_basis=gd,
        gd_lift=lift.astype(np.int64),
        omega_delta_basis=omega_d,
        delta_star=delta_star,
    )


@dataclass(frozen=True)
class QuasiDecomp:
    """``point = beta + tau + (j + v) * delta`` with tau in the centred F_delta."""

    beta: tuple[int, ...]
    tau: np.ndarray = field(compare=False)
    j: int
    v: float

    def reconstruct(self, gd: GammaDelta) -> np.ndarray:
        return gd.point(self.beta) + self.tau + (self.j + self.v) * gd.delta_vec


def decompose(point, gd: GammaDelta) -> QuasiDecomp:
    x = np.asarray(point, dtype=float)
    dv = gd.delta_vec
    c = float(x @ dv / (dv @ dv))
    j = math.floor(c)
    v = c - j
    if v >= 1.0:  # rounding guard
        j, v = j + 1, 0.0
    xh = x - c * dv
    y = gd.coordinates(xh)
    beta = np.floor(np.asarray(y) + 0.5).astype(int)
    tau = xh - gd.point(beta)
    return QuasiDecomp(tuple(int(b) for b in beta), tau, int(j), float(v))


def in_V(point, b, c: float) -> bool:
    """``| |x+b|^2 - |x|^2 | < c`` for ambient H-vectors ``x`` and ``b``."""
    x = np.asarray(point, dtype=float)
    b = np.asarray(b, dtype=float)
    return abs(2 * float(x @ b) + float(b @ b)) < c


# --------------------------------------------------------------------------
# selection of the anchor point beta


@dataclass(frozen=True)
class SelectionParams:
    """Exponents and constants of the selection predicates.

    Defaults: ``alpha = 1/(4 * 3^d (d+1))``, ``alpha_k = 3^k alpha`` and
    ``a = 1 - alpha_d + alpha``.  The dimensionless constants multiply the
    powers of rho in each predicate and may be overridden for desk-scale runs.
    """

    rho: float
    dim: int = 2
    alpha: float | None = None
    a: float | None = None
    window_lo: float = 1.0 / 3.0  # (beta, b) lower bound factor
    window_hi: float = 3.0  # (beta, b) upper bound factor
    plane_margin: float = 1.0 / 3.0  # (beta, gamma) for gamma in the plane of delta, b
    offplane_margin: float = 1.0 / 3.0  # (beta, gamma) for gamma off that plane
    v_gap: float = 1.0  # multiplier of rho^(1/2) in the bisector exclusion
    resonance: float = 4.0  # multiplier of d_delta * rho^alpha_d in the resonance set
    cutoff: float | None = None  # |gamma| bound for support predicates (default rho^alpha)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        d = self.dim
        alpha = self.alpha if self.alpha is not None else 1.0 / (4 * 3**d * (d + 1))
        object.__setattr__(self, "alpha", float(alpha))
        a = self.a if self.a is not None else 1.0 - 3**d * alpha + alpha
        object.__setattr__(self, "a", float(a))
        if not 2 * self.alpha < self.a < 1:
            raise ValueError(f"exponents violate 2*alpha < a < 1 (alpha={self.alpha}, a={self.a})")

    def alpha_k(self, k: int) -> float:
        return 3**k * self.alpha

    @property
    def alpha_d(self) -> float:
        return self.alpha_k(self.dim)

    @property
    def support_cutoff(self) -> float:
        return self.cutoff if self.cutoff is not None else self.rho**self.alpha

    def overrides(self) -> dict:
        """Constants that differ from the defaults."""
        base = SelectionParams(rho=self.rho, dim=self.dim)
        out = {}
        for name in ("alpha", "a", "window_lo", "window_hi", "plane_margin",
                     "offplane_margin", "v_gap", "resonance", "cutoff"):
            if getattr(self, name) != getattr(base, name):
                out[name] = getattr(self, name)
        return out


@dataclass(frozen=True)
class BetaSelection:
    beta: tuple[int, ...]
    beta_vec: np.ndarray = field(compare=False)
    margin: float
    margins: dict = field(compare=False)
    feasible_count: int
    scanned: int


_PREDICATES = ("annulus", "window", "plane", "offplane", "bisector", "resonance")


def _margin_above(x: float, lo: float) -> float:
    return (x - lo) / lo if lo > 0 else math.inf


def _margin_below(x: float, hi: float) -> float:
    return (hi - x) / hi if hi > 0 else -math.inf


def _distance_to_squares(x: float, v: float) -> float:
    """min over integers j of |(j+v)^2 - x|."""
    r = math.sqrt(max(x, 0.0))
    js = {math.floor(r - v), math.floor(r - v) + 1, math.floor(-r - v), math.floor(-r - v) + 1}
    return min(abs((j + v) ** 2 - x) for j in js)


def beta_margins(beta_vec, gd: GammaDelta, b_vec, v: float, params: SelectionParams,
                 support: np.ndarray | None = None, plane_mask: np.ndarray | None = None) -> dict:
    """Normalized margins of every predicate for a candidate point.

    A predicate holds iff its margin is positive.  ``support`` holds ambient
    vectors of the off-line potential modes within the cutoff, ``plane_mask``
    marks those lying in the plane spanned by delta and b.
    """
    rho, a, al, ad = params.rho, params.a, params.alpha, params.alpha_d
    dd = gd.diameter
    nb = float(np.linalg.norm(beta_vec))
    out = {}
    lo, hi = 0.5 * rho + dd + 1, 1.5 * rho - dd - 1
    out["annulus"] = min(_margin_above(nb, lo), _margin_below(nb, hi)) if hi > lo else -math.inf
    pb = abs(float(beta_vec @ b_vec))
    out["window"] = min(_margin_above(pb, params.window_lo * rho**a),
                        _margin_below(pb, params.window_hi * rho**a))
    plane, offplane = math.inf, math.inf
    if support is not None and len(support):
        dots = np.abs(support @ beta_vec)
        if plane_mask is not None and plane_mask.any():
            plane = _margin_above(float(dots[plane_mask].min()), params.plane_margin * rho**a)
        if plane_mask is None or (~plane_mask).any():
            sel = ~plane_mask if plane_mask is not None else slice(None)
            offplane = _margin_above(float(dots[sel].min()),
                                     params.offplane_margin * rho ** (a + 2 * al))
    out["plane"], out["offplane"] = plane, offplane
    small = [c for c in lattice_points(gd.gd_basis, rho**ad) if any(c)]
    bis, res = math.inf, math.inf
    if small:
        bv = gd.point(np.array(small))
        shifts = np.abs(2 * bv @ beta_vec + (bv * bv).sum(1))
        bis = _margin_above(float(shifts.min()), params.v_gap * math.sqrt(rho))
        # distance of -(2(beta,b') + |b'|^2) to the set {|(j+v)delta|^2 : j in Z}
        dn2 = gd.delta_norm**2
        targets = -(2 * bv @ beta_vec + (bv * bv).sum(1)) / dn2
        best = min(_distance_to_squares(x, v) for x in targets) * dn2
        res = _margin_above(best, params.resonance * dd * rho**ad)
    out["bisector"], out["resonance"] = bis, res
    return out


def select_beta(gd: GammaDelta, b, v: float, params: SelectionParams,
                potential=None) -> BetaSelection:
    """Scan Gamma_delta in the annulus rho/2 < |beta| < 3 rho/2 for an anchor point.

    Among points satisfying every predicate the one with the largest minimum
    normalized margin wins; ties go to the lexicographically largest
    coordinates.
    """
    b = _as_int_vector(b)
    if len(b) != gd.rank:
        raise LatticeError(f"b needs {gd.rank} coordinates")
    if not is_maximal(b):
        raise LatticeError(f"b {b} is not maximal in Gamma_delta")
    if not 0 <= v < 1:
        raise ValueError("v must lie in [0, 1)")
    b_vec = gd.point(b)
    rho = params.rho
    support = plane_mask = None
    if potential is not None:
        coords, vecs, mask = [], [], []
        bl = list(gd.lift(b))
        for g in potential.support_coords():
            if integer_rank([gd.delta, g]) < 2:
                continue  # on the line of delta
            vec = gd.dual.point(g)
            if np.linalg.norm(vec) >= params.support_cutoff:
                continue
            coords.append(g)
            vecs.append(vec)
            mask.append(integer_rank([gd.delta, bl, g]) <= 2)
        support = np.array(vecs).reshape(-1, gd.dim)
        plane_mask = np.array(mask, dtype=bool)

    cands = lattice_points(gd.gd_basis, 1.5 * rho)
    norms = np.linalg.norm(gd.point(cands), axis=1) if len(cands) else np.zeros(0)
    cands = cands[(norms > 0.5 * rho) & (norms < 1.5 * rho)]
    stats = {p: 0 for p in _PREDICATES}
    best = None
    feasible = 0
    for c in sorted(tuple(int(x) for x in row) for row in cands):
        bv = gd.point(c)
        m = beta_margins(bv, gd, b_vec, v, params, support, plane_mask)
        bad = [k for k, val in m.items() if not val > 0]
        for k in bad:
            stats[k] += 1
        if bad:
            continue
        feasible += 1
        score = min(m.values())
        if best is None or score >= best[0]:  # ascending scan: ties go to the largest
            best = (score, c, bv, m)
    if best is None:
        worst = max(stats, key=stats.get) if stats else "annulus"
        raise SelectionError(
            f"no feasible beta at rho={rho:g} among {len(cands)} candidates; "
            f"most violated predicate: {worst} ({stats.get(worst, 0)})",
            stats, len(cands))
    score, c, bv, m = best
    return BetaSelection(c, bv, float(score), m, feasible, len(cands))
