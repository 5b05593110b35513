"""Algebraic identities behind the asymptotic formulas, checked numerically.

Three checks are provided:

* the six-fraction identity: for x = (beta, beta1), y = (beta, beta2) the sum
  1/(x(x+y)) + 1/(y(x+y)) - 1/(xy) - 1/(yx) + 1/((x+y)y) + 1/((x+y)x) vanishes;
* pairwise antisymmetry of the first-order terms
  C'(beta1, n1, n2) = c(n1, beta1) c(n2, -beta1) a(n1+n2) / (-2 (beta, beta1)),
  where c(n, beta1) is the Fourier coefficient of q at beta1 + (n + shift) delta and
  a(n) = (e^{i n zeta} phi_j', phi_j);
* the second-order sum C1 over states (j'', beta + beta1) off the line of delta,
  compared with a quarter of the integral of |f_{delta,beta+tau}|^2 |phi_{j,v}|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hill import HillSpectrum, hill_solve, moment
from .invariants import line_coefficients
from .lattice import GammaDelta
from .potential import FourierPotential, directional, f_field

__all__ = [
    "six_term_terms",
    "six_term_residual",
    "gamma_of",
    "a9_pair",
    "second_order_sum",
    "quarter_integral",
    "C1Comparison",
    "compare_C1",
    "IdentityReport",
    "check_identities",
    "DegenerateGeometry",
]


class DegenerateGeometry(ValueError):
    """A denominator of the identity vanishes for the given geometry."""


def six_term_terms(beta, beta1, beta2, tol: float = 1e-9) -> np.ndarray:
    beta, beta1, beta2 = (np.asarray(x, dtype=float) for x in (beta, beta1, beta2))
    x, y = float(beta @ beta1), float(beta @ beta2)
    scale = np.linalg.norm(beta) * max(np.linalg.norm(beta1), np.linalg.norm(beta2))
    if min(abs(x), abs(y), abs(x + y)) <= tol * max(scale, 1.0):
        raise DegenerateGeometry(f"(beta,beta1)={x:g}, (beta,beta2)={y:g}: a denominator vanishes")
    return np.array([
        1 / (x * (x + y)),
        1 / (y * (y + x)),
        1 / (x * -y),
        1 / (y * -x),
        1 / ((-x - y) * -y),
        1 / ((-x - y) * -x),
    ])


def six_term_residual(beta, beta1, beta2) -> float:
    """|sum of the six fractions| relative to the largest fraction."""
    t = six_term_terms(beta, beta1, beta2)
    return float(abs(t.sum()) / np.abs(t).max())


def gamma_of(gd: GammaDelta, beta1, n: int) -> tuple[int, ...]:
    """Dual-lattice coordinates of beta1 + (n + shift(beta1)) delta."""
    vec = gd.point(beta1) + (n + gd.shift_of(beta1)) * gd.delta_vec
    c = gd.dual.coordinates(vec)
    r = np.rint(c)
    if np.abs(c - r).max() > 1e-8:
        raise ValueError(f"beta1={tuple(beta1)} with n={n} is not a lattice vector")
    return tuple(int(x) for x in r)


def _overlap(c: np.ndarray, d: np.ndarray, k: int) -> complex:
    """sum_n c_n conj(d_{n+k}) for coefficient arrays on the same centred modes."""
    n = len(c)
    if abs(k) >= n:
        return 0j
    if k >= 0:
        return complex(np.vdot(d[k:], c[: n - k]))
    return complex(np.vdot(d[: n + k], c[-k:]))


def a9_pair(q: FourierPotential, gd: GammaDelta, hill: HillSpectrum, beta, beta1,
            n1: int, n2: int, j_prime: int, j: int) -> tuple[complex, complex]:
    """The terms C'(beta1, n1, n2) and C'(-beta1, n2, n1)."""
    beta_vec = gd.point(beta)
    b1 = tuple(int(x) for x in beta1)
    mb1 = tuple(-x for x in b1)
    den = float(beta_vec @ gd.point(b1))
    if den == 0:
        raise DegenerateGeometry("(beta, beta1) = 0")
    a = _overlap(hill.coeffs(j_prime), hill.coeffs(j), n1 + n2)

    def term(bb, m1, m2, sign):
        c1 = q[gamma_of(gd, bb, m1)]
        c2 = q[gamma_of(gd, tuple(-x for x in bb), m2)]
        return c1 * c2 * a / (-2.0 * sign * den)

    return term(b1, n1, n2, 1.0), term(mb1, n2, n1, -1.0)


def _off_line_groups(q: FourierPotential, gd: GammaDelta) -> dict:
    """Support of q off the line of delta grouped by projection: beta1 -> [(s, q_gamma)]."""
    groups: dict[tuple[int, ...], list] = {}
    for g, c in q.coeffs.items():
        b1, s = gd.gd_coords_of(g)
        if not any(b1):
            continue
        groups.setdefault(b1, []).append((s, c))
    return groups


class _HillCache:
    def __init__(self, Q, N: int):
        self.Q, self.N, self._store = Q, N, {}

    def __call__(self, v: float) -> HillSpectrum:
        key = round(v % 1.0, 12) % 1.0
        if key not in self._store:
            self._store[key] = hill_solve(self.Q, key, self.N)
        return self._store[key]


def _split(x: float) -> tuple[float, int]:
    """x = frac + k with frac in [0, 1) and integer k."""
    k = int(np.floor(x + 1e-12))
    return max(x - k, 0.0), k


def second_order_sum(q: FourierPotential, gd: GammaDelta, beta, tau, j: int, v: float,
                     N: int | None = None) -> float:
    """C1 = sum over beta1, j'' of A(j, j'') A(j'', j) / (lambda_{j,beta} - lambda_{j'',beta+beta1})."""
    Q = directional(q, gd.delta)
    N = N or abs(int(j)) + 4 * max(Q.bandwidth, 1) + 24
    cache = _HillCache(Q, N)
    hv = cache(v)
    cj = hv.coeffs(j)
    bt = gd.point(beta) + np.asarray(tau, dtype=float)
    lam = float(bt @ bt + hv.mu(j))
    groups = _off_line_groups(q, gd)
    total = 0.0 + 0j
    for b1, left in groups.items():
        right = groups.get(tuple(-x for x in b1), [])
        if not right:
            continue
        vp, _ = _split(v + left[0][0])
        hp = cache(vp)
        labels = hp.retained_labels
        L = np.zeros(len(labels), complex)
        R = np.zeros(len(labels), complex)
        for s1, c1 in left:
            _, k1 = _split(v + s1)
            L += c1 * np.array([_overlap(cj, hp.coeffs(jj), k1) for jj in labels])
        for s2, c2 in right:
            _, k2 = _split(vp + s2)
            R += c2 * np.array([_overlap(hp.coeffs(jj), cj, k2) for jj in labels])
        p = bt + gd.point(b1)
        D = lam - p @ p - np.array([hp.mu(jj) for jj in labels])
        total += np.sum(L * R / D)
    return float(total.real)


def quarter_integral(q: FourierPotential, gd: GammaDelta, beta, tau, j: int, v: float,
                     N: int | None = None, cutoff: float = np.inf) -> float:
    """(1/4) integral of |f_{delta,beta+tau}|^2 |phi_{j,v}|^2."""
    Q = directional(q, gd.delta)
    N = N or abs(int(j)) + 4 * max(Q.bandwidth, 1) + 24
    bt = gd.point(beta) + np.asarray(tau, dtype=float)
    f = f_field(q, gd.delta, bt, cutoff)
    if f.is_zero:
        return 0.0
    dens = line_coefficients(f.abs_sq(), gd.delta)
    return 0.25 * moment(hill_solve(Q, v, N), j, dens)


@dataclass(frozen=True)
class C1Comparison:
    beta: tuple[int, ...]
    tau: tuple[float, ...]
    C1: float
    quarter: float

    @property
    def rel_error(self) -> float:
        return abs(self.C1 - self.quarter) / abs(self.quarter)

    def as_dict(self) -> dict:
        return {"beta": list(self.beta), "tau": list(self.tau), "C1": self.C1,
                "quarter_integral": self.quarter, "rel_error": self.rel_error}


def compare_C1(q: FourierPotential, gd: GammaDelta, beta, tau, j: int, v: float) -> C1Comparison:
    beta = tuple(int(x) for x in beta)
    tau = np.asarray(tau, dtype=float)
    return C1Comparison(beta, tuple(float(x) for x in tau),
                        second_order_sum(q, gd, beta, tau, j, v),
                        quarter_integral(q, gd, beta, tau, j, v))


@dataclass
class IdentityReport:
    seed: int
    samples: int
    six_term_max: float = 0.0
    a9_max: float = 0.0
    rejected: int = 0
    c1: list = field(default_factory=list)
    tol: float = 1e-12

    @property
    def six_term_ok(self) -> bool:
        return self.six_term_max <= self.tol

    @property
    def a9_ok(self) -> bool:
        return self.a9_max <= self.tol

    @property
    def c1_trend_ok(self) -> bool:
        errs = [c.rel_error for c in self.c1]
        return all(b < a for a, b in zip(errs, errs[1:]))

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "samples": self.samples,
            "rejected": self.rejected,
            "six_term_max_residual": self.six_term_max,
            "a9_max_residual": self.a9_max,
            "six_term_ok": self.six_term_ok,
            "a9_ok": self.a9_ok,
            "c1": [c.as_dict() for c in self.c1],
            "c1_trend_ok": self.c1_trend_ok,
        }


def _random_gd_point(rng, rank: int, radius: int) -> tuple[int, ...]:
    while True:
        p = tuple(int(x) for x in rng.integers(-radius, radius + 1, size=rank))
        if any(p):
            return p


def check_identities(q: FourierPotential, gd: GammaDelta, samples: int = 50, seed: int = 0,
                     v: float = 0.3, j_range: tuple[int, int] = (0, 3), beta_radius: int = 16,
                     c1_betas=(), c1_tau=None, c1_j: int = 0, min_denominator: float = 0.5,
                     max_tries: int = 100_000) -> IdentityReport:
    """Run the three identity checks on seeded random geometry.

    Geometries with a denominator below ``min_denominator`` are rejected and
    resampled.  ``c1_betas`` lists Gamma_delta points (in increasing norm) at
    which C1 is compared with the quarter integral.
    """
    rng = np.random.default_rng(seed)
    report = IdentityReport(seed=seed, samples=samples)
    rank = gd.rank
    Q = directional(q, gd.delta)
    hill = hill_solve(Q, v, j_range[1] + 4 * max(Q.bandwidth, 1) + 24)
    groups = [b for b, left in _off_line_groups(q, gd).items()] or [None]
    done = tries = 0
    while done < samples:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"only {done} usable samples after {max_tries} draws")
        beta = _random_gd_point(rng, rank, beta_radius)
        b1 = _random_gd_point(rng, rank, 3)
        b2 = _random_gd_point(rng, rank, 3)
        bv, v1, v2 = gd.point(beta), gd.point(b1), gd.point(b2)
        x, y = bv @ v1, bv @ v2
        if min(abs(x), abs(y), abs(x + y)) < min_denominator:
            report.rejected += 1
            continue
        report.six_term_max = max(report.six_term_max, six_term_residual(bv, v1, v2))
        # antisymmetry, preferring beta1 in the support so that the terms are nonzero
        if groups[0] is not None:
            b1 = groups[int(rng.integers(len(groups)))]
            if abs(bv @ gd.point(b1)) < min_denominator:
                report.rejected += 1
                continue
        n1, n2 = (int(t) for t in rng.integers(-2, 3, size=2))
        jp, jj = (int(t) for t in rng.integers(j_range[0], j_range[1] + 1, size=2))
        t1, t2 = a9_pair(q, gd, hill, beta, b1, n1, n2, jp, jj)
        scale = max(abs(t1), abs(t2))
        if scale > 0:
            report.a9_max = max(report.a9_max, abs(t1 + t2) / scale)
        done += 1
    tau = np.zeros(gd.dim) if c1_tau is None else np.asarray(c1_tau, dtype=float)
    report.c1 = [compare_C1(q, gd, b, tau, c1_j, v) for b in c1_betas]
    return report
