"""Recovering directional data from band functions alone.

For a primitive delta, a primitive b in Gamma_delta, a label j and a Floquet
parameter v, each level rho_k of the schedule fixes an anchor beta_k and
sweeps tau over a midpoint grid on F_delta.  At every node the band
functions at t = beta_k + tau + (j + v) delta are computed near the energy
|beta_k + tau|^2 + |(j + v) delta|^2 and screened:

* the *A test*: distance to the free value below ``window`` (default 1),
  simplicity, and the normalized derivative
  |1/2 |beta+tau| dLambda/dh - |beta+tau|^2| below ``slack * rho^(2-2a+alpha)``;
* the *B test*: simplicity, the same derivative window, and distance to
  |beta+tau|^2 + mu_j(v) below ``slack * rho^(-2a+alpha/2)``.

A node with exactly one passing eigenvalue is accepted; several passing
eigenvalues mark it ambiguous and it is dropped, except that in the A test a
tie is broken by rank (``resolve="rank"``): the passing eigenvalues must be
exactly as many as the labels whose free values lie in the window, and the
rank of j among those labels picks one.  Averages of
Lambda - |beta+tau|^2 over A-accepted nodes tend to mu_j(v); averages of
4 (beta+tau, b)^2 / |b|^4 (Lambda - |beta+tau|^2 - mu_j(v)) over B-accepted
nodes tend to the integral of |q_{delta,b}|^2 |phi_{j,v}|^2.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bands import BasisSpec, assemble_and_solve, default_window, free_gap_min
from .lattice import GammaDelta, SelectionParams, select_beta
from .potential import FourierPotential, directional

__all__ = [
    "PipelineSettings",
    "NodeSolve",
    "LevelData",
    "ExtractionRun",
    "NodeVerdict",
    "InvariantEstimate",
    "AcceptanceError",
    "prepare_run",
    "classify_A",
    "classify_B",
    "extract_mu",
    "extract_J",
    "richardson",
    "thread_count",
    "window_labels",
    "oracle_estimate",
    "neighbour_separation",
    "Separation",
    "verdicts_A",
    "verdicts_B",
    "tau_grid",
]

THREADS_ENV = "BLOCH_INVARIANTS_THREADS"

# Selection constants that admit anchors at rho of a few tens; the asymptotic
# resonance constant 4 leaves no candidate below rho ~ 10^3.
DESK_SELECTION = {"resonance": 0.5}


def thread_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, default)))
    except ValueError:
        return default


class AcceptanceError(RuntimeError):
    """Too few quadrature nodes passed the classifier."""

    def __init__(self, message: str, counts: dict):
        super().__init__(f"{message}; failure counts: {counts}")
        self.counts = counts


@dataclass(frozen=True)
class PipelineSettings:
    """Knobs of the extraction run.

    ``window`` is the half-width of the free-value test, ``slack`` multiplies
    the powers of rho in the derivative and mu-centred tests.  ``normalize``
    selects whether averages divide by the accepted measure (``"accepted"``)
    or by the whole measure of F_delta (``"domain"``).
    """

    slack: float = 4.0
    window: float = 1.0
    resolve: str = "rank"
    n_tau: int = 64
    factor: float = 2.0
    levels: int = 2
    normalize: str = "accepted"
    extrapolate: bool = True
    mu_order: float = 2.0
    J_order: float = 1.0
    basis_radius: float | None = None
    basis_window: float | None = None
    energy_pad: float = 4.0
    trust_tol: float = 1e-8
    gap_min: float | None = None
    min_acceptance: float = 0.5
    max_dim: int = 6000
    selection: dict = field(default_factory=lambda: dict(DESK_SELECTION))
    threads: int | None = None

    def __post_init__(self):
        if self.normalize not in ("accepted", "domain"):
            raise ValueError("normalize must be 'accepted' or 'domain'")
        if self.resolve not in ("rank", "drop"):
            raise ValueError("resolve must be 'rank' or 'drop'")
        if self.levels < 1 or self.n_tau < 1 or self.factor <= 1:
            raise ValueError("need levels >= 1, n_tau >= 1 and factor > 1")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class NodeSolve:
    """Band data at one quadrature node.

    Arrays run over the eigenvalues computed in the energy range.
    ``derivs`` holds the normalized derivative 1/2 |beta+tau| dLambda/dh
    (NaN where the eigenvalue is not simple).
    """

    tau: np.ndarray
    bt: np.ndarray
    t: np.ndarray
    eigenvalues: np.ndarray
    derivs: np.ndarray
    gaps: np.ndarray
    trusted: np.ndarray
    gap_min: float
    dim: int


@dataclass(frozen=True, eq=False)
class LevelData:
    rho: float
    params: SelectionParams
    beta: tuple[int, ...]
    beta_vec: np.ndarray
    margin: float
    nodes: list[NodeSolve]


@dataclass(frozen=True, eq=False)
class ExtractionRun:
    delta: tuple[int, ...]
    b: tuple[int, ...]
    j: int
    v: float
    gd: GammaDelta
    b_vec: np.ndarray
    settings: PipelineSettings
    tau_nodes: np.ndarray
    weights: np.ndarray
    levels: list[LevelData]

    @property
    def rho_schedule(self) -> list[float]:
        return [lv.rho for lv in self.levels]

    @property
    def beta_k(self) -> list[tuple[int, ...]]:
        return [lv.beta for lv in self.levels]

    @property
    def free_value(self) -> float:
        return (self.j + self.v) ** 2 * self.gd.delta_norm**2


def window_labels(j: int, v: float, window: float) -> list[int]:
    """Labels whose free value lies within ``window`` of that of j, sorted by free value.

    ``window`` is measured in units of |delta|^2.
    """
    free = (j + v) ** 2
    span = int(np.ceil(np.sqrt(free + window))) + 2
    ks = [k for k in range(-span, span + 1) if abs((k + v) ** 2 - free) < window]
    return sorted(ks, key=lambda k: (k + v) ** 2)


def tau_grid(gd: GammaDelta, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint grid on the centred F_delta with ``n`` nodes per axis."""
    r = gd.rank
    u = -0.5 + (np.arange(n) + 0.5) / n
    coords = np.stack(np.meshgrid(*([u] * r), indexing="ij"), -1).reshape(-1, r)
    w = np.full(len(coords), gd.fd_volume / n**r)
    return coords @ gd.gd_basis.T, w


def _solve_node(q, gd, beta_vec, tau, j, v, settings, radius, pad) -> NodeSolve:
    bt = beta_vec + tau
    t = bt + (j + v) * gd.delta_vec
    energy = float(bt @ bt + (j + v) ** 2 * gd.delta_norm**2)
    window = settings.basis_window or default_window(q, energy)
    spec = BasisSpec("shell", radius=radius, energy=energy, window=window,
                     max_dim=settings.max_dim)
    band = assemble_and_solve(q, t, spec, energy_range=(energy - pad, energy + pad),
                              trust_tol=settings.trust_tol)
    gmin = settings.gap_min if settings.gap_min is not None else free_gap_min(band)
    gaps = band.gaps()
    nbt = float(np.linalg.norm(bt))
    h = bt / nbt
    c2 = np.abs(band.vectors) ** 2
    derivs = 2.0 * (band.basis.momenta @ h) @ c2
    derivs = np.where(gaps > gmin, 0.5 * nbt * derivs, np.nan)
    return NodeSolve(tau=tau, bt=bt, t=t, eigenvalues=band.eigenvalues, derivs=derivs,
                     gaps=gaps, trusted=band.trusted, gap_min=gmin, dim=len(band.basis))


def prepare_run(q: FourierPotential, gd: GammaDelta, b, j: int, v: float, rho0: float,
                settings: PipelineSettings | None = None) -> ExtractionRun:
    """Select anchors along the rho schedule and solve every quadrature node."""
    settings = settings or PipelineSettings()
    if not 0 < v < 1 or v == 0.5:
        raise ValueError("v must lie in (0, 1/2) or (1/2, 1)")
    b = tuple(int(x) for x in b)
    b_vec = gd.point(b)
    taus, weights = tau_grid(gd, settings.n_tau)
    Q = directional(q, gd.delta)
    pad = settings.energy_pad + 2.0 * sum(abs(c) for c in Q.coeffs.values())
    radius = settings.basis_radius or 4.0 * max(q.max_norm, 1.0)
    threads = settings.threads or thread_count()
    levels = []
    for k in range(settings.levels):
        rho = float(rho0 * settings.factor**k)
        params = SelectionParams(rho=rho, dim=gd.dim, **settings.selection)
        sel = select_beta(gd, b, v, params, potential=q)

        def work(tau, beta_vec=sel.beta_vec):
            return _solve_node(q, gd, beta_vec, tau, j, v, settings, radius, pad)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                nodes = list(pool.map(work, taus))
        else:
            nodes = [work(tau) for tau in taus]
        levels.append(LevelData(rho, params, sel.beta, sel.beta_vec, sel.margin, nodes))
    return ExtractionRun(delta=gd.delta, b=b, j=int(j), v=float(v), gd=gd, b_vec=b_vec,
                         settings=settings, tau_nodes=taus, weights=weights, levels=levels)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class NodeVerdict:
    """Outcome of screening one node: the accepted index or the reason for rejection."""

    accepted: int | None
    value: float | None
    passing: tuple[int, ...]
    reason: str

    @property
    def ambiguous(self) -> bool:
        return len(self.passing) > 1


def _thresholds(params: SelectionParams, slack: float) -> tuple[float, float]:
    rho, a, al = params.rho, params.a, params.alpha
    return slack * rho ** (2 - 2 * a + al), slack * rho ** (-2 * a + al / 2)


def _verdict(node: NodeSolve, first: np.ndarray, first_name: str, deriv_tol: float,
             rank: tuple[int, int] | None = None) -> NodeVerdict:
    ok_first = first & node.trusted
    simple = np.isfinite(node.derivs)
    ok_deriv = np.zeros_like(simple)
    ok_deriv[simple] = np.abs(node.derivs[simple] - node.bt @ node.bt) < deriv_tol
    passing = tuple(int(i) for i in np.flatnonzero(ok_first & simple & ok_deriv))
    if rank is not None and 0 < len(passing) != rank[1]:
        # a label in the window lost its state, so the ranks cannot be trusted
        return NodeVerdict(None, None, passing, "incomplete")
    if len(passing) == 1:
        N = passing[0]
        return NodeVerdict(N, float(node.eigenvalues[N]), passing, "accepted")
    if rank is not None and passing:
        N = passing[rank[0]]
        return NodeVerdict(N, float(node.eigenvalues[N]), passing, "accepted-by-rank")
    if passing:
        return NodeVerdict(None, None, passing, "ambiguous")
    if not ok_first.any():
        return NodeVerdict(None, None, passing, first_name)
    if not (ok_first & simple).any():
        return NodeVerdict(None, None, passing, "simple")
    return NodeVerdict(None, None, passing, "derivative")


def classify_A(node: NodeSolve, j: int, v: float, delta_norm: float,
               params: SelectionParams, slack: float = 4.0, window: float = 1.0,
               resolve: str = "rank") -> NodeVerdict:
    """Free-value window, simplicity and derivative window."""
    deriv_tol, _ = _thresholds(params, slack)
    free = (j + v) ** 2 * delta_norm**2
    first = np.abs(node.eigenvalues - node.bt @ node.bt - free) < window
    rank = None
    if resolve == "rank":
        labels = window_labels(j, v, window / delta_norm**2)
        rank = (labels.index(j), len(labels))
    return _verdict(node, first, "window", deriv_tol, rank)


def classify_B(node: NodeSolve, mu: float, params: SelectionParams,
               slack: float = 4.0) -> NodeVerdict:
    """Simplicity, derivative window and the narrow window around |beta+tau|^2 + mu."""
    deriv_tol, mu_tol = _thresholds(params, slack)
    first = np.abs(node.eigenvalues - node.bt @ node.bt - mu) < mu_tol
    return _verdict(node, first, "mu-window", deriv_tol)


# --------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class InvariantEstimate:
    name: str
    value: float
    method: str
    per_level: tuple[float, ...] = ()
    rho_schedule: tuple[float, ...] = ()
    beta_norms: tuple[float, ...] = ()
    acceptance: tuple[float, ...] = ()
    error_proxy: float = 0.0
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "method": self.method,
            "per_level": list(self.per_level),
            "rho_schedule": list(self.rho_schedule),
            "beta_norms": list(self.beta_norms),
            "acceptance": list(self.acceptance),
            "error_proxy": self.error_proxy,
            "notes": dict(self.notes),
        }


def oracle_estimate(name: str, value: float, **notes) -> InvariantEstimate:
    """An estimate computed directly from Fourier data (empty schedule)."""
    return InvariantEstimate(name=name, value=float(value), method="oracle", notes=notes)


def richardson(values, scales, order: float) -> float:
    """Value at 1/scale -> 0 of the curve a + sum_i c_i scale^-(order+i), i < n-1, through all n points."""
    y = np.asarray(values, dtype=float)
    if len(y) < 2:
        return float(y[-1])
    s = np.asarray(scales, dtype=float)
    M = np.column_stack([np.ones_like(s)] + [s ** -(order + i) for i in range(len(y) - 1)])
    return float(np.linalg.solve(M, y)[0])


def _average(run: ExtractionRun, verdicts, values) -> tuple[float, float]:
    w = run.weights
    acc = np.array([vd.accepted is not None for vd in verdicts], dtype=bool)
    total = float(w[acc] @ np.asarray(values)[acc]) if acc.any() else 0.0
    denom = float(w[acc].sum()) if run.settings.normalize == "accepted" else float(w.sum())
    return total / denom if denom > 0 else np.nan, float(w[acc].sum() / w.sum())


def _failure_counts(verdicts) -> dict:
    out: dict[str, int] = {}
    for vd in verdicts:
        out[vd.reason] = out.get(vd.reason, 0) + 1
    return out


def _finish(run, name, per, acc, order, notes) -> InvariantEstimate:
    norms = [float(np.linalg.norm(lv.beta_vec)) for lv in run.levels]
    value = richardson(per, norms, order) if run.settings.extrapolate else per[-1]
    proxy = abs(per[-1] - per[-2]) if len(per) > 1 else float("nan")
    return InvariantEstimate(name=name, value=float(value), method="pipeline",
                             per_level=tuple(per), rho_schedule=tuple(run.rho_schedule),
                             beta_norms=tuple(norms), acceptance=tuple(acc),
                             error_proxy=float(proxy), notes=notes)


def verdicts_A(run: ExtractionRun, level: LevelData) -> list[NodeVerdict]:
    s = run.settings
    return [classify_A(nd, run.j, run.v, run.gd.delta_norm, level.params, s.slack, s.window,
                       s.resolve) for nd in level.nodes]


def verdicts_B(run: ExtractionRun, level: LevelData, mu: float) -> list[NodeVerdict]:
    return [classify_B(nd, mu, level.params, run.settings.slack) for nd in level.nodes]


def extract_mu(run: ExtractionRun) -> InvariantEstimate:
    """Average of Lambda - |beta+tau|^2 over A-accepted nodes, extrapolated in rho."""
    per, acc, counts = [], [], []
    for lv in run.levels:
        vds = verdicts_A(run, lv)
        vals = [vd.value - nd.bt @ nd.bt if vd.accepted is not None else 0.0
                for vd, nd in zip(vds, lv.nodes)]
        avg, rate = _average(run, vds, vals)
        counts.append(_failure_counts(vds))
        if rate < run.settings.min_acceptance:
            raise AcceptanceError(
                f"acceptance {rate:.2f} below {run.settings.min_acceptance} at rho={lv.rho:g}",
                counts[-1])
        per.append(avg)
        acc.append(rate)
    return _finish(run, f"mu[{run.j}]({run.v:g})", per, acc, run.settings.mu_order,
                   {"classifier": "A", "counts": counts})


def extract_J(run: ExtractionRun, mu: float | None = None, mu_source: str = "pipeline"
              ) -> InvariantEstimate:
    """Weighted mean of 4 (beta+tau, b)^2/|b|^4 (Lambda - |beta+tau|^2 - mu) over B-accepted nodes."""
    if mu is None:
        mu = extract_mu(run).value
        mu_source = "pipeline"
    b2 = float(run.b_vec @ run.b_vec)
    per, acc, counts = [], [], []
    for lv in run.levels:
        vds = verdicts_B(run, lv, mu)
        vals = [4.0 * (nd.bt @ run.b_vec) ** 2 / b2**2 * (vd.value - nd.bt @ nd.bt - mu)
                if vd.accepted is not None else 0.0 for vd, nd in zip(vds, lv.nodes)]
        avg, rate = _average(run, vds, vals)
        counts.append(_failure_counts(vds))
        if rate == 0:
            raise AcceptanceError(f"no node accepted at rho={lv.rho:g}", counts[-1])
        per.append(avg)
        acc.append(rate)
    return _finish(run, f"J[{run.j}]({run.v:g})", per, acc, run.settings.J_order,
                   {"classifier": "B", "mu": mu, "mu_source": mu_source, "counts": counts})


@dataclass(frozen=True)
class Separation:
    """How often the derivative test rejects the neighbours of an accepted eigenvalue.

    ``foreign`` counts only neighbours that are not themselves model states
    |beta+tau|^2 + mu_j'(v) of the same anchor; ``raw`` counts all simple N+-1.
    """

    accepted: int
    foreign: float
    raw: float


def neighbour_separation(run: ExtractionRun, level: LevelData, mus, tol: float | None = None
                         ) -> Separation:
    """Fraction of accepted nodes whose simple neighbours N-1, N+1 fail the derivative test.

    ``mus`` are the directional eigenvalues mu_j'(v) used to recognise
    neighbours that belong to the same anchor (they share the leading
    derivative and are told apart by the energy windows instead).
    """
    deriv_tol, mu_tol = _thresholds(level.params, run.settings.slack)
    tol = mu_tol if tol is None else tol
    mus = np.asarray(list(mus), dtype=float)
    n = ok_foreign = ok_raw = 0
    for nd, vd in zip(level.nodes, verdicts_A(run, level)):
        if vd.accepted is None:
            continue
        n += 1
        bt2 = nd.bt @ nd.bt
        f_ok = r_ok = True
        for M in (vd.accepted - 1, vd.accepted + 1):
            if not 0 <= M < len(nd.eigenvalues) or not np.isfinite(nd.derivs[M]):
                continue
            passes = abs(nd.derivs[M] - bt2) < deriv_tol
            r_ok &= not passes
            same_anchor = np.abs(nd.eigenvalues[M] - bt2 - mus).min(initial=np.inf) < tol
            if not same_anchor:
                f_ok &= not passes
        ok_foreign += f_ok
        ok_raw += r_ok
    if n == 0:
        return Separation(0, float("nan"), float("nan"))
    return Separation(n, ok_foreign / n, ok_raw / n)
