"""Command-line interface: bands, hill, extract, verify, report.

Exit codes: 0 when every requested comparison is within tolerance, 1 when a
comparison fails (or too few nodes are accepted), 2 for configuration errors
and exceeded solver caps.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bands import BasisSpec, BasisTooLarge, assemble_and_solve
from .config import ConfigError, ExperimentConfig, config_from_dict, deviations, load_config
from .hill import extract_I17_from_mu, fit_A_expansion, hill_solve, phi_sq_coeffs
from .identities import check_identities
from .invariants import (Jk_from_A, NotTwoMode, derive_I16_I20, extract_Jk_family,
                         oracle_J, oracle_J_values)
from .lattice import SelectionError, SelectionParams, select_beta
from .pipeline import (AcceptanceError, InvariantEstimate, extract_J, extract_mu,
                       oracle_estimate, prepare_run)
from .potential import directional, oracle_invariants

log = logging.getLogger("bloch_invariants")

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG = 0, 1, 2
INVARIANTS = ("mu", "J", "Jk", "I16", "I17", "I20")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".15g")
    return str(x)


def _rel(est: float, ref: float) -> float:
    return abs(est - ref) / abs(ref) if ref != 0 else abs(est - ref)


class Report:
    """Accumulates comparisons and writes the JSON report and CSV tables."""

    def __init__(self, cfg: ExperimentConfig, command: str, args: dict):
        self.cfg = cfg
        self.command = command
        self.args = args
        self.rows: list[dict] = []
        self.extra: dict = {}
        self.timings: dict = {}
        self.status = "ok"
        self.error: str | None = None
        self.exit_code = EXIT_OK
        self.mu_source = args.get("mu_source") or cfg["mu_source"]

    def compare(self, name: str, j, est: InvariantEstimate, oracle: float, tol: float) -> bool:
        rel = _rel(est.value, oracle)
        ok = bool(rel <= tol)
        self.rows.append({"invariant": name, "j": j, "estimate": est.as_dict(),
                          "oracle": float(oracle), "rel_error": float(rel),
                          "tolerance": float(tol), "passed": ok})
        log.info("%-4s j=%-4s estimate=% .10g oracle=% .10g rel=%.3e %s", name, j, est.value,
                 oracle, rel, "ok" if ok else "FAIL")
        return ok

    def check(self, name: str, value: float, tol: float, detail: dict) -> bool:
        ok = bool(value <= tol)
        self.rows.append({"invariant": name, "j": "", "estimate": {"value": float(value),
                                                                  "method": "check"},
                          "oracle": 0.0, "rel_error": float(value), "tolerance": float(tol),
                          "passed": ok, "detail": detail})
        log.info("%-10s value=%.3e tol=%.1e %s", name, value, tol, "ok" if ok else "FAIL")
        return ok

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows)

    def as_dict(self) -> dict:
        status = self.status
        if status == "ok" and not self.passed:
            status = "tolerance_failure"
        return {
            "tool": "bloch_invariants",
            "version": __version__,
            "command": self.command,
            "arguments": self.args,
            "config_hash": self.cfg.hash,
            "config": self.cfg.raw,
            "status": status,
            "error": self.error,
            "results": self.rows,
            **self.extra,
            "deviations": deviations(self.cfg.settings(), self.mu_source),
            "timings": self.timings,
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["invariant", "j", "level", "rho", "beta_norm", "acceptance", "value",
                    "oracle", "rel_error", "passed"])
        for r in self.rows:
            est = r["estimate"]
            for k, val in enumerate(est.get("per_level", [])):
                w.writerow([r["invariant"], r["j"], k, _fmt(est["rho_schedule"][k]),
                            _fmt(est["beta_norms"][k]), _fmt(est["acceptance"][k]), _fmt(val),
                            "", "", ""])
            w.writerow([r["invariant"], r["j"], "final", "", "", "", _fmt(est["value"]),
                        _fmt(r["oracle"]), _fmt(r["rel_error"]), r["passed"]])
        return buf.getvalue()

    def write(self, stem: str) -> Path:
        out = Path(self.cfg["output"])
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{stem}.json"
        path.write_text(json.dumps(self.as_dict(), indent=2, default=_json_default) + "\n")
        (out / f"{stem}.csv").write_text(self.csv_text())
        return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"cannot serialise {type(o).__name__}")


# --------------------------------------------------------------------------
# individual invariants


def _run(cfg, j, settings, rho0):
    return prepare_run(cfg.potential, cfg.gd, cfg.b, j, cfg["v"], rho0, settings)


def do_mu(cfg, rep, js, settings, rho0):
    Q = directional(cfg.potential, cfg.delta)
    hill = hill_solve(Q, cfg["v"], max(abs(j) for j in js) + 4 * max(Q.bandwidth, 1) + 24)
    for j in js:
        est = extract_mu(_run(cfg, j, settings, rho0))
        ends = {}
        for v in (0.0, 0.5):
            hv = hill_solve(Q, v, abs(j) + 4 * max(Q.bandwidth, 1) + 24)
            ends[str(v)] = hv.mu(j)
        est.notes["interval_endpoints"] = ends
        rep.compare("mu", j, est, hill.mu(j), cfg["tolerances"]["mu"])


def do_J(cfg, rep, js, settings, rho0, mu_source="oracle"):
    """mu is always extracted and checked; J subtracts either it or the Hill value."""
    Q = directional(cfg.potential, cfg.delta)
    hill = hill_solve(Q, cfg["v"], max(abs(j) for j in js) + 4 * max(Q.bandwidth, 1) + 24)
    for j in js:
        run = _run(cfg, j, settings, rho0)
        mu_est = extract_mu(run)
        rep.compare("mu", j, mu_est, hill.mu(j), cfg["tolerances"]["mu"])
        mu = hill.mu(j) if mu_source == "oracle" else mu_est.value
        est = extract_J(run, mu=mu, mu_source=mu_source)
        rep.compare("J", j, est, oracle_J(cfg.potential, cfg.gd, cfg.b, j, cfg["v"], hill=hill),
                    cfg["tolerances"]["J"])


def _J_values(cfg, settings, rho0) -> dict:
    jk = cfg["jk"]
    js = range(jk["j_min"], jk["j_max"] + 1)
    if jk["source"] == "oracle":
        return oracle_J_values(cfg.potential, cfg.gd, cfg.b, js, cfg["v"])
    out = {}
    for j in js:
        run = _run(cfg, j, settings, rho0)
        out[j] = extract_J(run, mu=extract_mu(run).value).value
    return out


def do_Jk(cfg, rep, settings, rho0):
    jk = cfg["jk"]
    Jv = _J_values(cfg, settings, rho0)
    fam = extract_Jk_family(Jv, order=jk["order"], extra_terms=jk["extra_terms"])
    Q = directional(cfg.potential, cfg.delta)
    A = fit_A_expansion(Q, cfg["v"], range(jk["j_min"], jk["j_max"] + 1), order=jk["order"],
                        extra_terms=jk["extra_terms"])
    ref = Jk_from_A(cfg.potential, cfg.gd, cfg.b, A)
    src = f"J values from {jk['source']}"
    J0 = abs(fam[0]) if fam[0] != 0 else 1.0
    for k, val in enumerate(fam.J):
        est = InvariantEstimate(f"J{k}", val, "fit", notes={"source": src, "cond": fam.cond})
        if k == 1 or abs(ref[k]) < 1e-12 * J0:
            # vanishing coefficients are compared on the scale of J0
            rep.check(f"J{k}/J0", abs(val - ref[k]) / J0, cfg["tolerances"]["Jk"],
                      {"estimate": val, "reference": ref[k]})
        else:
            rep.compare(f"J{k}", "", est, ref[k], cfg["tolerances"]["Jk"])
    return fam, A


def do_I16_I20(cfg, rep, settings, rho0, which=("I16", "I20")):
    Q = directional(cfg.potential, cfg.delta)
    if not Q.is_two_mode:
        raise NotTwoMode(f"the directional potential has modes {sorted(Q.coeffs)}; the "
                         "I16/I20 relations need exactly the modes +-1")
    fam, A = do_Jk(cfg, rep, settings, rho0)
    got = derive_I16_I20(fam, A, Q)
    orc = oracle_invariants(cfg.potential, cfg.gd, cfg.b)
    for name in which:
        est = InvariantEstimate(name, got[name], "fit", notes={"constants": A.constants})
        rep.compare(name, "", est, getattr(orc, name), cfg["tolerances"][name])


def do_I17(cfg, rep):
    Q = directional(cfg.potential, cfg.delta)
    m = cfg["i17"]
    fit = extract_I17_from_mu(Q, (m["m_min"], m["m_max"]))
    est = InvariantEstimate("I17", fit.estimate, "eigenvalue fit", notes=fit.as_dict())
    rep.compare("I17", "", est, oracle_estimate("I17", Q.l2_norm_sq()).value,
                cfg["tolerances"]["I17"])


def do_identities(cfg, rep, settings):
    idc = cfg["identities"]
    q, gd, v = cfg.potential, cfg.gd, cfg["v"]
    betas = []
    for rho in idc["c1_rho"]:
        params = SelectionParams(rho=rho, dim=gd.dim, **settings.selection)
        betas.append(select_beta(gd, cfg.b, v, params, potential=q).beta)
    r = check_identities(q, gd, samples=idc["samples"], seed=idc["seed"], v=v,
                         c1_betas=betas, c1_j=idc["c1_j"])
    tol = cfg["tolerances"]["identity"]
    rep.check("six-term", r.six_term_max, tol, {"samples": r.samples, "seed": r.seed})
    rep.check("antisymmetry", r.a9_max, tol, {"samples": r.samples, "seed": r.seed})
    if r.c1:
        last = r.c1[-1]
        rep.check("C1", last.rel_error, cfg["tolerances"]["C1"], last.as_dict())
        rep.check("C1-trend", 0.0 if r.c1_trend_ok else 1.0, 0.5,
                  {"rel_errors": [c.rel_error for c in r.c1]})
    rep.extra["identities"] = r.as_dict()


# --------------------------------------------------------------------------
# subcommands


def cmd_bands(cfg: ExperimentConfig, a) -> int:
    t = np.asarray(a.t, dtype=float)
    q = cfg.potential
    if len(t) != q.dim:
        raise ConfigError(f"--t needs {q.dim} components")
    if a.window is not None:
        energy = float(t @ t) if a.energy is None else a.energy
        radius = a.cutoff or 4.0 * max(q.max_norm, 1.0)
        spec = BasisSpec("shell", radius=radius, energy=energy, window=a.window,
                         max_dim=cfg["solver"]["max_dim"])
        band = assemble_and_solve(q, t, spec, energy_range=(energy - a.pad, energy + a.pad),
                                  trust_tol=cfg["solver"]["trust_tol"])
    else:
        spec = BasisSpec("ball", radius=a.cutoff or 8.0, max_dim=cfg["solver"]["max_dim"])
        band = assemble_and_solve(q, t, spec, trust_tol=cfg["solver"]["trust_tol"])
    n = len(band.eigenvalues) if a.n_bands is None else min(a.n_bands, len(band.eigenvalues))
    gaps = band.gaps()
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["N", "Lambda", "trusted", "gap"])
    for N in range(n):
        w.writerow([N, _fmt(float(band.eigenvalues[N])), bool(band.trusted[N]),
                    _fmt(float(gaps[N]))])
    _emit(out.getvalue(), a.out)
    return EXIT_OK


def cmd_hill(cfg: ExperimentConfig, a) -> int:
    Q = directional(cfg.potential, cfg.delta)
    v = cfg["v"] if a.v is None else a.v
    js = a.j_list if a.j_list else list(range(0, 6))
    N = a.n_max or max(abs(j) for j in js) + 4 * max(Q.bandwidth, 1) + 24
    spec = hill_solve(Q, v, N)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["j", "mu", "phi_sq_0", "abs_phi_sq_1", "abs_phi_sq_2"])
    for j in js:
        P = phi_sq_coeffs(spec, j)
        w.writerow([j, _fmt(spec.mu(j)), _fmt(P[0].real), _fmt(abs(P[1])), _fmt(abs(P[2]))])
    _emit(out.getvalue(), a.out)
    return EXIT_OK


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _settings(cfg, a):
    return cfg.settings(slack=getattr(a, "slack", None), levels=getattr(a, "levels", None))


def _finish(rep: Report, stem: str) -> int:
    path = rep.write(stem)
    log.info("report written to %s", path)
    if rep.status == "failed":
        return rep.exit_code
    return EXIT_OK if rep.passed else EXIT_TOLERANCE


def _guarded(rep: Report, stem: str, body) -> int:
    t0 = time.perf_counter()
    try:
        body()
    except (BasisTooLarge, ConfigError, NotTwoMode, SelectionError) as exc:
        rep.status, rep.error, rep.exit_code = "failed", str(exc), EXIT_CONFIG
        log.error("%s", exc)
    except AcceptanceError as exc:
        rep.status, rep.error, rep.exit_code = "failed", str(exc), EXIT_TOLERANCE
        log.error("%s", exc)
    rep.timings["total_s"] = round(time.perf_counter() - t0, 3)
    return _finish(rep, stem)


def cmd_extract(cfg: ExperimentConfig, a) -> int:
    if a.delta is not None or a.b is not None or a.v is not None:
        raw = dict(cfg.raw)
        for key in ("delta", "b", "v"):
            if getattr(a, key) is not None:
                raw[key] = getattr(a, key)
        cfg = config_from_dict(raw)
    settings = _settings(cfg, a)
    rho0 = a.rho0 or cfg["rho0"]
    js = a.j if a.j else cfg["j"]
    rep = Report(cfg, "extract", {"invariant": a.invariant, "j": js, "rho0": rho0,
                                  "levels": settings.levels, "slack": settings.slack,
                                  "mu_source": a.mu_source})

    def body():
        if a.invariant == "mu":
            do_mu(cfg, rep, js, settings, rho0)
        elif a.invariant == "J":
            do_J(cfg, rep, js, settings, rho0, a.mu_source or cfg["mu_source"])
        elif a.invariant == "Jk":
            do_Jk(cfg, rep, settings, rho0)
        elif a.invariant in ("I16", "I20"):
            do_I16_I20(cfg, rep, settings, rho0, which=(a.invariant,))
        else:
            do_I17(cfg, rep)

    return _guarded(rep, f"extract-{a.invariant}", body)


def cmd_verify(cfg: ExperimentConfig, a) -> int:
    settings = _settings(cfg, a)
    rho0 = cfg["rho0"]
    rep = Report(cfg, "verify", {})

    def body():
        t = time.perf_counter()
        do_identities(cfg, rep, settings)
        rep.timings["identities_s"] = round(time.perf_counter() - t, 3)
        t = time.perf_counter()
        do_J(cfg, rep, cfg["j"], settings, rho0, cfg["mu_source"])
        rep.timings["pipeline_s"] = round(time.perf_counter() - t, 3)
        t = time.perf_counter()
        do_I17(cfg, rep)
        if directional(cfg.potential, cfg.delta).is_two_mode:
            do_I16_I20(cfg, rep, settings, rho0)
        else:
            do_Jk(cfg, rep, settings, rho0)
        rep.timings["expansions_s"] = round(time.perf_counter() - t, 3)

    return _guarded(rep, "verify", body)


def cmd_report(a) -> int:
    path = Path(a.report)
    try:
        data = json.loads(path.read_text())
        cfg = config_from_dict(data["config"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    print(f"{data['command']} on config {data['config_hash']}: {data['status']}")
    for r in data["results"]:
        est = r["estimate"]
        print(f"  {r['invariant']:<12} j={str(r['j']):<4} value={est['value']: .10g} "
              f"oracle={r['oracle']: .10g} rel={r['rel_error']:.3e} "
              f"{'ok' if r['passed'] else 'FAIL'}")
    for d in data.get("deviations", []):
        print(f"  deviation: {d['quantity']}: {d['reference']} -> {d['used']}")
    if not a.rerun:
        return EXIT_OK if data["status"] == "ok" else EXIT_TOLERANCE
    # re-execute the embedded command and compare the tables
    args = data.get("arguments", {})
    ns = argparse.Namespace(slack=args.get("slack"), levels=args.get("levels"), delta=None,
                            b=None, v=None, rho0=args.get("rho0"), j=args.get("j"),
                            invariant=args.get("invariant"),
                            mu_source=args.get("mu_source"))
    raw = dict(data["config"])
    raw["output"] = str(Path(a.rerun_dir or (Path(raw["output"]) / "rerun")))
    cfg = config_from_dict(raw)
    code = cmd_extract(cfg, ns) if data["command"] == "extract" else cmd_verify(cfg, ns)
    stem = f"extract-{ns.invariant}" if data["command"] == "extract" else "verify"
    fresh = (Path(raw["output"]) / f"{stem}.csv").read_text()
    old = (path.with_suffix(".csv")).read_text() if path.with_suffix(".csv").exists() else None
    same = old is not None and fresh == old
    print(f"rerun exit code {code}; tables {'identical' if same else 'differ'}")
    return code if same else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bloch-invariants",
                                description="Band functions and directional spectral invariants "
                                            "of periodic Schroedinger operators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", "-c", required=True, help="experiment JSON file")
        return sp

    b = with_config(sub.add_parser("bands", help="band functions at one quasimomentum"))
    b.add_argument("--t", type=float, nargs="+", required=True)
    b.add_argument("--cutoff", type=float, help="ball radius (local radius in shell mode)")
    b.add_argument("--window", type=float, help="energy-shell half-width (enables shell mode)")
    b.add_argument("--energy", type=float, help="shell centre (default |t|^2)")
    b.add_argument("--pad", type=float, default=4.0, help="half-width of the reported range")
    b.add_argument("--n-bands", type=int)
    b.add_argument("--out")

    h = with_config(sub.add_parser("hill", help="directional eigenvalues and |phi|^2 modes"))
    h.add_argument("--v", type=float)
    h.add_argument("--n-max", type=int)
    h.add_argument("--j-list", type=int, nargs="+")
    h.add_argument("--out")

    e = with_config(sub.add_parser("extract", help="extract one invariant and compare"))
    e.add_argument("--invariant", choices=INVARIANTS, required=True)
    e.add_argument("--delta", type=int, nargs="+")
    e.add_argument("--b", type=int, nargs="+")
    e.add_argument("--j", type=int, nargs="+")
    e.add_argument("--v", type=float)
    e.add_argument("--rho0", type=float)
    e.add_argument("--levels", type=int)
    e.add_argument("--slack", type=float)
    e.add_argument("--mu-source", choices=["pipeline", "oracle"], default=None,
                   help="mu subtracted in J (default from config: oracle)")

    vf = with_config(sub.add_parser("verify", help="identity checks and all oracle comparisons"))
    vf.add_argument("--levels", type=int)
    vf.add_argument("--slack", type=float)

    r = sub.add_parser("report", help="summarise (and optionally rerun) a saved report")
    r.add_argument("report")
    r.add_argument("--rerun", action="store_true")
    r.add_argument("--rerun-dir")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        if a.command == "report":
            return cmd_report(a)
        cfg = load_config(a.config)
        handler = {"bands": cmd_bands, "hill": cmd_hill, "extract": cmd_extract,
                   "verify": cmd_verify}[a.command]
        return handler(cfg, a)
    except (ConfigError, NotTwoMode, SelectionError, BasisTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
